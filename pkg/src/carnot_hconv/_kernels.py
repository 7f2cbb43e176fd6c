"""Pointwise hot loops: flux of the scalar p-Laplacian family, energy sums,
lagged-diffusion weights and membership ratios.

Each kernel has a numba ``@njit`` body and a pure numpy twin.  The numba path
is used when numba imports and ``CARNOT_HCONV_NO_JIT`` is unset (or ``0``).
All loops run sequentially so reductions are bit-reproducible.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "flux_scalar",
    "energy_scalar",
    "lagged_weights",
    "membership_ratios",
    "numpy_kernels",
    "numba_kernels",
]


# ---------------------------------------------------------------- numpy twins

def _flux_scalar_np(grads, a, p):
    if p == 2.0:
        return grads * a
    mag = np.sqrt(np.sum(grads * grads, axis=0))
    return grads * (a * mag ** (p - 2.0))


def _energy_scalar_np(grads, a, wv, p):
    mag2 = np.sum(grads * grads, axis=0)
    return float(np.sum(wv * a * mag2 ** (0.5 * p)) / p)


def _lagged_weights_np(grads, a, p, eps):
    if p == 2.0:
        return a.copy()
    mag2 = np.sum(grads * grads, axis=0)
    return a * (mag2 + eps * eps) ** (0.5 * (p - 2.0))


def _membership_ratios_np(dA, d, xi, eta, p):
    # rows are samples
    dn = np.sqrt(np.sum(d * d, axis=1))
    mono = np.sum(dA * d, axis=1) / dn**p
    growth = (1.0 + np.sum(xi * xi, axis=1) ** (0.5 * p) + np.sum(eta * eta, axis=1) ** (0.5 * p)) ** (
        (p - 2.0) / p
    )
    cont = np.sqrt(np.sum(dA * dA, axis=1)) / (growth * dn)
    return mono, cont


numpy_kernels = {
    "flux_scalar": _flux_scalar_np,
    "energy_scalar": _energy_scalar_np,
    "lagged_weights": _lagged_weights_np,
    "membership_ratios": _membership_ratios_np,
}


# ---------------------------------------------------------------- numba bodies

def _build_numba():
    from numba import njit

    @njit(cache=True, inline="always")
    def powe(s, e):
        # s >= 0; integer and half-integer exponents avoid the generic pow
        if e == 0.0:
            return 1.0
        if e == 0.5:
            return np.sqrt(s)
        if e == 1.0:
            return s
        if e == 1.5:
            return s * np.sqrt(s)
        if e == 2.0:
            return s * s
        return s**e

    @njit(cache=True)
    def flux_scalar(grads, a, p):
        m, N = grads.shape
        out = np.empty_like(grads)
        for k in range(N):
            if p == 2.0:
                fac = a[k]
            else:
                s = 0.0
                for i in range(m):
                    s += grads[i, k] * grads[i, k]
                fac = a[k] * powe(s, 0.5 * (p - 2.0))
            for i in range(m):
                out[i, k] = fac * grads[i, k]
        return out

    @njit(cache=True)
    def energy_scalar(grads, a, wv, p):
        m, N = grads.shape
        total = 0.0
        for k in range(N):
            s = 0.0
            for i in range(m):
                s += grads[i, k] * grads[i, k]
            total += wv[k] * a[k] * powe(s, 0.5 * p)
        return total / p

    @njit(cache=True)
    def lagged_weights(grads, a, p, eps):
        m, N = grads.shape
        out = np.empty(N)
        for k in range(N):
            if p == 2.0:
                out[k] = a[k]
            else:
                s = eps * eps
                for i in range(m):
                    s += grads[i, k] * grads[i, k]
                out[k] = a[k] * powe(s, 0.5 * (p - 2.0))
        return out

    @njit(cache=True)
    def membership_ratios(dA, d, xi, eta, p):
        S, m = d.shape
        mono = np.empty(S)
        cont = np.empty(S)
        for s in range(S):
            dd = 0.0
            ad = 0.0
            aa = 0.0
            x2 = 0.0
            e2 = 0.0
            for i in range(m):
                dd += d[s, i] * d[s, i]
                ad += dA[s, i] * d[s, i]
                aa += dA[s, i] * dA[s, i]
                x2 += xi[s, i] * xi[s, i]
                e2 += eta[s, i] * eta[s, i]
            dn = np.sqrt(dd)
            mono[s] = ad / dn**p
            growth = (1.0 + x2 ** (0.5 * p) + e2 ** (0.5 * p)) ** ((p - 2.0) / p)
            cont[s] = np.sqrt(aa) / (growth * dn)
        return mono, cont

    return {
        "flux_scalar": flux_scalar,
        "energy_scalar": energy_scalar,
        "lagged_weights": lagged_weights,
        "membership_ratios": membership_ratios,
    }


def _jit_requested() -> bool:
    return os.environ.get("CARNOT_HCONV_NO_JIT", "0").strip().lower() in ("", "0", "false", "no")


numba_kernels: dict | None = None
if _jit_requested():
    try:
        numba_kernels = _build_numba()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_kernels = None

_active = numba_kernels if numba_kernels is not None else numpy_kernels
BACKEND = "numba" if numba_kernels is not None else "numpy"


def flux_scalar(grads: np.ndarray, a: np.ndarray, p: float) -> np.ndarray:
    """``a * |g|**(p-2) * g`` per node; ``grads`` has shape ``(m, N)``."""
    return _active["flux_scalar"](np.ascontiguousarray(grads, dtype=float), a, float(p))


def energy_scalar(grads: np.ndarray, a: np.ndarray, wv: np.ndarray, p: float) -> float:
    """``sum_k wv_k a_k |g_k|**p / p``."""
    return float(_active["energy_scalar"](np.ascontiguousarray(grads, dtype=float), a, wv, float(p)))


def lagged_weights(grads: np.ndarray, a: np.ndarray, p: float, eps: float) -> np.ndarray:
    """Frozen diffusivity ``a (|g|^2 + eps^2)**((p-2)/2)``."""
    return _active["lagged_weights"](np.ascontiguousarray(grads, dtype=float), a, float(p), float(eps))


def membership_ratios(dA, d, xi, eta, p):
    """Per-sample monotonicity and growth-weighted Lipschitz ratios."""
    c = np.ascontiguousarray
    return _active["membership_ratios"](c(dA), c(d), c(xi), c(eta), float(p))
