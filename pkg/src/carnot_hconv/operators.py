"""Caratheodory maps A(x, xi), the experiment families, and a sampling
verifier for membership in the class M(alpha, beta).

Coefficients are periodic with unit period and are evaluated at the dilated
point ``delta_n(x)``, where ``n`` is the oscillation scale of the spec.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .groups import CarnotGroup, dilate

__all__ = [
    "Coefficient",
    "ConstantCoefficient",
    "Laminate",
    "Checkerboard",
    "SmoothCoefficient",
    "TabulatedCoefficient",
    "parse_coefficient",
    "OperatorSpec",
    "scalar_p_laplacian",
    "linear_matrix",
    "identity_operator",
    "custom_operator",
    "nominal_constants",
    "eval_operator",
    "NodalOperator",
    "MembershipReport",
    "verify_membership",
    "oscillate",
]

KINDS = ("linear_matrix", "scalar_p_laplacian", "custom")


# ------------------------------------------------------------------ coefficients

class Coefficient:
    """Scalar field on the unit period cell; subclasses are frozen dataclasses."""

    oscillating_axes: tuple[int, ...] = ()

    def __call__(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def bounds(self) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantCoefficient(Coefficient):
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("coefficient must be positive")

    def __call__(self, y):
        return np.full(np.atleast_2d(y).shape[0], float(self.value))

    @property
    def bounds(self):
        return (float(self.value), float(self.value))

    def __str__(self):
        return f"constant:{self.value:g}"


@dataclass(frozen=True)
class Laminate(Coefficient):
    """``a1`` where ``frac(y_axis) < 1/2``, else ``a2``."""

    a1: float
    a2: float
    axis: int = 0

    def __post_init__(self):
        if not (self.a1 > 0 and self.a2 > 0):
            raise ValueError("laminate phases must be positive")

    @property
    def oscillating_axes(self):
        return (self.axis,)

    def __call__(self, y):
        y = np.atleast_2d(y)
        frac = y[:, self.axis] - np.floor(y[:, self.axis])
        return np.where(frac < 0.5, float(self.a1), float(self.a2))

    @property
    def bounds(self):
        return (min(self.a1, self.a2), max(self.a1, self.a2))

    def __str__(self):
        return f"laminate:{self.a1:g},{self.a2:g}"


@dataclass(frozen=True)
class Checkerboard(Coefficient):
    a1: float
    a2: float
    axes: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if not (self.a1 > 0 and self.a2 > 0):
            raise ValueError("checkerboard phases must be positive")

    @property
    def oscillating_axes(self):
        return tuple(self.axes)

    def __call__(self, y):
        y = np.atleast_2d(y)
        parity = np.zeros(y.shape[0], dtype=np.int64)
        for j in self.axes:
            parity += np.floor(2.0 * y[:, j]).astype(np.int64)
        return np.where(parity % 2 == 0, float(self.a1), float(self.a2))

    @property
    def bounds(self):
        return (min(self.a1, self.a2), max(self.a1, self.a2))

    def __str__(self):
        return f"checkerboard:{self.a1:g},{self.a2:g}"


@dataclass(frozen=True)
class SmoothCoefficient(Coefficient):
    """``1 + amp * prod_j sin(2 pi y_j)`` over the given axes."""

    amp: float
    axes: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if not 0.0 <= self.amp < 1.0:
            raise ValueError("smooth coefficient amplitude must lie in [0, 1)")

    @property
    def oscillating_axes(self):
        return tuple(self.axes) if self.amp else ()

    def __call__(self, y):
        y = np.atleast_2d(y)
        prod = np.ones(y.shape[0])
        for j in self.axes:
            prod = prod * np.sin(2.0 * np.pi * y[:, j])
        return 1.0 + self.amp * prod

    @property
    def bounds(self):
        return (1.0 - self.amp, 1.0 + self.amp)

    def __str__(self):
        return f"smooth:{self.amp:g}"


@dataclass(frozen=True)
class TabulatedCoefficient(Coefficient):
    """Piecewise-constant periodic table over the first ``table.ndim`` coordinates."""

    table: tuple = field(repr=False)
    source: str = ""

    @classmethod
    def load(cls, path: str | Path) -> "TabulatedCoefficient":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"coefficient table {path} not found")
        arr = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, delimiter=",", ndmin=1)
        arr = np.asarray(arr, dtype=float)
        if arr.size == 0 or not np.all(np.isfinite(arr)) or np.min(arr) <= 0:
            raise ValueError(f"coefficient table {path} must hold finite positive values")
        return cls(_freeze(arr), str(path))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.table, dtype=float)

    @property
    def oscillating_axes(self):
        return tuple(range(self.array.ndim))

    def __call__(self, y):
        y = np.atleast_2d(y)
        arr = self.array
        idx = []
        for j, n in enumerate(arr.shape):
            frac = y[:, j] - np.floor(y[:, j])
            idx.append(np.minimum((frac * n).astype(np.int64), n - 1))
        return arr[tuple(idx)]

    @property
    def bounds(self):
        arr = self.array
        return (float(arr.min()), float(arr.max()))

    def __str__(self):
        return f"file:{self.source}"


def _freeze(arr: np.ndarray):
    if arr.ndim == 1:
        return tuple(float(v) for v in arr)
    return tuple(_freeze(a) for a in arr)


def parse_coefficient(text: str, group: CarnotGroup) -> Coefficient:
    """Parse ``laminate:a1,a2``, ``checkerboard:a1,a2``, ``smooth:amp``,
    ``constant:c`` or ``file:<path>``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    horizontal = tuple(range(group.m))
    try:
        if kind == "file":
            return TabulatedCoefficient.load(arg.strip())
        nums = [float(v) for v in arg.split(",")] if arg.strip() else []
    except ValueError:
        raise ValueError(f"malformed coefficient {text!r}") from None
    if kind == "laminate" and len(nums) == 2:
        return Laminate(nums[0], nums[1])
    if kind == "checkerboard" and len(nums) == 2:
        return Checkerboard(nums[0], nums[1], horizontal)
    if kind == "smooth" and len(nums) == 1:
        return SmoothCoefficient(nums[0], horizontal)
    if kind in ("constant", "const") and len(nums) == 1:
        return ConstantCoefficient(nums[0])
    raise ValueError(
        f"malformed coefficient {text!r}; expected laminate:a1,a2 | checkerboard:a1,a2 | "
        "smooth:amp | constant:c | file:<path>"
    )


# ------------------------------------------------------------------ operator spec

@dataclass(frozen=True)
class OperatorSpec:
    """A map A(x, xi) with growth exponent ``p`` and declared constants.

    ``linear_matrix``: ``A(x, xi) = s(delta_n x) * M xi`` (p must be 2).
    ``scalar_p_laplacian``: ``A(x, xi) = a(delta_n x) |xi|^(p-2) xi``.
    ``custom``: ``rule(y, xi)`` with ``y`` the dilated points, rows = samples.
    """

    p: float
    alpha: float
    beta: float
    kind: str
    coefficient: Coefficient | None = None
    matrix: tuple[tuple[float, ...], ...] | None = None
    rule: Callable | None = None
    oscillation_scale: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if not (np.isfinite(self.p) and self.p >= 2.0):
            raise ValueError(f"exponent must satisfy 2 <= p < inf, got {self.p}")
        if not (0 < self.alpha <= self.beta):
            raise ValueError(f"need 0 < alpha <= beta, got alpha={self.alpha}, beta={self.beta}")
        if int(self.oscillation_scale) != self.oscillation_scale or self.oscillation_scale < 1:
            raise ValueError("oscillation scale must be a positive integer")
        if self.kind == "linear_matrix":
            if self.p != 2.0:
                raise ValueError("linear_matrix operators require p = 2")
            if self.matrix is None:
                raise ValueError("linear_matrix operators need a matrix")
        if self.kind != "custom":
            if self.coefficient is None:
                raise ValueError(f"{self.kind} operators need a coefficient")
            lo, _ = self.coefficient.bounds
            if not lo > 0:
                raise ValueError("coefficient lower bound must be positive")
        elif self.rule is None:
            raise ValueError("custom operators need a rule")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def is_linear(self) -> bool:
        return self.p == 2.0 and self.kind in ("linear_matrix", "scalar_p_laplacian")

    @property
    def matrix_array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    def describe(self) -> dict:
        out = {
            "kind": self.kind,
            "p": self.p,
            "alpha": self.alpha,
            "beta": self.beta,
            "scale": int(self.oscillation_scale),
        }
        if self.coefficient is not None:
            out["coefficient"] = str(self.coefficient)
        if self.matrix is not None:
            out["matrix"] = [list(r) for r in self.matrix]
        return out


def nominal_constants(kind: str, p: float, coefficient: Coefficient, matrix=None) -> tuple[float, float]:
    """Certified (alpha, beta) for the built-in families."""
    lo, hi = coefficient.bounds
    if kind == "scalar_p_laplacian":
        return lo * 2.0 ** (2.0 - p), hi * (p - 1.0) * 2.0 ** ((p - 2.0) * (p - 1.0) / p)
    if kind == "linear_matrix":
        M = np.asarray(matrix, dtype=float)
        lam = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
        if lam <= 0:
            raise ValueError("matrix symmetric part must be positive definite")
        return lo * lam, hi * float(np.linalg.norm(M, 2))
    raise ValueError(f"no nominal constants for kind {kind!r}")


def scalar_p_laplacian(p: float, coefficient: Coefficient | None = None, alpha=None, beta=None) -> OperatorSpec:
    coefficient = coefficient or ConstantCoefficient(1.0)
    a0, b0 = nominal_constants("scalar_p_laplacian", p, coefficient)
    return OperatorSpec(
        float(p),
        a0 if alpha is None else float(alpha),
        b0 if beta is None else float(beta),
        "scalar_p_laplacian",
        coefficient,
    )


def linear_matrix(matrix, coefficient: Coefficient | None = None, alpha=None, beta=None) -> OperatorSpec:
    coefficient = coefficient or ConstantCoefficient(1.0)
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    a0, b0 = nominal_constants("linear_matrix", 2.0, coefficient, M)
    return OperatorSpec(
        2.0,
        a0 if alpha is None else float(alpha),
        b0 if beta is None else float(beta),
        "linear_matrix",
        coefficient,
        matrix=tuple(tuple(float(v) for v in row) for row in M),
    )


def identity_operator(m: int) -> OperatorSpec:
    return linear_matrix(np.eye(m))


def custom_operator(rule: Callable, p: float, alpha: float, beta: float) -> OperatorSpec:
    return OperatorSpec(float(p), float(alpha), float(beta), "custom", rule=rule)


def oscillate(spec: OperatorSpec, n: int) -> OperatorSpec:
    """Same constants, coefficient sampled at ``delta_n(x)``."""
    if int(n) != n or n < 1:
        raise ValueError("oscillation scale must be a positive integer")
    if int(n) == spec.oscillation_scale:
        return spec
    return dataclasses.replace(spec, oscillation_scale=int(n))


# ------------------------------------------------------------------ evaluation

def _coefficient_at(spec: OperatorSpec, group: CarnotGroup, x: np.ndarray) -> np.ndarray:
    y = dilate(group, spec.oscillation_scale, x) if spec.oscillation_scale != 1 else x
    return spec.coefficient(y)


def eval_operator(spec: OperatorSpec, group: CarnotGroup, x, xi) -> np.ndarray:
    """``A(x, xi)`` for one point or a batch (rows of ``x`` and ``xi`` are paired)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    X = np.atleast_2d(x)
    XI = np.atleast_2d(xi)
    if X.shape[1] != group.n or XI.shape[1] != group.m:
        raise ValueError("point or vector has the wrong dimension for this group")
    if X.shape[0] == 1 and XI.shape[0] > 1:
        X = np.repeat(X, XI.shape[0], axis=0)
    if spec.kind == "custom":
        y = dilate(group, spec.oscillation_scale, X)
        out = np.asarray(spec.rule(y, XI), dtype=float).reshape(XI.shape)
    elif spec.kind == "linear_matrix":
        s = _coefficient_at(spec, group, X)
        out = s[:, None] * (XI @ spec.matrix_array.T)
    else:
        a = _coefficient_at(spec, group, X)
        out = _kernels.flux_scalar(XI.T, a, spec.p).T
    if not np.all(np.isfinite(out)):
        raise ValueError("operator produced non-finite values (spec defect)")
    return out[0] if single else out


class NodalOperator:
    """Operator frozen on the nodes of a grid: ``flux(grads)`` with ``grads`` of shape ``(m, N)``."""

    def __init__(self, spec: OperatorSpec, group: CarnotGroup, points: np.ndarray):
        self.spec = spec
        self.group = group
        self.points = points
        self.coef = None if spec.kind == "custom" else _coefficient_at(spec, group, points)

    @property
    def potential(self) -> bool:
        return self.spec.kind == "scalar_p_laplacian"

    def flux(self, grads: np.ndarray) -> np.ndarray:
        spec = self.spec
        if spec.kind == "scalar_p_laplacian":
            out = _kernels.flux_scalar(grads, self.coef, spec.p)
        elif spec.kind == "linear_matrix":
            out = self.coef * (spec.matrix_array @ grads)
        else:
            y = dilate(self.group, spec.oscillation_scale, self.points)
            out = np.asarray(spec.rule(y, grads.T), dtype=float).T
        return out

    def energy(self, grads: np.ndarray, wv: np.ndarray) -> float:
        return _kernels.energy_scalar(grads, self.coef, wv, self.spec.p)

    def lagged(self, grads: np.ndarray, eps: float) -> np.ndarray:
        return _kernels.lagged_weights(grads, self.coef, self.spec.p, eps)


# ------------------------------------------------------------------ membership

@dataclass
class MembershipReport:
    empirical_alpha: float
    empirical_beta: float
    violations: int
    violations_by_condition: dict
    sample_count: int
    rng_seed: int
    declared_alpha: float
    declared_beta: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# relative slack absorbing rounding in the sampled inequalities
MEMBERSHIP_RTOL = 1e-12


def _domain_bounds(domain) -> np.ndarray:
    bounds = getattr(domain, "bounds", domain)
    return np.asarray(bounds, dtype=float).reshape(-1, 2)


def verify_membership(
    spec: OperatorSpec,
    group: CarnotGroup,
    domain,
    n_samples: int,
    seed: int,
    chunk: int = 1 << 17,
) -> MembershipReport:
    """Sample conditions (i)-(iii) of the class against the declared constants.

    ``x`` is uniform in the box ``domain`` (a Grid or a bounds list), ``xi``
    and ``eta`` are isotropic with log-uniform magnitudes in [1e-3, 1e3].
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    box = _domain_bounds(domain)
    if box.shape[0] != group.n:
        raise ValueError("domain dimension does not match the group")
    rng = np.random.default_rng(seed)
    p, m = spec.p, group.m
    emp_alpha, emp_beta = np.inf, 0.0
    bad = {"i": 0, "ii": 0, "iii": 0}
    total_bad = 0
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((k, group.n))
        dirs = rng.standard_normal((2, k, m))
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        mags = 10.0 ** rng.uniform(-3.0, 3.0, size=(2, k, 1))
        xi, eta = dirs[0] * mags[0], dirs[1] * mags[1]
        a0 = eval_operator(spec, group, x, np.zeros((k, m)))
        dA = eval_operator(spec, group, x, xi) - eval_operator(spec, group, x, eta)
        mono, cont = _kernels.membership_ratios(dA, xi - eta, xi, eta, p)
        v_i = np.any(a0 != 0.0, axis=1)
        v_ii = mono < spec.alpha * (1.0 - MEMBERSHIP_RTOL)
        v_iii = cont > spec.beta * (1.0 + MEMBERSHIP_RTOL)
        bad["i"] += int(v_i.sum())
        bad["ii"] += int(v_ii.sum())
        bad["iii"] += int(v_iii.sum())
        total_bad += int((v_i | v_ii | v_iii).sum())
        emp_alpha = min(emp_alpha, float(mono.min()))
        emp_beta = max(emp_beta, float(cont.max()))
        done += k
    return MembershipReport(
        empirical_alpha=emp_alpha,
        empirical_beta=emp_beta,
        violations=total_bad,
        violations_by_condition=bad,
        sample_count=int(n_samples),
        rng_seed=int(seed),
        declared_alpha=spec.alpha,
        declared_beta=spec.beta,
    )
