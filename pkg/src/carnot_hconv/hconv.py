"""Oscillating-coefficient experiments: weak-convergence diagnostics of
solutions and momenta, the div-curl pairing, and effective-operator probes.

Nothing here certifies a limit.  Runs report pairings against a fixed family
of smooth interior test functions, Cauchy-style tail deltas along the scale
ladder, and gaps to an independent fine-grid reference where one exists.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .discretization import Grid, HorizontalField, ScalarField, calculus, dual_norm, lp_norm
from .groups import CarnotGroup
from .operators import (
    ConstantCoefficient,
    NodalOperator,
    OperatorSpec,
    linear_matrix,
    oscillate,
    verify_membership,
)
from .oracles import cell_effective_tensor
from .report import jsonable
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, WeakProblem, solve

__all__ = [
    "CutoffSpec",
    "SequenceConfig",
    "ScaleRecord",
    "HConvReport",
    "DivCurlReport",
    "EffectiveEstimate",
    "EffectiveMembershipReport",
    "run_hconv",
    "divcurl_check",
    "estimate_effective",
    "effective_membership",
    "richardson",
    "nodes_per_period",
    "default_test_functions",
    "RESOLUTION_WARN",
    "RESOLUTION_ERROR",
]

log = logging.getLogger(__name__)

RESOLUTION_WARN = 8.0
RESOLUTION_ERROR = 1.0
MIN_RAMP_CELLS = 3.0


# ------------------------------------------------------------------ cutoff

def _smoothstep5(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class CutoffSpec:
    """Tensor-product quintic ramp: 1 on the box ``inner``, 0 outside ``support``."""

    inner: tuple[tuple[float, float], ...]
    support: tuple[tuple[float, float], ...]

    def __post_init__(self):
        inner = tuple((float(a), float(b)) for a, b in self.inner)
        support = tuple((float(a), float(b)) for a, b in self.support)
        if len(inner) != len(support):
            raise ValueError("inner window and support differ in dimension")
        for (a, b), (sa, sb) in zip(inner, support):
            if not (sa < a < b < sb):
                raise ValueError("need support_lo < inner_lo < inner_hi < support_hi on every axis")
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "support", support)

    @classmethod
    def default(cls, grid: Grid, width: float | None = None) -> "CutoffSpec":
        """Ramp of ``width`` (default 1/8 of each side) starting ``width`` inside the boundary."""
        inner, support = [], []
        for a, b in grid.bounds:
            w = (b - a) / 8.0 if width is None else float(width)
            if not 0 < 4.0 * w < (b - a):
                raise ValueError(f"cutoff width {w} does not fit in [{a}, {b}]")
            support.append((a + w, b - w))
            inner.append((a + 2.0 * w, b - 2.0 * w))
        return cls(tuple(inner), tuple(support))

    @property
    def ramp_widths(self) -> tuple[float, ...]:
        return tuple(min(a - sa, sb - b) for (a, b), (sa, sb) in zip(self.inner, self.support))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.ones(points.shape[0])
        for j, ((a, b), (sa, sb)) in enumerate(zip(self.inner, self.support)):
            x = points[:, j]
            up = _smoothstep5((x - sa) / (a - sa))
            down = _smoothstep5((sb - x) / (sb - b))
            out *= np.minimum(up, down)
        return out

    def field(self, grid: Grid) -> ScalarField:
        self._check_grid(grid)
        return ScalarField(grid, self(grid.points))

    def check_resolution(self, grid: Grid) -> None:
        self._check_grid(grid)
        for w, h in zip(self.ramp_widths, grid.h):
            if w / h < MIN_RAMP_CELLS:
                raise ValueError(
                    f"cutoff ramp of width {w:g} spans {w / h:.2f} cells; at least {MIN_RAMP_CELLS:g} are needed"
                )

    def omega_weights(self, grid: Grid) -> np.ndarray:
        """Trapezoid weights of the inner window on the grid nodes (sum = |omega| when aligned)."""
        self._check_grid(grid)
        w = np.ones(grid.size)
        for j, ((a, b), axis, h) in enumerate(zip(self.inner, grid.axes, grid.h)):
            x = grid.points[:, j]
            wj = np.where((x > a + 1e-12 * h) & (x < b - 1e-12 * h), 1.0, 0.0)
            wj = np.where(np.isclose(x, a, rtol=0, atol=1e-9 * h) | np.isclose(x, b, rtol=0, atol=1e-9 * h), 0.5, wj)
            w *= wj * h
        if not w.sum() > 0:
            raise ValueError("inner window contains no grid nodes")
        return w

    def _check_grid(self, grid: Grid) -> None:
        if len(self.inner) != grid.ndim:
            raise ValueError("cutoff dimension does not match the grid")
        for (sa, sb), (lo, hi) in zip(self.support, grid.bounds):
            if not (lo < sa and sb < hi):
                raise ValueError("cutoff support must lie strictly inside the domain")


def default_test_functions(cutoff: CutoffSpec, count: int = 3) -> list[Callable]:
    """``phi``, then ``phi * (x_j - c_j) / L_j`` for the leading coordinates."""
    centre = [0.5 * (a + b) for a, b in cutoff.support]
    length = [b - a for a, b in cutoff.support]
    fns: list[Callable] = [cutoff]
    for j in range(min(count - 1, len(centre))):
        fns.append(lambda x, j=j: cutoff(x) * (np.atleast_2d(x)[:, j] - centre[j]) / length[j])
    return fns


def _const_rhs(value: float) -> Callable:
    return lambda x: np.full(np.atleast_2d(x).shape[0], float(value))


# ------------------------------------------------------------------ configuration

REFERENCES = ("auto", "homogenized", "direct", "none")


@dataclass
class SequenceConfig:
    """Oscillating family ``A^n = oscillate(base, n)`` on a fixed grid.

    ``rhs`` maps node coordinates to the density of ``f``; test functions map
    node coordinates to values and must vanish near the boundary; test
    sections are constant horizontal vectors multiplied by the cutoff.
    """

    group: CarnotGroup
    grid: Grid
    base: OperatorSpec
    scales: tuple[int, ...]
    rhs: Callable = field(default_factory=lambda: _const_rhs(1.0))
    rhs_label: str = "const:1"
    cutoff: CutoffSpec | None = None
    test_functions: Sequence[Callable] | None = None
    test_sections: Sequence[Sequence[float]] | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    membership_samples: int = 2000
    seed: int = 0
    reference: str = "auto"
    reference_refine: int = 4

    def __post_init__(self):
        sc = tuple(int(s) for s in self.scales)
        if not sc or any(s < 1 for s in sc) or any(b <= a for a, b in zip(sc, sc[1:])):
            raise ValueError("scales must be positive integers in strictly increasing order")
        if any(s != t for s, t in zip(sc, self.scales)):
            raise ValueError("scales must be integers")
        self.scales = sc
        if self.grid.ndim != self.group.n:
            raise ValueError("grid dimension does not match the group")
        if self.reference not in REFERENCES:
            raise ValueError(f"reference must be one of {REFERENCES}")
        if int(self.reference_refine) < 1:
            raise ValueError("reference_refine must be a positive integer")
        if self.cutoff is None:
            self.cutoff = CutoffSpec.default(self.grid)
        if self.test_functions is None:
            self.test_functions = default_test_functions(self.cutoff)
        if self.test_sections is None:
            self.test_sections = [tuple(float(v) for v in row) for row in np.eye(self.group.m)]
        for s in self.test_sections:
            if len(s) != self.group.m:
                raise ValueError("test sections must have m components")
        self._check_test_functions()

    def _check_test_functions(self):
        mask = ~self.grid.interior_mask
        for k, g in enumerate(self.test_functions):
            vals = np.asarray(g(self.grid.points), dtype=float)
            if np.any(vals[mask] != 0.0):
                raise ValueError(f"test function {k} does not vanish on the boundary")

    def f_field(self, grid: Grid | None = None) -> ScalarField:
        grid = grid or self.grid
        return ScalarField(grid, np.asarray(self.rhs(grid.points), dtype=float))

    def test_fields(self, grid: Grid | None = None) -> list[ScalarField]:
        grid = grid or self.grid
        return [ScalarField(grid, np.asarray(g(grid.points), dtype=float)) for g in self.test_functions]

    def section_fields(self, grid: Grid | None = None) -> list[HorizontalField]:
        grid = grid or self.grid
        phi = self.cutoff(grid.points)
        return [HorizontalField(grid, np.outer(np.asarray(s), phi)) for s in self.test_sections]


def nodes_per_period(spec: OperatorSpec, group: CarnotGroup, grid: Grid, n: int) -> float | None:
    """Smallest number of grid steps per oscillation period at scale ``n``."""
    coef = spec.coefficient
    if coef is None:
        return None
    axes = coef.oscillating_axes
    if not axes:
        return math.inf
    w = group.dilation_exponents
    return min((1.0 / n ** w[j]) / grid.h[j] for j in axes)


# ------------------------------------------------------------------ reports

@dataclass
class ScaleRecord:
    scale: int
    converged: bool
    iterations: int
    final_residual: float
    v_norm: float = float("nan")
    pairings: list = field(default_factory=list)
    momenta: list = field(default_factory=list)
    momentum_norm: float = float("nan")
    energy_slack: float = float("nan")
    solution_bound: float = float("nan")
    solution_slack: float = float("nan")
    momenta_bound: float = float("nan")
    momenta_slack: float = float("nan")
    nodes_per_period: float | None = None
    membership_violations: int = 0
    message: str = ""


@dataclass
class HConvReport:
    scales: list
    f_dual_norm: float
    tail_deltas: dict
    tail_max: list
    tail_ratio: float
    trend: dict
    reference: dict | None
    reference_gaps: list | None
    warnings: list

    def to_dict(self) -> dict:
        return jsonable(dataclasses.asdict(self))

    @property
    def bounds_hold(self) -> bool:
        return all(
            r.converged and r.energy_slack >= 0 and r.solution_slack >= 0 and r.momenta_slack >= 0
            for r in self.scales
        )


@dataclass
class DivCurlReport:
    scales: list
    values: list
    converged: list
    reference: float | None
    reference_kind: str
    noise_floor: float
    gaps: list | None
    inversions: int
    trend_ok: bool | None
    final_gap_ratio: float | None
    warnings: list

    def to_dict(self) -> dict:
        return jsonable(dataclasses.asdict(self))


# ------------------------------------------------------------------ reference solves

def _resolve_reference(cfg: SequenceConfig) -> str:
    if cfg.reference != "auto":
        return cfg.reference
    b = cfg.base
    if cfg.group.name.startswith("euclidean") and b.kind == "scalar_p_laplacian" and b.p == 2.0:
        return "homogenized"
    return "none"


def _reference_solution(cfg: SequenceConfig, kind: str, refine: int):
    """Fine-grid reference restricted to the coarse nodes: (u, D, E, info)."""
    grid = cfg.grid
    fine = grid.refine(refine)
    info: dict = {"kind": kind, "refine": refine, "fine_shape": list(fine.shape)}
    if kind == "homogenized":
        b = cfg.base
        if not (cfg.group.name.startswith("euclidean") and b.kind == "scalar_p_laplacian" and b.p == 2.0):
            raise ValueError("homogenized reference needs a Euclidean group and a linear scalar coefficient")
        cells = 256 if cfg.group.n <= 2 else 32
        eff = cell_effective_tensor(b.coefficient, cfg.group.n, cells=cells)
        eff = 0.5 * (eff + eff.T)
        spec = linear_matrix(eff, ConstantCoefficient(1.0))
        info["effective_tensor"] = eff.tolist()
    elif kind == "direct":
        spec = oscillate(cfg.base, cfg.scales[-1])
    else:
        raise ValueError(f"unknown reference kind {kind!r}")
    u, rep = solve(WeakProblem(cfg.group, fine, spec, cfg.f_field(fine)), tol=cfg.tol, max_iter=cfg.max_iter)
    if not rep.converged:
        raise RuntimeError(f"reference solve failed: {rep.message}")
    calc = calculus(cfg.group, fine)
    E = calc.grad(u.values)
    D = NodalOperator(spec, cfg.group, fine.points).flux(E)
    idx = grid.coarse_index(fine)
    return u.values[idx], D[:, idx], E[:, idx], info


def _reference_with_noise(cfg: SequenceConfig, kind: str, functional: Callable):
    """Reference values of ``functional(u, D, E)`` and their two-resolution noise floor."""
    r = int(cfg.reference_refine)
    u, D, E, info = _reference_solution(cfg, kind, r)
    val = np.asarray(functional(u, D, E), dtype=float)
    if r >= 2:
        u2, D2, E2, _ = _reference_solution(cfg, kind, r // 2)
        noise = float(np.max(np.abs(val - np.asarray(functional(u2, D2, E2), dtype=float))))
    else:
        noise = float("nan")
    info["noise_floor"] = noise
    return val, info


# ------------------------------------------------------------------ run_hconv

def _check_scale(cfg: SequenceConfig, spec: OperatorSpec, n: int, warnings: list) -> tuple[float | None, int]:
    npp = nodes_per_period(spec, cfg.group, cfg.grid, n)
    if npp is not None and npp < RESOLUTION_ERROR:
        raise ValueError(f"scale {n}: oscillation period spans {npp:.3g} grid steps (unresolved)")
    if npp is not None and npp < RESOLUTION_WARN:
        msg = f"scale {n}: only {npp:.3g} grid steps per oscillation period (< {RESOLUTION_WARN:g})"
        log.warning(msg)
        warnings.append(msg)
    mem = verify_membership(spec, cfg.group, cfg.grid, cfg.membership_samples, cfg.seed)
    if mem.violations:
        raise ValueError(f"scale {n}: oscillated operator fails membership ({mem.violations} violations)")
    return npp, mem.violations


def _bounds(spec: OperatorSpec, f_dual: float, measure: float) -> tuple[float, float]:
    p, a, b = spec.p, spec.alpha, spec.beta
    pc = spec.p_conj
    sol = (f_dual / a) ** (1.0 / (p - 1.0))
    mom = (b / a ** (1.0 / (p - 1.0))) * (measure + (1.0 / a) ** pc * f_dual**pc) ** ((p - 2.0) / p) * f_dual ** (
        1.0 / (p - 1.0)
    )
    return sol, mom


def run_hconv(cfg: SequenceConfig, fields_out: dict | None = None) -> HConvReport:
    """Solve along the scale ladder and collect weak-convergence diagnostics.

    Converged solutions are stored in ``fields_out`` (keyed by scale) when given.
    """
    group, grid = cfg.group, cfg.grid
    calc = calculus(group, grid)
    wv = calc.wv
    f = cfg.f_field()
    gs = cfg.test_fields()
    psis = cfg.section_fields()
    warnings: list = []
    f_dual = dual_norm(f, group, cfg.base.p, tol=cfg.tol)
    sol_bound, mom_bound = _bounds(cfg.base, f_dual, grid.measure)

    records: list[ScaleRecord] = []
    for n in cfg.scales:
        spec = oscillate(cfg.base, n)
        npp, nviol = _check_scale(cfg, spec, n, warnings)
        u, rep = solve(WeakProblem(group, grid, spec, f), tol=cfg.tol, max_iter=cfg.max_iter)
        rec = ScaleRecord(
            scale=n,
            converged=rep.converged,
            iterations=rep.iterations,
            final_residual=rep.final_residual,
            nodes_per_period=npp,
            membership_violations=nviol,
            message=rep.message,
        )
        if rep.converged:
            D = NodalOperator(spec, group, grid.points).flux(calc.grad(u.values))
            mom_norm = lp_norm(HorizontalField(grid, D), spec.p_conj)
            rec.v_norm = rep.v_norm_u
            rec.pairings = [float(np.sum(wv * u.values * g.values)) for g in gs]
            rec.momenta = [float(np.sum(wv * np.sum(D * psi.values, axis=0))) for psi in psis]
            rec.momentum_norm = mom_norm
            rec.energy_slack = rep.energy_pairing + 10.0 * cfg.tol - spec.alpha * rep.v_norm_u**spec.p
            rec.solution_bound = sol_bound
            rec.solution_slack = sol_bound * (1.0 + 1e-6) - rep.v_norm_u
            rec.momenta_bound = mom_bound
            rec.momenta_slack = mom_bound * (1.0 + 1e-6) - mom_norm
            if fields_out is not None:
                fields_out[n] = u
        else:
            warnings.append(f"scale {n}: solver did not converge ({rep.message}); scale skipped")
        records.append(rec)

    done = [r for r in records if r.converged]
    tail_deltas: dict = {}
    tail_max: list = []
    if len(done) >= 2:
        last = done[-1]
        for r in done[:-1]:
            d = [abs(a - b) for a, b in zip(r.pairings, last.pairings)]
            tail_deltas[str(r.scale)] = d
            tail_max.append(max(d))
    scale_pair = max((abs(v) for r in done for v in r.pairings), default=0.0)
    noise = 10.0 * cfg.tol * max(scale_pair, 1e-300)
    increases = sum(1 for a, b in zip(tail_max, tail_max[1:]) if b > a + noise)
    tail_ratio = tail_max[-1] / tail_max[0] if len(tail_max) >= 1 and tail_max[0] > 0 else float("nan")
    trend = {
        "noise_floor": noise,
        "increases": increases,
        "nonincreasing": increases == 0,
    }

    reference = None
    gaps = None
    kind = _resolve_reference(cfg)
    if kind != "none" and done:
        def functional(u, D, E):
            return [float(np.sum(wv * u * g.values)) for g in gs] + [
                float(np.sum(wv * np.sum(D * psi.values, axis=0))) for psi in psis
            ]

        vals, info = _reference_with_noise(cfg, kind, functional)
        k = len(gs)
        info["pairings"] = vals[:k].tolist()
        info["momenta"] = vals[k:].tolist()
        reference = info
        gaps = []
        for r in done:
            gp = [abs(a - b) for a, b in zip(r.pairings, info["pairings"])]
            gm = [abs(a - b) for a, b in zip(r.momenta, info["momenta"])]
            gaps.append({"scale": r.scale, "pairing_gap": max(gp), "momenta_gap": max(gm)})

    return HConvReport(
        scales=records,
        f_dual_norm=f_dual,
        tail_deltas=tail_deltas,
        tail_max=tail_max,
        tail_ratio=tail_ratio,
        trend=trend,
        reference=reference,
        reference_gaps=gaps,
        warnings=warnings,
    )


# ------------------------------------------------------------------ div-curl

def divcurl_check(cfg: SequenceConfig, phi: ScalarField | Callable | None = None) -> DivCurlReport:
    """``I_n = int <D^n, E^n> phi`` with ``E^n = grad u_n``, ``D^n = A^n(., E^n)``."""
    group, grid = cfg.group, cfg.grid
    if phi is None:
        phi_vals = cfg.cutoff(grid.points)
    elif isinstance(phi, ScalarField):
        if phi.grid != grid:
            raise ValueError("phi lives on a different grid")
        phi_vals = phi.values
    else:
        phi_vals = np.asarray(phi(grid.points), dtype=float)
    if np.any(phi_vals[~grid.interior_mask] != 0.0):
        raise ValueError("phi must be supported in the interior (non-zero on the boundary shell)")
    calc = calculus(group, grid)
    wv = calc.wv
    f = cfg.f_field()
    warnings: list = []
    values, conv = [], []
    for n in cfg.scales:
        spec = oscillate(cfg.base, n)
        _check_scale(cfg, spec, n, warnings)
        u, rep = solve(WeakProblem(group, grid, spec, f), tol=cfg.tol, max_iter=cfg.max_iter)
        conv.append(rep.converged)
        if not rep.converged:
            values.append(float("nan"))
            warnings.append(f"scale {n}: solver did not converge ({rep.message}); scale skipped")
            continue
        E = calc.grad(u.values)
        D = NodalOperator(spec, group, grid.points).flux(E)
        values.append(float(np.sum(wv * phi_vals * np.sum(D * E, axis=0))))

    kind = _resolve_reference(cfg)
    ref, noise, gaps, inv, trend_ok, ratio = None, float("nan"), None, 0, None, None
    if kind != "none":
        val, info = _reference_with_noise(
            cfg, kind, lambda u, D, E: [float(np.sum(wv * phi_vals * np.sum(D * E, axis=0)))]
        )
        ref = float(val[0])
        noise = info["noise_floor"]
        gaps = [abs(v - ref) if math.isfinite(v) else float("nan") for v in values]
        good = [g for g in gaps if math.isfinite(g)]
        floor = noise if math.isfinite(noise) else 0.0
        ups = [(a, b) for a, b in zip(good, good[1:]) if b > a]
        inv = len(ups)
        trend_ok = len(ups) == 0 or (len(ups) == 1 and ups[0][1] - ups[0][0] <= floor)
        ratio = good[-1] / abs(ref) if good and ref != 0 else None
    return DivCurlReport(
        scales=list(cfg.scales),
        values=values,
        converged=conv,
        reference=ref,
        reference_kind=kind,
        noise_floor=noise,
        gaps=gaps,
        inversions=inv,
        trend_ok=trend_ok,
        final_gap_ratio=ratio,
        warnings=warnings,
    )


# ------------------------------------------------------------------ effective operator

def richardson(scales: Sequence[float], values) -> tuple[np.ndarray, list, np.ndarray]:
    """Extrapolate ``y(s) = y_inf + C s^-k`` fitted on the last three scales.

    Works componentwise.  Returns ``(limit, exponents, fit_residual)``; a
    component whose last two differences do not shrink geometrically keeps
    its last value (exponent ``None``).  The fit residual is the largest
    misfit of the model at earlier scales (0 with only three scales).
    """
    s = np.asarray(scales, dtype=float)
    Y = np.asarray(values, dtype=float)
    vec = Y.ndim == 2
    Y = Y.reshape(len(s), -1)
    limit = Y[-1].copy()
    resid = np.zeros(Y.shape[1])
    exps: list = [None] * Y.shape[1]
    if len(s) < 3:
        return (limit if vec else limit[0]), exps, (resid if vec else resid[0])
    s1, s2, s3 = s[-3:]
    for c in range(Y.shape[1]):
        y1, y2, y3 = Y[-3:, c]
        d1, d2 = y2 - y1, y3 - y2
        tiny = 1e-13 * max(1.0, float(np.max(np.abs(Y[:, c]))))
        if abs(d1) <= tiny or abs(d2) <= tiny:
            continue
        r = d2 / d1
        if not 0.0 < r < 1.0:
            continue

        def ratio(k):
            return (s3**-k - s2**-k) / (s2**-k - s1**-k) - r

        if np.isclose(s2 / s1, s3 / s2):
            k = -math.log(r) / math.log(s2 / s1)
        else:
            lo, hi = 1e-8, 60.0
            if ratio(lo) * ratio(hi) > 0:
                continue
            k = brentq(ratio, lo, hi, xtol=1e-14)
        C = d2 / (s3**-k - s2**-k)
        limit[c] = y3 - C * s3**-k
        exps[c] = float(k)
        if len(s) > 3:
            model = limit[c] + C * s[:-3] ** -k
            resid[c] = float(np.max(np.abs(model - Y[:-3, c])))
    return (limit if vec else limit[0]), exps, (resid if vec else resid[0])


@dataclass
class EffectiveEstimate:
    xi: list
    scales: list
    momenta: list
    converged: list
    extrapolated: list
    exponents: list
    fit_residual: list
    uncertainty: float
    slacks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable(dataclasses.asdict(self))


@dataclass
class EffectiveMembershipReport:
    p: float
    alpha: float
    beta: float
    pairs: list
    worst_slack: dict
    violations: dict

    def to_dict(self) -> dict:
        return jsonable(dataclasses.asdict(self))

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())


def estimate_effective(
    cfg: SequenceConfig, probes: Sequence[Sequence[float]], allow_duplicates: bool = False
) -> list[EffectiveEstimate]:
    """omega-averaged momenta ``A^n(., xi + grad z_n)`` along the scale ladder.

    ``z_n`` vanishes on the boundary and solves
    ``-div_G(A^n(., xi + grad_G z_n)) = 0``, so ``v_n = <xi, pi(x)> + z_n``
    carries the affine datum of the probe.  The per-scale averages are
    Richardson-extrapolated to the A^eff(., xi) estimate.
    """
    group, grid = cfg.group, cfg.grid
    P = [tuple(float(v) for v in xi) for xi in probes]
    if not P:
        raise ValueError("need at least one probe")
    for xi in P:
        if len(xi) != group.m:
            raise ValueError(f"probe {xi} must have {group.m} components")
    if not allow_duplicates and len(set(P)) != len(P):
        raise ValueError("probes must be pairwise distinct")
    cfg.cutoff.check_resolution(grid)
    calc = calculus(group, grid)
    w_omega = cfg.cutoff.omega_weights(grid)
    w_omega = w_omega / w_omega.sum()
    zero = ScalarField.zeros(grid)
    warnings: list = []
    specs = {}
    for n in cfg.scales:
        specs[n] = oscillate(cfg.base, n)
        _check_scale(cfg, specs[n], n, warnings)

    out = []
    for xi in P:
        lift = HorizontalField.constant(grid, xi)
        moms, conv = [], []
        for n in cfg.scales:
            spec = specs[n]
            z, rep = solve(WeakProblem(group, grid, spec, zero, lift=lift), tol=cfg.tol, max_iter=cfg.max_iter)
            conv.append(rep.converged)
            D = NodalOperator(spec, group, grid.points).flux(lift.values + calc.grad(z.values))
            moms.append((D @ w_omega).tolist())
        good = [i for i, c in enumerate(conv) if c]
        sc = [cfg.scales[i] for i in good]
        vals = np.asarray([moms[i] for i in good]) if good else np.full((1, group.m), np.nan)
        lim, exps, res = richardson(sc, vals) if good else (vals[0], [None] * group.m, np.zeros(group.m))
        unc = float(np.max(np.abs(lim - vals[-1])) + np.max(res)) if good else float("nan")
        out.append(
            EffectiveEstimate(
                xi=list(xi),
                scales=list(cfg.scales),
                momenta=moms,
                converged=conv,
                extrapolated=[float(v) for v in np.atleast_1d(lim)],
                exponents=exps,
                fit_residual=[float(v) for v in np.atleast_1d(res)],
                uncertainty=unc,
            )
        )
    if len(out) >= 2:
        mem = effective_membership(out, cfg.base.alpha, cfg.base.beta, cfg.base.p)
        for pair in mem.pairs:
            for i in (pair["i"], pair["j"]):
                sl = out[i].slacks
                sl["a"] = min(sl.get("a", math.inf), pair["slack_a"])
                sl["b"] = min(sl.get("b", math.inf), pair["slack_b"])
    return out


def effective_membership(
    estimates: Sequence[EffectiveEstimate], alpha: float, beta: float, p: float
) -> EffectiveMembershipReport:
    """Check (a), (b) and the Lipschitz consequence on all probe pairs.

    (a) ``<dA, dxi> >= alpha |dxi|^p``
    (b) ``<dA, dxi> >= alpha / beta^p [1 + |xi2|^p + |xi1|^p]^(2-p) |dA|^p``
    (lip) ``|dA| <= beta [1 + |xi2|^p + |xi1|^p]^((p-2)/p) |dxi|``

    A pair counts as a violation only when the slack is more negative than
    the extrapolation uncertainty propagated through the inequality.
    """
    if len(estimates) < 2:
        raise ValueError("need at least two probes")
    pairs = []
    worst = {"a": math.inf, "b": math.inf, "lipschitz": math.inf}
    viol = {"a": 0, "b": 0, "lipschitz": 0}
    for i, j in itertools.combinations(range(len(estimates)), 2):
        e1, e2 = estimates[i], estimates[j]
        x1, x2 = np.asarray(e1.xi), np.asarray(e2.xi)
        A1, A2 = np.asarray(e1.extrapolated), np.asarray(e2.extrapolated)
        dA, dx = A2 - A1, x2 - x1
        ndx, ndA = float(np.linalg.norm(dx)), float(np.linalg.norm(dA))
        unc = (e1.uncertainty if math.isfinite(e1.uncertainty) else 0.0) + (
            e2.uncertainty if math.isfinite(e2.uncertainty) else 0.0
        )
        growth = 1.0 + np.linalg.norm(x2) ** p + np.linalg.norm(x1) ** p
        inner = float(dA @ dx)
        sa = inner - alpha * ndx**p
        sb = inner - alpha / beta**p * growth ** (2.0 - p) * ndA**p
        sl = beta * growth ** ((p - 2.0) / p) * ndx - ndA
        # first-order propagation of the estimate uncertainty
        ta = unc * ndx + 1e-12 * max(abs(inner), 1.0)
        tb = ta + alpha / beta**p * growth ** (2.0 - p) * p * max(ndA, unc) ** (p - 1.0) * unc
        tl = unc + 1e-12 * max(ndA, 1.0)
        sa, sb, sl = float(sa), float(sb), float(sl)
        pairs.append({"i": i, "j": j, "slack_a": sa, "slack_b": sb, "slack_lipschitz": sl,
                      "tolerance_a": ta, "tolerance_b": tb, "tolerance_lipschitz": tl})
        worst["a"] = min(worst["a"], sa)
        worst["b"] = min(worst["b"], sb)
        worst["lipschitz"] = min(worst["lipschitz"], sl)
        viol["a"] += int(sa < -ta)
        viol["b"] += int(sb < -tb)
        viol["lipschitz"] += int(sl < -tl)
    return EffectiveMembershipReport(p=p, alpha=alpha, beta=beta, pairs=pairs, worst_slack=worst, violations=viol)
