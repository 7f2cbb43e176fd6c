"""Dirichlet solver for -div_G(A(x, grad_G u)) = f and the a-priori estimates.

Three iterations are available, all stopped on the p = 2 dual norm of the
residual relative to its value at ``u = 0``:

``pcg``
    conjugate gradients for symmetric linear operators, preconditioned by
    the exact inverse of the discrete sub-Laplacian (sparse LU);
``energy``
    descent on ``E(u) = int a |grad u|^p / p - f u`` for the scalar
    p-Laplacian family, with lagged-diffusivity search directions and a
    secant/Armijo line search;
``fixed_point``
    damped iteration ``u <- u - tau L^{-1} (A(u) - f)`` with Armijo
    backtracking on the residual norm; works for any operator in the class.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Calculus, Grid, HorizontalField, ScalarField, calculus, dual_norm
from .errors import ConvergenceError
from .groups import CarnotGroup
from .operators import NodalOperator, OperatorSpec, scalar_p_laplacian

__all__ = [
    "WeakProblem",
    "SolveReport",
    "solve",
    "residual_dual_norm",
    "duality_map",
    "apriori_check",
    "random_dirichlet_field",
    "random_datum",
    "EstimatesReport",
    "verify_estimates",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass
class WeakProblem:
    """Discrete ``-div_G(A(., lift + grad_G u)) = f`` with ``u = 0`` on the shell.

    ``lift`` is an optional background horizontal field (for instance the
    constant gradient of an affine function); it defaults to zero.
    """

    group: CarnotGroup
    grid: Grid
    spec: OperatorSpec
    f: ScalarField
    lift: HorizontalField | None = None

    def __post_init__(self):
        if self.f.grid != self.grid:
            raise ValueError("right-hand side lives on a different grid")
        if self.lift is not None and (self.lift.grid != self.grid or self.lift.m != self.group.m):
            raise ValueError("lift does not match the grid/group")


@dataclass
class SolveReport:
    method: str
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)
    final_residual: float = float("nan")
    energy_pairing: float = float("nan")
    v_norm_u: float = float("nan")
    wall_time: float = 0.0
    message: str = ""

    def to_dict(self, include_timing: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not include_timing:
            d.pop("wall_time")
        return d


class _Context:
    def __init__(self, problem: WeakProblem):
        self.problem = problem
        self.calc: Calculus = calculus(problem.group, problem.grid)
        self.op = NodalOperator(problem.spec, problem.group, problem.grid.points)
        self.b = self.calc.functional(problem.f.values)
        self.g0 = 0.0 if problem.lift is None else problem.lift.values

    def grads(self, u: np.ndarray) -> np.ndarray:
        return self.g0 + self.calc.grad_int(u)

    def residual(self, u: np.ndarray) -> np.ndarray:
        return self.calc.apply_adjoint(self.op.flux(self.grads(u))) - self.b


def _finish(ctx: _Context, u, method, converged, hist, t0, msg="") -> tuple[ScalarField, SolveReport]:
    calc = ctx.calc
    p = ctx.problem.spec.p
    full = calc.embed(u)
    rep = SolveReport(
        method=method,
        converged=bool(converged),
        iterations=len(hist) - 1 if hist else 0,
        residual_history=[float(r) for r in hist],
        final_residual=float(hist[-1]) if hist else 0.0,
        energy_pairing=float(ctx.b @ u),
        v_norm_u=calc.v_norm_int(u, p),
        wall_time=time.perf_counter() - t0,
        message=msg,
    )
    if not converged:
        log.warning("solve (%s) did not converge: %s", method, msg)
    return ScalarField(ctx.problem.grid, full), rep


def _pcg(ctx: _Context, u, tol, max_iter, scale):
    calc, spec = ctx.calc, ctx.problem.spec
    wv = calc.wv
    if spec.kind == "scalar_p_laplacian":
        K = calc.stiffness(np.tile(wv * ctx.op.coef, calc.m))
    else:
        M = spec.matrix_array
        sw = wv * ctx.op.coef
        blocks = [[sp.diags(M[k, l] * sw) if M[k, l] else None for l in range(calc.m)] for k in range(calc.m)]
        W = sp.bmat(blocks, format="csr")
        K = (calc.GT_int @ W @ calc.G_int).tocsr()
    rhs = ctx.b.copy()
    if ctx.problem.lift is not None:
        rhs -= calc.apply_adjoint(ctx.op.flux(ctx.problem.lift.values))
    lu = calc.laplacian_lu
    r = rhs - K @ u
    z = lu.solve(r)
    rz = float(r @ z)
    hist = [np.sqrt(max(rz, 0.0)) / scale]
    d = z.copy()
    for _ in range(max_iter):
        if hist[-1] <= tol:
            break
        Kd = K @ d
        step = rz / float(d @ Kd)
        u = u + step * d
        r = r - step * Kd
        z = lu.solve(r)
        rz_new = float(r @ z)
        if not np.isfinite(rz_new):
            return u - step * d, hist, False, "non-finite iterate"
        hist.append(np.sqrt(max(rz_new, 0.0)) / scale)
        d = z + (rz_new / rz) * d
        rz = rz_new
    # replace the recursive residual by the true one
    hist[-1] = calc.dual2(ctx.residual(u)) / scale
    ok = hist[-1] <= tol
    return u, hist, ok, "" if ok else f"max_iter={max_iter} reached"


def _line_minimize(dphi, slope0: float, rtol: float = 0.1, max_eval: int = 60) -> float | None:
    """Approximate minimizer of a convex function along a descent direction.

    Works from the derivative only: bracket the sign change of ``dphi`` and
    refine by Illinois regula falsi until ``|dphi| <= rtol |dphi(0)|``.
    Energy values are never compared, which keeps the search reliable once
    energy differences fall below rounding.
    """
    lo, flo = 0.0, slope0
    hi, fhi = 1.0, dphi(1.0)
    n = 1
    while fhi < 0:
        if abs(fhi) <= rtol * abs(slope0):
            return hi
        lo, flo = hi, fhi
        hi *= 4.0
        fhi = dphi(hi)
        n += 1
        if n > max_eval or not np.isfinite(fhi):
            return None
    if not np.isfinite(fhi):
        # overflow at the trial step: shrink until finite
        while not np.isfinite(fhi):
            hi *= 0.5
            fhi = dphi(hi)
            n += 1
            if n > max_eval:
                return None
        if fhi < 0:
            return hi
    side = 0
    while n < max_eval:
        t = (lo * fhi - hi * flo) / (fhi - flo)
        ft = dphi(t)
        n += 1
        if abs(ft) <= rtol * abs(slope0):
            return t
        if ft < 0:
            lo, flo = t, ft
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = t, ft
            if side == 1:
                flo *= 0.5
            side = 1
    return lo if lo > 0 else None


def _energy_descent(ctx: _Context, u, tol, max_iter, scale):
    calc, op = ctx.calc, ctx.op
    wv, b, m = calc.wv, ctx.b, calc.m
    g = ctx.grads(u)
    R = calc.apply_adjoint(op.flux(g)) - b
    hist = [calc.dual2(R) / scale]
    for _ in range(max_iter):
        if hist[-1] <= tol:
            return u, hist, True, ""
        mag2 = np.sum(g * g, axis=0)
        rms = float(np.sqrt(np.mean(mag2)))
        eps = 1e-3 * rms if rms > 0 else 1.0
        Mk = calc.stiffness(np.tile(wv * op.lagged(g, eps), m))
        d = -spla.splu(Mk).solve(R)
        gd = calc.grad_int(d)
        slope0 = float(R @ d)
        if not slope0 < 0:
            return u, hist, False, "search direction is not a descent direction"

        def dphi(t):
            return float(np.sum(wv * np.sum(op.flux(g + t * gd) * gd, axis=0)) - b @ d)

        tau = _line_minimize(dphi, slope0)
        if tau is None:
            return u, hist, False, "line search failed"
        u = u + tau * d
        g = g + tau * gd
        if not np.all(np.isfinite(g)):
            return u - tau * d, hist, False, "non-finite iterate"
        R = calc.apply_adjoint(op.flux(g)) - b
        hist.append(calc.dual2(R) / scale)
    ok = hist[-1] <= tol
    return u, hist, ok, "" if ok else f"max_iter={max_iter} reached"


def _fixed_point(ctx: _Context, u, tol, max_iter, scale):
    calc = ctx.calc
    lu = calc.laplacian_lu
    R = ctx.residual(u)
    hist = [calc.dual2(R) / scale]
    tau = 1.0
    for _ in range(max_iter):
        if hist[-1] <= tol:
            return u, hist, True, ""
        d = -lu.solve(R)
        tau = min(1.0, 2.0 * tau)
        while True:
            u_new = u + tau * d
            R_new = ctx.residual(u_new)
            if np.any(np.isnan(R_new)):
                return u, hist, False, "non-finite iterate"
            res_new = calc.dual2(R_new) / scale if np.all(np.isfinite(R_new)) else np.inf
            if res_new <= (1.0 - 1e-4 * tau) * hist[-1]:
                break
            tau *= 0.5
            if tau < 1e-12:
                return u, hist, False, "backtracking failed to reduce the residual"
        u, R = u_new, R_new
        hist.append(res_new)
    ok = hist[-1] <= tol
    return u, hist, ok, "" if ok else f"max_iter={max_iter} reached"


def _pick_method(spec: OperatorSpec) -> str:
    if spec.is_linear:
        if spec.kind == "linear_matrix":
            M = spec.matrix_array
            return "pcg" if np.allclose(M, M.T, rtol=0, atol=0) else "fixed_point"
        return "pcg"
    if spec.kind == "scalar_p_laplacian":
        return "energy"
    return "fixed_point"


_METHODS = {"pcg": _pcg, "energy": _energy_descent, "fixed_point": _fixed_point}


def solve(
    problem: WeakProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    u0: ScalarField | None = None,
    method: str = "auto",
) -> tuple[ScalarField, SolveReport]:
    """Solve the discrete Dirichlet problem.

    Returns the solution and a :class:`SolveReport`; a solve that stops
    early is reported with ``converged=False`` rather than raised.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    ctx = _Context(problem)
    if method == "auto":
        method = _pick_method(problem.spec)
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "energy" and not ctx.op.potential:
        raise ValueError("energy method needs a potential operator (scalar_p_laplacian)")
    if method == "pcg" and not problem.spec.is_linear:
        raise ValueError("pcg needs a linear operator (p = 2)")
    calc = ctx.calc
    scale = calc.dual2(ctx.residual(np.zeros(calc.n_int)))
    if scale == 0.0:
        return _finish(ctx, np.zeros(calc.n_int), method, True, [0.0], t0)
    if u0 is None:
        u = np.zeros(calc.n_int)
    else:
        if u0.grid != problem.grid:
            raise ValueError("initial iterate lives on a different grid")
        u = u0.values[calc.interior].copy()
    u, hist, ok, msg = _METHODS[method](ctx, u, tol, max_iter, scale)
    return _finish(ctx, u, method, ok, hist, t0, msg)


def residual_dual_norm(problem: WeakProblem, u: ScalarField, tol: float = DEFAULT_TOL) -> float:
    """``|| -div_G(A(., grad_G u)) - f ||`` in the dual of W^{1,p}_0."""
    if not u.is_dirichlet:
        raise ValueError("u must vanish on the boundary shell")
    ctx = _Context(problem)
    R = ctx.residual(u.values[ctx.calc.interior])
    r = ScalarField(problem.grid, ctx.calc.density(R))
    return dual_norm(r, problem.group, problem.spec.p, tol=tol)


def duality_map(calc: Calculus, functional: np.ndarray, p: float, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Interior values of ``w`` with ``-div(|grad w|^(p-2) grad w) = f`` (``f`` given as a functional)."""
    spec = scalar_p_laplacian(p)
    f = ScalarField(calc.grid, calc.density(functional))
    problem = WeakProblem(calc.group, calc.grid, spec, f)
    ctx = _Context(problem)
    scale = calc.dual2(functional)
    w, hist, ok, msg = _energy_descent(ctx, np.zeros(calc.n_int), tol, max_iter, scale)
    if not ok:
        raise ConvergenceError(f"duality-map solve failed: {msg}", residual=hist[-1])
    return w


def apriori_check(problem: WeakProblem, u: ScalarField, report: SolveReport, tol: float,
                  f_dual: float | None = None) -> dict:
    """Energy bound and solution bound for a computed solution.

    ``alpha ||u||^p <= <f, u> + 10 tol`` and
    ``||u|| <= (||f||_* / alpha)^(1/(p-1)) (1 + 1e-6)``.
    """
    spec = problem.spec
    p, alpha = spec.p, spec.alpha
    if f_dual is None:
        f_dual = dual_norm(problem.f, problem.group, p)
    lhs_energy = alpha * report.v_norm_u**p
    bound = (f_dual / alpha) ** (1.0 / (p - 1.0))
    return {
        "energy_lhs": lhs_energy,
        "energy_rhs": report.energy_pairing,
        "energy_ok": bool(lhs_energy <= report.energy_pairing + 10.0 * tol),
        "solution_norm": report.v_norm_u,
        "solution_bound": bound,
        "solution_ok": bool(report.v_norm_u <= bound * (1.0 + 1e-6)),
        "f_dual_norm": f_dual,
    }


# ------------------------------------------------------------------ estimates

def random_dirichlet_field(calc: Calculus, rng: np.random.Generator, p: float, amplitude: float) -> np.ndarray:
    """Interior white noise smoothed by one sub-Laplacian solve, scaled to ``||u||_V = amplitude``."""
    noise = rng.standard_normal(calc.n_int)
    u = calc.laplacian_lu.solve(calc.wv[calc.interior] * noise)
    return u * (amplitude / calc.v_norm_int(u, p))


def random_datum(calc: Calculus, rng: np.random.Generator, amplitude: float) -> ScalarField:
    """Interior white-noise density with p = 2 dual norm equal to ``amplitude``."""
    noise = np.zeros(calc.grid.size)
    noise[calc.interior] = rng.standard_normal(calc.n_int)
    s = calc.dual2(calc.functional(noise))
    return ScalarField(calc.grid, noise * (amplitude / s))


# relative slack for inequalities that hold exactly up to rounding / inner solves
ESTIMATE_RTOL_EXACT = 1e-10
# relative slack for (b), which also carries the outer solver tolerance
ESTIMATE_RTOL_SOLVE = 1e-6


@dataclass
class EstimatesReport:
    trials: int
    seed: int
    p: float
    alpha: float
    beta: float
    violations: dict
    worst_slack: dict
    worst_relative_slack: dict
    solver_failures: list
    apriori: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def ok(self) -> bool:
        return not any(self.violations.values()) and not self.solver_failures


def _rel(slack: float, *scales: float) -> float:
    s = max(max(abs(v) for v in scales), 1e-300)
    return slack / s


def verify_estimates(
    spec: OperatorSpec,
    group: CarnotGroup,
    grid: Grid,
    trials: int,
    seed: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> EstimatesReport:
    """Check the three a-priori estimates on random Dirichlet pairs and data.

    (a) ``<A(u) - A(v), u - v> >= alpha ||u - v||^p``
    (b) ``||A^-1 f - A^-1 g||^p <= (1/alpha)^p' ||f - g||_*^p'``
    (c) ``||A(u) - A(v)||_* <= beta [|Omega| + ||u||^p + ||v||^p]^((p-2)/p) ||u - v||``
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    calc = calculus(group, grid)
    op = NodalOperator(spec, group, grid.points)
    p, alpha, beta, pc = spec.p, spec.alpha, spec.beta, spec.p_conj
    rng = np.random.default_rng(seed)
    viol = {"a": 0, "b": 0, "c": 0}
    worst = {"a": np.inf, "b": np.inf, "c": np.inf}
    worst_rel = {"a": np.inf, "b": np.inf, "c": np.inf}
    failures = []
    apri = {"checked": 0, "energy_violations": 0, "solution_violations": 0,
            "worst_energy_slack": np.inf, "worst_solution_ratio": 0.0}

    def flux_of(u_int):
        return op.flux(calc.grad_int(u_int))

    for t in range(trials):
        amp_u, amp_v, amp_f, amp_g = 10.0 ** rng.uniform(-1.0, 1.0, size=4)
        u = random_dirichlet_field(calc, rng, p, amp_u)
        v = random_dirichlet_field(calc, rng, p, amp_v)
        f = random_datum(calc, rng, amp_f)
        g = random_datum(calc, rng, amp_g)

        # (a)
        Fu, Fv = flux_of(u), flux_of(v)
        du = calc.grad_int(u - v)
        lhs = float(np.sum(calc.wv * np.sum((Fu - Fv) * du, axis=0)))
        nuv = calc.v_norm_int(u - v, p)
        rhs = alpha * nuv**p
        slack = lhs - rhs
        worst["a"] = min(worst["a"], slack)
        worst_rel["a"] = min(worst_rel["a"], _rel(slack, lhs, rhs))
        if slack < -ESTIMATE_RTOL_EXACT * max(abs(lhs), rhs):
            viol["a"] += 1

        # (c)
        R = calc.apply_adjoint(Fu - Fv)
        lhs_c = dual_norm(ScalarField(grid, calc.density(R)), group, p, tol=tol)
        nu, nv = calc.v_norm_int(u, p), calc.v_norm_int(v, p)
        rhs_c = beta * (grid.measure + nu**p + nv**p) ** ((p - 2.0) / p) * nuv
        slack = rhs_c - lhs_c
        worst["c"] = min(worst["c"], slack)
        worst_rel["c"] = min(worst_rel["c"], _rel(slack, lhs_c, rhs_c))
        if slack < -ESTIMATE_RTOL_EXACT * max(lhs_c, rhs_c):
            viol["c"] += 1

        # (b)
        sols = []
        for datum in (f, g):
            problem = WeakProblem(group, grid, spec, datum)
            sol, rep = solve(problem, tol=tol, max_iter=max_iter)
            if not rep.converged:
                failures.append({"trial": t, "message": rep.message, "residual": rep.final_residual})
                break
            chk = apriori_check(problem, sol, rep, tol)
            apri["checked"] += 1
            apri["energy_violations"] += int(not chk["energy_ok"])
            apri["solution_violations"] += int(not chk["solution_ok"])
            apri["worst_energy_slack"] = min(apri["worst_energy_slack"], chk["energy_rhs"] - chk["energy_lhs"])
            if chk["solution_bound"] > 0:
                apri["worst_solution_ratio"] = max(apri["worst_solution_ratio"],
                                                   chk["solution_norm"] / chk["solution_bound"])
            sols.append(sol)
        if len(sols) < 2:
            continue
        lhs_b = calc.v_norm_int((sols[0] - sols[1]).values[calc.interior], p) ** p
        rhs_b = (1.0 / alpha) ** pc * dual_norm(f - g, group, p, tol=tol) ** pc
        slack = rhs_b - lhs_b
        worst["b"] = min(worst["b"], slack)
        worst_rel["b"] = min(worst_rel["b"], _rel(slack, lhs_b, rhs_b))
        if slack < -ESTIMATE_RTOL_SOLVE * max(lhs_b, rhs_b):
            viol["b"] += 1

    return EstimatesReport(
        trials=int(trials),
        seed=int(seed),
        p=p,
        alpha=alpha,
        beta=beta,
        violations=viol,
        worst_slack={k: float(v) for k, v in worst.items()},
        worst_relative_slack={k: float(v) for k, v in worst_rel.items()},
        solver_failures=failures,
        apriori={k: (float(v) if isinstance(v, float) else v) for k, v in apri.items()},
    )
