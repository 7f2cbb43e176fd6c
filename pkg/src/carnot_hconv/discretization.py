"""Discrete intrinsic calculus on a uniform box grid.

Nodal values are stored as flat arrays in row-major (C) order over
``grid.shape``; horizontal fields have shape ``(m, N)``.

Each partial derivative uses centered differences at nodes that are interior
along its axis and the first-order one-sided difference at the two end nodes.
Together with the trapezoid-weighted nodal inner product this is a
summation-by-parts pair, so the divergence, defined as the negative adjoint
of the gradient on Dirichlet fields, annihilates constant fields in the
interior and the scheme is second-order accurate.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache, reduce

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .groups import CarnotGroup

__all__ = [
    "Grid",
    "ScalarField",
    "HorizontalField",
    "Calculus",
    "calculus",
    "grad_G",
    "div_G",
    "v_norm",
    "pairing",
    "field_pairing",
    "dual_norm",
    "lp_norm",
]


@dataclass(frozen=True)
class Grid:
    """Uniform box mesh ``prod_j [a_j, b_j]`` with ``shape[j]`` nodes per axis."""

    bounds: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        shape = tuple(int(n) for n in self.shape)
        if len(bounds) != len(shape):
            raise ValueError("bounds and shape must have the same length")
        for (a, b), n in zip(bounds, shape):
            if not b > a:
                raise ValueError(f"empty interval [{a}, {b}]")
            if n < 3:
                raise ValueError(f"grid needs at least 3 nodes per axis, got {n}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def unit(cls, ndim: int, nodes: int) -> "Grid":
        return cls(((0.0, 1.0),) * ndim, (nodes,) * ndim)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for (a, b), n in zip(self.bounds, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        """Lebesgue measure of the box (equals the sum of quadrature weights)."""
        return float(np.prod([b - a for a, b in self.bounds]))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, n) for (a, b), n in zip(self.bounds, self.shape))

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        masks = []
        for n in self.shape:
            m = np.ones(n, dtype=bool)
            m[0] = m[-1] = False
            masks.append(m)
        return reduce(np.logical_and.outer, masks).ravel() if self.ndim > 1 else masks[0]

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid factors (1/2 per boundary axis), without the cell volume."""
        ws = []
        for n in self.shape:
            w = np.ones(n)
            w[0] = w[-1] = 0.5
            ws.append(w)
        return reduce(np.multiply.outer, ws).ravel() if self.ndim > 1 else ws[0]

    @cached_property
    def quad_weights(self) -> np.ndarray:
        return self.cell_volume * self.weights

    def refine(self, factor: int) -> "Grid":
        return Grid(self.bounds, tuple((n - 1) * factor + 1 for n in self.shape))

    def coarse_index(self, fine: "Grid") -> np.ndarray:
        """Indices into ``fine`` of the nodes of this grid (``fine`` must be a refinement)."""
        idx = []
        for n, nf in zip(self.shape, fine.shape):
            if (nf - 1) % (n - 1):
                raise ValueError("fine grid is not a refinement of this grid")
            idx.append(np.arange(n) * ((nf - 1) // (n - 1)))
        mesh = np.meshgrid(*idx, indexing="ij")
        return np.ravel_multi_index(tuple(c.ravel() for c in mesh), fine.shape)


@dataclass(eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def from_function(cls, grid: Grid, fn, dirichlet: bool = False) -> "ScalarField":
        vals = np.asarray(fn(grid.points), dtype=float).reshape(-1)
        if dirichlet:
            vals = np.where(grid.interior_mask, vals, 0.0)
        return cls(grid, vals)

    @property
    def is_dirichlet(self) -> bool:
        return bool(np.all(self.values[~self.grid.interior_mask] == 0.0))

    def masked(self) -> "ScalarField":
        return ScalarField(self.grid, np.where(self.grid.interior_mask, self.values, 0.0))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def _check(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._check(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._check(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._check(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(eq=False)
class HorizontalField:
    grid: Grid
    values: np.ndarray  # (m, N)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.size:
            raise ValueError(f"horizontal field must have shape (m, {self.grid.size}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, grid: Grid, xi) -> "HorizontalField":
        xi = np.asarray(xi, dtype=float)
        return cls(grid, np.repeat(xi[:, None], grid.size, axis=1))

    def __sub__(self, other: "HorizontalField") -> "HorizontalField":
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return HorizontalField(self.grid, self.values - other.values)

    def __mul__(self, s):
        s = s.values if isinstance(s, ScalarField) else s
        return HorizontalField(self.grid, self.values * s)

    __rmul__ = __mul__


def _d1(n: int, h: float) -> sp.csr_matrix:
    main = np.zeros(n)
    upper = np.full(n - 1, 0.5 / h)
    lower = np.full(n - 1, -0.5 / h)
    main[0], upper[0] = -1.0 / h, 1.0 / h
    main[-1], lower[-1] = 1.0 / h, -1.0 / h
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


class Calculus:
    """Assembled gradient, divergence and sub-Laplacian for one (group, grid)."""

    def __init__(self, group: CarnotGroup, grid: Grid):
        if group.n != grid.ndim:
            raise ValueError(f"group {group} has dimension {group.n}, grid has {grid.ndim} axes")
        self.group = group
        self.grid = grid
        eyes = [sp.identity(n, format="csr") for n in grid.shape]
        partials = []
        for j, (n, h) in enumerate(zip(grid.shape, grid.h)):
            factors = list(eyes)
            factors[j] = _d1(n, h)
            partials.append(reduce(lambda A, B: sp.kron(A, B, format="csr"), factors))
        pts = grid.points
        rows = []
        for i in range(group.m):
            Gi = sp.csr_matrix((grid.size, grid.size))
            for j, c in enumerate(group.coeff[i]):
                if c.is_zero:
                    continue
                if c.degree == 0:
                    Gi = Gi + c.terms[0][1] * partials[j]
                else:
                    Gi = Gi + sp.diags(c(pts)) @ partials[j]
            rows.append(Gi)
        self.G = sp.vstack(rows, format="csr")
        self.interior = grid.interior_index
        self.G_int = self.G[:, self.interior].tocsr()
        self.GT_int = self.G_int.T.tocsr()
        self.wv = grid.quad_weights
        self.wv_m = np.tile(self.wv, group.m)

    @property
    def m(self) -> int:
        return self.group.m

    @property
    def n_int(self) -> int:
        return self.interior.size

    @cached_property
    def laplacian(self) -> sp.csc_matrix:
        """Stiffness matrix of the (p = 2) sub-Laplacian on interior unknowns."""
        return (self.GT_int @ sp.diags(self.wv_m) @ self.G_int).tocsc()

    @cached_property
    def laplacian_lu(self):
        return spla.splu(self.laplacian)

    def stiffness(self, weights_m: np.ndarray) -> sp.csc_matrix:
        """``G^T diag(weights_m) G`` on interior unknowns; ``weights_m`` has length ``m N``."""
        return (self.GT_int @ sp.diags(weights_m) @ self.G_int).tocsc()

    def grad(self, u: np.ndarray) -> np.ndarray:
        return (self.G @ u).reshape(self.m, -1)

    def grad_int(self, u_int: np.ndarray) -> np.ndarray:
        return (self.G_int @ u_int).reshape(self.m, -1)

    def div(self, phi: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.size)
        out[self.interior] = -(self.GT_int @ (self.wv_m * phi.reshape(-1))) / self.wv[self.interior]
        return out

    def apply_adjoint(self, phi: np.ndarray) -> np.ndarray:
        """Functional ``v -> <phi, grad v>`` on interior unknowns."""
        return self.GT_int @ (self.wv_m * phi.reshape(-1))

    def functional(self, f: np.ndarray) -> np.ndarray:
        """Functional ``v -> <f, v>`` on interior unknowns."""
        return self.wv[self.interior] * f[self.interior]

    def density(self, functional: np.ndarray) -> np.ndarray:
        """Nodal density representing an interior functional (zero on the shell)."""
        out = np.zeros(self.grid.size)
        out[self.interior] = functional / self.wv[self.interior]
        return out

    def embed(self, u_int: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.size)
        out[self.interior] = u_int
        return out

    def dual2(self, functional: np.ndarray) -> float:
        """Dual norm of an interior functional for the p = 2 energy norm."""
        if not np.any(functional):
            return 0.0
        z = self.laplacian_lu.solve(functional)
        return float(np.sqrt(max(functional @ z, 0.0)))

    def v_norm_int(self, u_int: np.ndarray, p: float) -> float:
        g = self.grad_int(u_int)
        mag2 = np.sum(g * g, axis=0)
        return float(np.sum(self.wv * mag2 ** (0.5 * p)) ** (1.0 / p))


@lru_cache(maxsize=32)
def calculus(group: CarnotGroup, grid: Grid) -> Calculus:
    return Calculus(group, grid)


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 2.0 or not np.isfinite(p):
        raise ValueError(f"exponent must satisfy 2 <= p < inf, got {p}")
    return p


def grad_G(group: CarnotGroup, u: ScalarField) -> HorizontalField:
    calc = calculus(group, u.grid)
    return HorizontalField(u.grid, calc.grad(u.values))


def div_G(group: CarnotGroup, phi: HorizontalField) -> ScalarField:
    """Negative adjoint of :func:`grad_G` on Dirichlet fields; zero on the boundary shell."""
    if phi.m != group.m:
        raise ValueError(f"field has {phi.m} components, group {group} has m = {group.m}")
    calc = calculus(group, phi.grid)
    return ScalarField(phi.grid, calc.div(phi.values))


def pairing(f: ScalarField, u: ScalarField) -> float:
    if f.grid != u.grid:
        raise ValueError("fields live on different grids")
    return float(np.sum(f.grid.quad_weights * (f.values * u.values)))


def field_pairing(phi: HorizontalField, psi: HorizontalField) -> float:
    if phi.grid != psi.grid or phi.values.shape != psi.values.shape:
        raise ValueError("horizontal fields do not match")
    return float(np.sum(phi.grid.quad_weights * np.sum(phi.values * psi.values, axis=0)))


def lp_norm(phi: HorizontalField, q: float) -> float:
    """``(int |phi|^q)^(1/q)`` with the nodal quadrature."""
    mag = np.sqrt(np.sum(phi.values**2, axis=0))
    return float(np.sum(phi.grid.quad_weights * mag**q) ** (1.0 / q))


def v_norm(u: ScalarField, group: CarnotGroup, p: float) -> float:
    p = _check_p(p)
    return lp_norm(grad_G(group, u), p)


def dual_norm(f: ScalarField, group: CarnotGroup, p: float, tol: float = 1e-10) -> float:
    """Norm of ``v -> <f, v>`` in the dual of the discrete W^{1,p}_0.

    For p = 2 this is the energy norm of the Riesz representative.  For
    p > 2 it is ``||w||_V^(p-1)`` with ``w`` the solution of the discrete
    p-Laplace equation with datum ``f``.
    """
    p = _check_p(p)
    calc = calculus(group, f.grid)
    b = calc.functional(f.values)
    if not np.any(b):
        return 0.0
    if p == 2.0:
        return calc.dual2(b)
    from .solver import duality_map

    w = duality_map(calc, b, p, tol=tol)
    return calc.v_norm_int(w, p) ** (p - 1.0)
