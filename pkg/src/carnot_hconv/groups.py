"""Concrete Carnot groups described by polynomial vector-field coefficients.

A group is stored as the table ``coeff[i][j]`` of polynomials such that the
horizontal field ``X_i = sum_j coeff[i][j](x) d/dx_j``.  Only the Euclidean
spaces and the first Heisenberg group ship as constructors, but any table of
this form is accepted by the discretization.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

__all__ = [
    "Polynomial",
    "CarnotGroup",
    "make_euclidean",
    "make_heisenberg",
    "horizontal_projection",
    "dilate",
    "apply_field",
    "bracket",
    "parse_group",
]


@dataclass(frozen=True)
class Polynomial:
    """Sparse multivariate polynomial ``sum c * x**e`` over R^n.

    ``terms`` is a sorted tuple of ``(exponents, coefficient)`` pairs with
    nonzero coefficients, which keeps instances hashable and comparable.
    """

    nvars: int
    terms: tuple[tuple[tuple[int, ...], float], ...] = ()

    @classmethod
    def from_dict(cls, nvars: int, mapping: dict) -> "Polynomial":
        clean = {}
        for exps, c in mapping.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent tuple {exps} does not have {nvars} entries")
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + float(c)
        return cls(nvars, tuple(sorted((e, c) for e, c in clean.items() if c != 0.0)))

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Polynomial":
        return cls.from_dict(nvars, {(0,) * nvars: c})

    @classmethod
    def coordinate(cls, nvars: int, j: int, c: float = 1.0) -> "Polynomial":
        e = [0] * nvars
        e[j] = 1
        return cls.from_dict(nvars, {tuple(e): c})

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        out = np.zeros(pts.shape[0])
        for exps, c in self.terms:
            mono = np.full(pts.shape[0], c)
            for j, e in enumerate(exps):
                if e:
                    mono = mono * pts[:, j] ** e
            out += mono
        return out if x.ndim == 2 else float(out[0])

    def _as_dict(self) -> dict:
        return dict(self.terms)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        d = self._as_dict()
        for e, c in other.terms:
            d[e] = d.get(e, 0.0) + c
        return Polynomial.from_dict(self.nvars, d)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, tuple((e, -c) for e, c in self.terms))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        d: dict = {}
        for (e1, c1), (e2, c2) in product(self.terms, other.terms):
            e = tuple(a + b for a, b in zip(e1, e2))
            d[e] = d.get(e, 0.0) + c1 * c2
        return Polynomial.from_dict(self.nvars, d)

    def diff(self, j: int) -> "Polynomial":
        d: dict = {}
        for e, c in self.terms:
            if e[j]:
                e2 = list(e)
                e2[j] -= 1
                d[tuple(e2)] = d.get(tuple(e2), 0.0) + c * e[j]
        return Polynomial.from_dict(self.nvars, d)


@dataclass(frozen=True)
class CarnotGroup:
    """Stratified group in exponential coordinates.

    Attributes
    ----------
    name : str
        Selector string, e.g. ``"euclidean:2"`` or ``"heisenberg1"``.
    layer_dims : tuple of int
        Dimensions ``m_1, ..., m_k`` of the layers.
    coeff : tuple of tuple of Polynomial
        ``m x n`` table; row ``i`` holds the components of ``X_i``.
    dilation_exponents : tuple of int
        Homogeneous weight of each coordinate (its layer index).
    """

    name: str
    layer_dims: tuple[int, ...]
    coeff: tuple[tuple[Polynomial, ...], ...]
    dilation_exponents: tuple[int, ...]

    def __post_init__(self):
        n, m = self.n, self.m
        if len(self.coeff) != m or any(len(row) != n for row in self.coeff):
            raise ValueError("coefficient table must be m x n")
        if len(self.dilation_exponents) != n:
            raise ValueError("need one dilation exponent per coordinate")
        expected = tuple(i + 1 for i, d in enumerate(self.layer_dims) for _ in range(d))
        if tuple(self.dilation_exponents) != expected:
            raise ValueError("dilation exponents must equal the layer index of each coordinate")
        for i in range(m):
            for j in range(m):
                target = Polynomial.constant(n, 1.0 if i == j else 0.0)
                if self.coeff[i][j] != target:
                    raise ValueError(
                        "horizontal coordinates must be differentiated directly "
                        f"(coeff[{i}][{j}] must be {1.0 if i == j else 0.0})"
                    )

    @property
    def n(self) -> int:
        return int(sum(self.layer_dims))

    @property
    def m(self) -> int:
        return int(self.layer_dims[0])

    @property
    def Q(self) -> int:
        return int(sum((i + 1) * d for i, d in enumerate(self.layer_dims)))

    @property
    def step(self) -> int:
        return len(self.layer_dims)

    def coeff_row(self, i: int, x) -> np.ndarray:
        """Evaluate the components of ``X_i`` at one point or an ``(N, n)`` batch."""
        x = np.asarray(x, dtype=float)
        cols = [p(x) for p in self.coeff[i]]
        return np.stack(cols, axis=-1) if x.ndim == 2 else np.array(cols)

    def __str__(self) -> str:
        return self.name


def make_euclidean(n: int) -> CarnotGroup:
    if int(n) != n or n < 1:
        raise ValueError(f"Euclidean dimension must be a positive integer, got {n!r}")
    n = int(n)
    coeff = tuple(
        tuple(Polynomial.constant(n, 1.0 if i == j else 0.0) for j in range(n)) for i in range(n)
    )
    return CarnotGroup(f"euclidean:{n}", (n,), coeff, (1,) * n)


def make_heisenberg() -> CarnotGroup:
    """First Heisenberg group, symmetric coordinates ``(x, y, t)``.

    ``X1 = d_x - (y/2) d_t`` and ``X2 = d_y + (x/2) d_t``, so ``[X1, X2] = d_t``.
    """
    P = Polynomial
    zero, one = P.constant(3, 0.0), P.constant(3, 1.0)
    x1 = (one, zero, P.coordinate(3, 1, -0.5))
    x2 = (zero, one, P.coordinate(3, 0, 0.5))
    return CarnotGroup("heisenberg1", (2, 1), (x1, x2), (1, 1, 2))


def horizontal_projection(group: CarnotGroup, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != group.n:
        raise ValueError(f"point has {x.shape[-1]} coordinates, group has dimension {group.n}")
    return x[..., : group.m].copy()


def dilate(group: CarnotGroup, lam: float, x) -> np.ndarray:
    """Anisotropic dilation: coordinate j is scaled by ``lam ** w_j``."""
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam!r}")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != group.n:
        raise ValueError(f"point has {x.shape[-1]} coordinates, group has dimension {group.n}")
    w = np.asarray(group.dilation_exponents, dtype=float)
    return x * lam**w


def apply_field(group: CarnotGroup, i: int, f: Polynomial) -> Polynomial:
    """Symbolic ``X_i f`` for a polynomial ``f``."""
    out = Polynomial.constant(group.n, 0.0)
    for j, c in enumerate(group.coeff[i]):
        if not c.is_zero:
            out = out + c * f.diff(j)
    return out


def bracket(group: CarnotGroup, i: int, k: int) -> tuple[Polynomial, ...]:
    """Components of the commutator ``[X_i, X_k]``."""
    row = []
    for j in range(group.n):
        row.append(apply_field(group, i, group.coeff[k][j]) - apply_field(group, k, group.coeff[i][j]))
    return tuple(row)


def parse_group(selector: str) -> CarnotGroup:
    """``"euclidean:<n>"`` or ``"heisenberg1"``."""
    s = selector.strip().lower()
    if s == "heisenberg1":
        return make_heisenberg()
    if s.startswith("euclidean:"):
        try:
            n = int(s.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad Euclidean dimension in group selector {selector!r}") from None
        return make_euclidean(n)
    raise ValueError(f"unknown group selector {selector!r}; expected 'euclidean:<n>' or 'heisenberg1'")
