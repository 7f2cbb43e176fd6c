"""Independent references for the homogenization experiments.

The cell oracle solves the periodic corrector problem with a cell-centred
finite-volume scheme (harmonic face averages), which shares no code with the
nodal difference operators used by the solver.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operators import Coefficient

__all__ = ["cell_effective_tensor"]


def cell_effective_tensor(coefficient: Coefficient, dim: int, cells: int = 256) -> np.ndarray:
    """Effective matrix of ``-div(a(y) grad u)`` with ``a`` 1-periodic in ``R^dim``.

    ``a`` is sampled at the centres of a ``cells^dim`` grid on the unit cell.
    For each unit vector ``e_j`` the corrector ``chi`` solves
    ``div(a (e_j + grad chi)) = 0`` periodically; column ``j`` of the result is
    the cell average of the flux.
    """
    if dim < 1 or cells < 2:
        raise ValueError("need dim >= 1 and at least two cells per axis")
    h = 1.0 / cells
    centres = (np.arange(cells) + 0.5) * h
    mesh = np.meshgrid(*([centres] * dim), indexing="ij")
    y = np.stack([c.ravel() for c in mesh], axis=1)
    shape = (cells,) * dim
    a = np.asarray(coefficient(y), dtype=float).reshape(shape)
    N = a.size
    idx = np.arange(N).reshape(shape)

    # harmonic face conductances towards the +i neighbour
    faces = []
    for i in range(dim):
        an = np.roll(a, -1, axis=i)
        faces.append(2.0 * a * an / (a + an))

    rows, cols, vals = [], [], []
    for i in range(dim):
        k = faces[i].ravel() / (h * h)
        nb = np.roll(idx, -1, axis=i).ravel()
        me = idx.ravel()
        rows += [me, me, nb, nb]
        cols += [me, nb, nb, me]
        vals += [k, -k, k, -k]
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    # pin the additive constant; the dropped equation follows from the others
    Kp = K.tolil()
    Kp[0, :] = 0.0
    Kp[0, 0] = 1.0
    lu = spla.splu(Kp.tocsc())

    eff = np.zeros((dim, dim))
    for j in range(dim):
        # K chi = div(a e_j) in flux form
        kf = faces[j]
        r = ((kf - np.roll(kf, 1, axis=j)) / h).ravel()
        r[0] = 0.0
        chi = lu.solve(r).reshape(shape)
        for i in range(dim):
            grad = (np.roll(chi, -1, axis=i) - chi) / h
            flux = faces[i] * ((1.0 if i == j else 0.0) + grad)
            eff[i, j] = float(flux.mean())
    return eff
