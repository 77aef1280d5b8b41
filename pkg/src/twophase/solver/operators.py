"""Masked finite-volume stencils on the periodic MAC grid.

Staggering: ``u[j, i]`` lives on the x-face between cells ``(j, i)`` and
``(j, i+1)``; ``v[j, i]`` on the y-face between ``(j, i)`` and ``(j+1, i)``.
All index arithmetic wraps (``np.roll``); the solid bands at the top and
bottom of every mask keep the vertical wrap inert.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..core import label_periodic


class SolverDivergence(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg if residual is None else f"{msg} (residual {residual:.3e})")
        self.residual = residual


def east(a):
    return np.roll(a, -1, axis=1)


def west(a):
    return np.roll(a, 1, axis=1)


def north(a):
    return np.roll(a, -1, axis=0)


def south(a):
    return np.roll(a, 1, axis=0)


def grad_x(f, dx):
    return (east(f) - f) / dx


def grad_y(f, dx):
    return (north(f) - f) / dx


def divergence(u, v, dx):
    return (u - west(u) + v - south(v)) / dx


def avg_x(f):
    return 0.5 * (f + east(f))


def avg_y(f):
    return 0.5 * (f + north(f))


def harmonic_x(f):
    return 2.0 * f * east(f) / (f + east(f))


def harmonic_y(f):
    return 2.0 * f * north(f) / (f + north(f))


def corner_avg(f):
    """Average of the four cells around the corner at ``(i+1/2, j+1/2)``."""
    return 0.25 * (f + east(f) + north(f) + north(east(f)))


def link_operator(unknown, cx, cy, dx, dirichlet=False):
    """Sparse ``sum_links c (f_nb - f) / dx**2`` over the ``unknown`` set.

    ``cx[j, i]`` weights the link ``(j, i) -> (j, i+1)``, ``cy[j, i]`` the link
    ``(j, i) -> (j+1, i)``. Links leaving the set are dropped (zero flux), or,
    with ``dirichlet=True``, treated as a homogeneous Dirichlet neighbour.
    Returns ``(matrix, index)`` where ``index`` maps grid positions to rows.
    """
    unknown = np.asarray(unknown, bool)
    n = int(unknown.sum())
    index = np.full(unknown.shape, -1, dtype=np.int64)
    index[unknown] = np.arange(n)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    for c, nb in ((cx, east), (cy, north)):
        c = np.broadcast_to(c, unknown.shape)
        a_in, b_in = unknown, nb(unknown)
        ia, ib = index, nb(index)
        both = a_in & b_in & (c != 0)
        w = c[both]
        rows += [ia[both], ib[both]]
        cols += [ib[both], ia[both]]
        vals += [w, w]
        np.subtract.at(diag, ia[both], w)
        np.subtract.at(diag, ib[both], w)
        if dirichlet:
            only_a = a_in & ~b_in
            np.subtract.at(diag, ia[only_a], c[only_a])
            only_b = ~a_in & b_in
            np.subtract.at(diag, ib[only_b], c[only_b])

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return A / dx ** 2, index


def component_anchors(unknown):
    """One representative row index per connected component of ``unknown``."""
    labels, n = label_periodic(unknown)
    flat = labels[unknown]
    return [int(np.flatnonzero(flat == k)[0]) for k in range(1, n + 1)], flat


class NeumannSolver:
    """Direct solver for a singular pure-Neumann system ``A x = b``.

    One row per connected component is replaced by a pin; the right-hand side
    is made compatible by subtracting its per-component mean, and the
    solution is shifted to zero mean per component.
    """

    def __init__(self, A, unknown):
        self.A = A.tocsr()
        self.anchors, self.comp = component_anchors(unknown)
        B = self.A.tolil(copy=True)
        for k in self.anchors:
            B.rows[k] = [k]
            B.data[k] = [1.0]
        self.lu = splu(B.tocsc())

    def project_rhs(self, b):
        b = b.copy()
        for k in range(1, len(self.anchors) + 1):
            sel = self.comp == k
            b[sel] -= b[sel].mean()
        return b

    def solve(self, b, tol, compatible=False):
        if not compatible:
            b = self.project_rhs(b)
        rhs = b.copy()
        rhs[self.anchors] = 0.0
        x = self.lu.solve(rhs)
        for k in range(1, len(self.anchors) + 1):
            sel = self.comp == k
            x[sel] -= x[sel].mean()
        check_residual(self.A, x, b, tol)
        return x


def check_residual(A, x, b, tol):
    bn = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    rel = r / bn if bn > 0 else r
    if not np.isfinite(rel) or rel > tol:
        raise SolverDivergence("linear solve did not reach tolerance", rel)
    return rel


def scatter(values, index, shape, fill=0.0):
    out = np.full(shape, fill, dtype=float)
    m = index >= 0
    out[m] = values[index[m]]
    return out


def muscl_face_values(q, open_faces, axis):
    """Left/right limited reconstructions at faces normal to ``axis``.

    Slopes use van Leer's limiter; a cell touching a closed face along
    ``axis`` gets zero slope so no solid value enters the reconstruction.
    """
    fwd = np.roll(q, -1, axis) - q
    bwd = q - np.roll(q, 1, axis)
    ok = open_faces & np.roll(open_faces, 1, axis)
    prod = fwd * bwd
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where((prod > 0) & ok, 2 * prod / (fwd + bwd), 0.0)
    left = q + 0.5 * slope
    right = np.roll(q - 0.5 * slope, -1, axis)
    return left, right


def upwind_flux(q, vel, open_faces, axis):
    """Advective flux ``vel * q_face`` at faces normal to ``axis`` (zero on closed faces)."""
    left, right = muscl_face_values(q, open_faces, axis)
    flux = np.where(vel > 0, vel * left, vel * right)
    return np.where(open_faces, flux, 0.0)
