"""Pure numpy/scipy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``PCMM_PURE_PYTHON=1`` is set. Every function here has the same signature
and semantics as its compiled twin.
"""

import numpy as np
from scipy.spatial import cKDTree

BACKEND = "python"


def nn_sqdist(query, target):
    """Squared distance from every query point to its nearest target point."""
    query = np.ascontiguousarray(query, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    if len(query) == 0:
        return np.empty(0)
    _, idx = cKDTree(target).query(query, k=1)
    # recompute from coordinates so the value matches a brute-force sum of squares
    diff = query - target[idx]
    return np.einsum("ij,ij->i", diff, diff)


def any_pair_within(a, b, radius):
    """True iff some a[m], b[n] satisfy ||a[m] - b[n]||^2 < radius^2."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        return False
    r2 = radius * radius
    lo = np.maximum(a.min(axis=0), b.min(axis=0))
    hi = np.minimum(a.max(axis=0), b.max(axis=0))
    gap = np.maximum(lo - hi, 0.0)
    if gap @ gap >= r2:
        return False
    if len(a) > len(b):
        a, b = b, a
    return bool(np.any(nn_sqdist(a, b) < r2))


def bspline_basis(knots, degree, u):
    """Dense matrix of all degree-``degree`` B-spline basis values.

    Row m holds N_{0..n-1}(u[m]) with n = len(knots) - degree - 1. The
    Cox-de Boor recursion is run over the full table with 0/0 := 0, and
    u equal to the last knot is assigned to the last non-empty span so the
    clamped end interpolates.
    """
    knots = np.asarray(knots, dtype=np.float64)
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    n_knots = len(knots)
    spans = n_knots - 1
    basis = ((knots[:-1][None, :] <= u[:, None]) & (u[:, None] < knots[1:][None, :])).astype(np.float64)
    nonempty = np.flatnonzero(knots[1:] > knots[:-1])
    if len(nonempty):
        last = nonempty[-1]
        at_end = u >= knots[last + 1]
        basis[at_end, :] = 0.0
        basis[at_end, last] = 1.0
    for p in range(1, degree + 1):
        count = spans - p
        left_den = knots[p:p + count] - knots[:count]
        right_den = knots[p + 1:p + 1 + count] - knots[1:1 + count]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (u[:, None] - knots[:count]) / left_den, 0.0)
            right = np.where(
                right_den > 0, (knots[p + 1:p + 1 + count] - u[:, None]) / right_den, 0.0
            )
        basis = left * basis[:, :count] + right * basis[:, 1:count + 1]
    return basis
