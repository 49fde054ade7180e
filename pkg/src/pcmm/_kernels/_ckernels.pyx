# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: hash-grid nearest neighbour, strict radius pair test,
and Cox-de Boor basis evaluation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.int64_t i64


def _grid_shape(double[:, ::1] pts, double cell):
    lo = np.asarray(pts).min(axis=0)
    hi = np.asarray(pts).max(axis=0)
    dims = np.maximum(np.floor((hi - lo) / cell).astype(np.int64) + 1, 1)
    return lo, dims


def _auto_cell(double[:, ::1] pts):
    """Cell edge giving roughly one to two points per occupied cell."""
    arr = np.asarray(pts)
    n = arr.shape[0]
    ext = arr.max(axis=0) - arr.min(axis=0)
    top = max(float(ext.max()), 1e-12)
    lo_h, hi_h = top * 1e-6, top * 2.0
    for _ in range(60):
        h = (lo_h * hi_h) ** 0.5
        cells = np.prod(np.floor(ext / h) + 1)
        if cells > 2 * n:
            lo_h = h
        else:
            hi_h = h
    return hi_h


def _build(double[:, ::1] pts, double cell):
    lo, dims = _grid_shape(pts, cell)
    arr = np.asarray(pts)
    ijk = np.floor((arr - lo) / cell).astype(np.int64)
    ijk = np.minimum(np.maximum(ijk, 0), dims - 1)
    flat = (ijk[:, 0] * dims[1] + ijk[:, 1]) * dims[2] + ijk[:, 2]
    order = np.argsort(flat, kind="stable").astype(np.int64)
    counts = np.bincount(flat, minlength=int(np.prod(dims)))
    start = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    sorted_pts = np.ascontiguousarray(arr[order])
    return np.ascontiguousarray(lo), np.ascontiguousarray(dims), start, sorted_pts


cdef inline i64 _clampi(i64 v, i64 lo, i64 hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def nn_sqdist(query, target):
    """Squared distance from every query point to its nearest target point.

    Exact: rings of grid cells are visited until the best distance found is
    no larger than the lower bound on any unvisited cell.
    """
    cdef double[:, ::1] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef double[:, ::1] t = np.ascontiguousarray(target, dtype=np.float64)
    cdef Py_ssize_t m = q.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    if m == 0:
        return out_arr
    cdef double h = _auto_cell(t)
    lo_arr, dims_arr, start_arr, sp_arr = _build(t, h)
    cdef double[::1] lo = lo_arr
    cdef i64[::1] dims = dims_arr
    cdef i64[::1] start = start_arr
    cdef double[:, ::1] sp = sp_arr
    cdef double[::1] out = out_arr
    # tight data bbox: its projection gives the out-of-box part of the bound
    top = np.asarray(t).max(axis=0)
    cdef double hi0 = top[0]
    cdef double hi1 = top[1]
    cdef double hi2 = top[2]
    cdef i64 maxdim = max(dims[0], max(dims[1], dims[2]))
    cdef Py_ssize_t a, s
    cdef i64 ci, cj, ck, r, i, j, k, i0, i1, j0, j1, k0, k1, cell
    cdef double qx, qy, qz, px, py, pz, dx, dy, dz, d2, best, dout, lb
    with nogil:
        for a in range(m):
            qx = q[a, 0]
            qy = q[a, 1]
            qz = q[a, 2]
            # projection onto the data bbox
            px = min(max(qx, lo[0]), hi0)
            py = min(max(qy, lo[1]), hi1)
            pz = min(max(qz, lo[2]), hi2)
            dout = (qx - px) * (qx - px) + (qy - py) * (qy - py) + (qz - pz) * (qz - pz)
            ci = _clampi(<i64>floor((px - lo[0]) / h), 0, dims[0] - 1)
            cj = _clampi(<i64>floor((py - lo[1]) / h), 0, dims[1] - 1)
            ck = _clampi(<i64>floor((pz - lo[2]) / h), 0, dims[2] - 1)
            best = INFINITY
            r = 0
            while True:
                i0 = _clampi(ci - r, 0, dims[0] - 1)
                i1 = _clampi(ci + r, 0, dims[0] - 1)
                j0 = _clampi(cj - r, 0, dims[1] - 1)
                j1 = _clampi(cj + r, 0, dims[1] - 1)
                k0 = _clampi(ck - r, 0, dims[2] - 1)
                k1 = _clampi(ck + r, 0, dims[2] - 1)
                for i in range(i0, i1 + 1):
                    for j in range(j0, j1 + 1):
                        for k in range(k0, k1 + 1):
                            if (i - ci < r and ci - i < r and j - cj < r and cj - j < r
                                    and k - ck < r and ck - k < r):
                                continue
                            cell = (i * dims[1] + j) * dims[2] + k
                            for s in range(start[cell], start[cell + 1]):
                                dx = qx - sp[s, 0]
                                dy = qy - sp[s, 1]
                                dz = qz - sp[s, 2]
                                d2 = dx * dx + dy * dy + dz * dz
                                if d2 < best:
                                    best = d2
                lb = dout + (r * h) * (r * h)
                if best <= lb or r > maxdim:
                    break
                r += 1
            out[a] = best
    return out_arr


def any_pair_within(a, b, double radius):
    """True iff some a[m], b[n] satisfy ||a[m] - b[n]||^2 < radius^2."""
    cdef double[:, ::1] pa = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] pb = np.ascontiguousarray(b, dtype=np.float64)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        return False
    if pa.shape[0] > pb.shape[0]:
        pa, pb = pb, pa
    cdef double r2 = radius * radius
    arr_b = np.asarray(pb)
    ext = arr_b.max(axis=0) - arr_b.min(axis=0)
    cdef double h = radius
    # coarser cells keep memory bounded; +-1 neighbourhood still covers radius
    while np.prod(np.floor(ext / h) + 1) > 4_000_000:
        h *= 2.0
    lo_arr, dims_arr, start_arr, sp_arr = _build(pb, h)
    cdef double[::1] lo = lo_arr
    cdef i64[::1] dims = dims_arr
    cdef i64[::1] start = start_arr
    cdef double[:, ::1] sp = sp_arr
    cdef Py_ssize_t m = pa.shape[0], x, s
    cdef i64 ci, cj, ck, i, j, k, cell
    cdef double qx, qy, qz, dx, dy, dz
    cdef bint found = False
    with nogil:
        for x in range(m):
            qx = pa[x, 0]
            qy = pa[x, 1]
            qz = pa[x, 2]
            ci = <i64>floor((qx - lo[0]) / h)
            cj = <i64>floor((qy - lo[1]) / h)
            ck = <i64>floor((qz - lo[2]) / h)
            if ci < -1 or ci > dims[0] or cj < -1 or cj > dims[1] or ck < -1 or ck > dims[2]:
                continue
            for i in range(max(ci - 1, 0), min(ci + 1, dims[0] - 1) + 1):
                for j in range(max(cj - 1, 0), min(cj + 1, dims[1] - 1) + 1):
                    for k in range(max(ck - 1, 0), min(ck + 1, dims[2] - 1) + 1):
                        cell = (i * dims[1] + j) * dims[2] + k
                        for s in range(start[cell], start[cell + 1]):
                            dx = qx - sp[s, 0]
                            dy = qy - sp[s, 1]
                            dz = qz - sp[s, 2]
                            if dx * dx + dy * dy + dz * dz < r2:
                                found = True
                                break
                        if found:
                            break
                    if found:
                        break
                if found:
                    break
            if found:
                break
    return bool(found)


cdef i64 _find_span(double[::1] knots, int degree, double u) nogil:
    cdef i64 n = knots.shape[0] - degree - 2
    cdef i64 low, high, mid
    if u >= knots[n + 1]:
        # last non-empty span
        mid = n
        while mid > degree and knots[mid] >= knots[mid + 1]:
            mid -= 1
        return mid
    if u <= knots[degree]:
        mid = degree
        while mid < n and knots[mid] >= knots[mid + 1]:
            mid += 1
        return mid
    low = degree
    high = n + 1
    mid = (low + high) // 2
    while u < knots[mid] or u >= knots[mid + 1]:
        if u < knots[mid]:
            high = mid
        else:
            low = mid
        mid = (low + high) // 2
    return mid


def bspline_basis(knots, int degree, u):
    """Dense matrix of all basis values; triangular Cox-de Boor on the span."""
    cdef double[::1] kn = np.ascontiguousarray(knots, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(np.atleast_1d(u), dtype=np.float64)
    cdef Py_ssize_t m = uu.shape[0]
    cdef Py_ssize_t n = kn.shape[0] - degree - 1
    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] nv = np.empty(degree + 1)
    cdef double[::1] left = np.empty(degree + 1)
    cdef double[::1] right = np.empty(degree + 1)
    cdef Py_ssize_t a, j, r
    cdef i64 span
    cdef double x, saved, temp, den
    with nogil:
        for a in range(m):
            x = uu[a]
            span = _find_span(kn, degree, x)
            nv[0] = 1.0
            for j in range(1, degree + 1):
                left[j] = x - kn[span + 1 - j]
                right[j] = kn[span + j] - x
                saved = 0.0
                for r in range(j):
                    den = right[r + 1] + left[j - r]
                    temp = nv[r] / den if den != 0.0 else 0.0
                    nv[r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                nv[j] = saved
            for j in range(degree + 1):
                out[a, span - degree + j] = nv[j]
    return out_arr
