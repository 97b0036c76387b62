# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled update kernels.

Same contract as ``svdstream._kernels_py``: a small-core SVD plus the factor
assembly for row appends and rank-1 updates. The core SVD is a one-sided
Jacobi iteration, which keeps the accumulated right-rotation matrix exactly
orthogonal and converges quadratically for the tiny (k+1)-sized cores this
engine produces.
"""

from libc.math cimport fabs, sqrt

import numpy as np

# Matches svdstream.linalg.ZERO_SV_RTOL.
cdef double ZERO_SV_RTOL = 1e-12
# Relative column-orthogonality target of the Jacobi sweep.
cdef double ORTHO_EPS = 1e-14
cdef int MAX_SWEEPS = 64


cdef void _jacobi(double[:, ::1] g, double[:, ::1] v, int n) noexcept nogil:
    """Rotate column pairs of g (and v in tandem) until mutually orthogonal."""
    cdef int sweep, p, q, i
    cdef bint rotated
    cdef double app, aqq, apq, zeta, t, c, s, gp, gq
    for sweep in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = 0.0
                aqq = 0.0
                apq = 0.0
                for i in range(n):
                    app += g[i, p] * g[i, p]
                    aqq += g[i, q] * g[i, q]
                    apq += g[i, p] * g[i, q]
                if fabs(apq) <= ORTHO_EPS * sqrt(app * aqq):
                    continue
                rotated = True
                zeta = (aqq - app) / (2.0 * apq)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    gp = g[i, p]
                    gq = g[i, q]
                    g[i, p] = c * gp - s * gq
                    g[i, q] = s * gp + c * gq
                for i in range(n):
                    gp = v[i, p]
                    gq = v[i, q]
                    v[i, p] = c * gp - s * gq
                    v[i, q] = s * gp + c * gq
        if not rotated:
            break


def _complete_basis(u, cols):
    """Replace the listed columns of u, in place, with orthonormal fill-ins."""
    m = u.shape[0]
    for j in cols:
        others = np.delete(np.arange(u.shape[1]), j)
        basis = u[:, others]
        done = False
        for axis in range(m):
            cand = np.zeros(m)
            cand[axis] = 1.0
            cand -= basis @ (basis.T @ cand)
            norm = float(np.linalg.norm(cand))
            if norm > 0.5:
                u[:, j] = cand / norm
                done = True
                break
        if not done:
            raise ValueError("cannot complete an orthonormal basis")


def core_svd(core):
    """Full SVD of a small square core; tiny singular values snapped to 0."""
    a = np.ascontiguousarray(core, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"core must be square, got shape {a.shape}")
    cdef int n = a.shape[0]
    g = a.copy()
    v = np.eye(n)
    cdef double[:, ::1] gv = g
    cdef double[:, ::1] vv = v
    with nogil:
        _jacobi(gv, vv, n)
    raw = np.sqrt(np.sum(g * g, axis=0))
    order = np.argsort(-raw, kind="stable")
    raw = raw[order]
    g = np.ascontiguousarray(g[:, order])
    v = np.ascontiguousarray(v[:, order])
    s = raw.copy()
    if n and s[0] > 0.0:
        s[s < ZERO_SV_RTOL * s[0]] = 0.0
    u = np.empty((n, n))
    positive = s > 0.0
    u[:, positive] = g[:, positive] / raw[positive]
    dead = np.flatnonzero(~positive)
    if dead.size:
        u[:, dead] = 0.0
        _complete_basis(u, dead)
    return u, s, np.ascontiguousarray(v.T)


def row_append(u, s, vt, x, tol, keep):
    """Append row ``x``; see ``svdstream._kernels_py.row_append``."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    vt = np.ascontiguousarray(vt, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef int m = u.shape[0]
    cdef int r = s.shape[0]
    cdef int n = vt.shape[1]
    cdef int w = keep
    cdef double ctol = tol

    cdef double[:, ::1] uv = u
    cdef double[:, ::1] vtv = vt
    cdef double[::1] xv = x

    proj = np.zeros(r)
    resid = x.copy()
    cdef double[::1] pv = proj
    cdef double[::1] rv = resid
    cdef int i, j, l, c
    cdef double acc, coef, rho
    with nogil:
        for l in range(r):
            acc = 0.0
            for c in range(n):
                acc += vtv[l, c] * xv[c]
            pv[l] = acc
        for l in range(r):
            coef = pv[l]
            for c in range(n):
                rv[c] -= coef * vtv[l, c]
        acc = 0.0
        for c in range(n):
            acc += rv[c] * rv[c]
        rho = sqrt(acc)

    core = np.zeros((r + 1, r + 1))
    np.fill_diagonal(core[:r, :r], s)
    core[r, :r] = proj
    cdef bint fresh_direction = rho > ctol
    if fresh_direction:
        core[r, r] = rho
        inject = resid / rho
    else:
        inject = np.zeros(n)
    uk, s_core, vkt = core_svd(core)

    u_new = np.empty((m + 1, w))
    vt_new = np.zeros((w, n))
    cdef double[:, ::1] ukv = uk
    cdef double[:, ::1] vktv = vkt
    cdef double[:, ::1] unv = u_new
    cdef double[:, ::1] vtnv = vt_new
    cdef double[::1] zv = inject
    with nogil:
        for i in range(m):
            for j in range(w):
                acc = 0.0
                for l in range(r):
                    acc += uv[i, l] * ukv[l, j]
                unv[i, j] = acc
        for j in range(w):
            unv[m, j] = ukv[r, j]
        for j in range(w):
            for l in range(r):
                coef = vktv[j, l]
                if coef != 0.0:
                    for c in range(n):
                        vtnv[j, c] += coef * vtv[l, c]
            if fresh_direction:
                coef = vktv[j, r]
                if coef != 0.0:
                    for c in range(n):
                        vtnv[j, c] += coef * zv[c]
    return u_new, s_core[:w].copy(), vt_new, float(rho)


def rank_one(u, s, vt, i, j, delta, keep):
    """Add ``delta`` at entry (i, j); see ``svdstream._kernels_py.rank_one``."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    vt = np.ascontiguousarray(vt, dtype=np.float64)
    cdef int m = u.shape[0]
    cdef int r = s.shape[0]
    cdef int n = vt.shape[1]
    cdef int w = keep
    cdef int row = i
    cdef int col = j
    cdef double d = delta

    core = np.empty((r, r))
    cdef double[:, ::1] cv = core
    cdef double[:, ::1] uv = u
    cdef double[::1] sv = s
    cdef double[:, ::1] vtv = vt
    cdef int a, b
    with nogil:
        for a in range(r):
            for b in range(r):
                cv[a, b] = d * uv[row, a] * vtv[b, col]
            cv[a, a] += sv[a]
    uk, s_core, vkt = core_svd(core)

    u_new = np.empty((m, w))
    vt_new = np.zeros((w, n))
    cdef double[:, ::1] ukv = uk
    cdef double[:, ::1] vktv = vkt
    cdef double[:, ::1] unv = u_new
    cdef double[:, ::1] vtnv = vt_new
    cdef int ii, jj, l, c
    cdef double acc, coef
    with nogil:
        for ii in range(m):
            for jj in range(w):
                acc = 0.0
                for l in range(r):
                    acc += uv[ii, l] * ukv[l, jj]
                unv[ii, jj] = acc
        for jj in range(w):
            for l in range(r):
                coef = vktv[jj, l]
                if coef != 0.0:
                    for c in range(n):
                        vtnv[jj, c] += coef * vtv[l, c]
    return u_new, s_core[:w].copy(), vt_new
