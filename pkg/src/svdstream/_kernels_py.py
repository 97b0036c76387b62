"""Pure-numpy update kernels: the fallback backend.

Signatures mirror the compiled module ``svdstream._kernels`` exactly; the
engine picks one implementation at import time through ``svdstream.backend``.
"""

from __future__ import annotations

import numpy as np

from .linalg import ZERO_SV_RTOL


def core_svd(core):
    """Full SVD of a small square core; tiny singular values snapped to 0."""
    u, s, vt = np.linalg.svd(np.asarray(core, dtype=np.float64))
    if s.size and s[0] > 0.0:
        s[s < ZERO_SV_RTOL * s[0]] = 0.0
    return u, s, vt


def row_append(u, s, vt, x, tol, keep):
    """Append row ``x`` to the factored matrix, keeping the top ``keep`` triplets.

    Returns ``(u_new, s_new, vt_new, rho)`` where ``rho`` is the raw norm of
    the component of ``x`` outside the current right subspace. When
    ``rho <= tol`` the new row is treated as lying inside the subspace: the
    appended core gets an exact zero corner and no new right direction is
    injected.
    """
    m, r = u.shape
    n = vt.shape[1]
    proj = vt @ x
    resid = x - vt.T @ proj
    rho = float(np.linalg.norm(resid))
    core = np.zeros((r + 1, r + 1))
    np.fill_diagonal(core[:r, :r], s)
    core[r, :r] = proj
    if rho > tol:
        core[r, r] = rho
        inject = resid / rho
    else:
        inject = np.zeros(n)
    uk, s_new, vkt = core_svd(core)
    u_new = np.empty((m + 1, keep))
    u_new[:m] = u @ uk[:r, :keep]
    u_new[m] = uk[r, :keep]
    vt_new = vkt[:keep, :r] @ vt + np.outer(vkt[:keep, r], inject)
    return u_new, s_new[:keep].copy(), vt_new, rho


def rank_one(u, s, vt, i, j, delta, keep):
    """Add ``delta`` at entry (i, j), projected onto the tracked subspaces."""
    core = np.diag(s) + delta * np.outer(u[i, :], vt[:, j])
    uk, s_new, vkt = core_svd(core)
    u_new = u @ uk[:, :keep]
    vt_new = vkt[:keep, :] @ vt
    return u_new, s_new[:keep].copy(), vt_new
