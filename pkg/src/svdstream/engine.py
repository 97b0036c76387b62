"""Incremental truncated SVD engine.

The engine owns a dense tracked matrix and maintains a truncated SVD of it
under three event kinds: row append, column append, and additive rank-1
entry updates. Appends are exact up to rank-k truncation; rank-1 updates are
exact within the current subspaces (projection semantics). ``refresh``
recomputes the truncated SVD of the tracked matrix, resetting accumulated
drift, and is the only operation allowed to be expensive.

Factor width is always ``min(k, m, n)``: exact zero singular values inside
that width are retained (their basis columns are completed to keep the
factors orthonormal), values beyond it are dropped.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .linalg import (
    SvdFactors,
    as_matrix,
    as_vector,
    canonicalize_signs,
    orthonormality_defect,
    truncated_svd,
)

# Orthonormality defect beyond which the optional safeguard re-factors.
REORTHO_THRESHOLD = 1e-6


def _orthonormal_completion(q: np.ndarray, j: int) -> None:
    """Replace column j of q, in place, by a unit vector orthogonal to the rest.

    Tries the existing column direction first, then standard basis vectors in
    index order, so the completion is deterministic.
    """
    m, w = q.shape
    others = np.delete(np.arange(w), j)
    basis = q[:, others]
    col = q[:, j].copy()
    col -= basis @ (basis.T @ col)
    norm = float(np.linalg.norm(col))
    if norm > 0.5:
        q[:, j] = col / norm
        return
    for axis in range(m):
        cand = np.zeros(m)
        cand[axis] = 1.0
        cand -= basis @ (basis.T @ cand)
        norm = float(np.linalg.norm(cand))
        if norm > 0.5:
            q[:, j] = cand / norm
            return
    raise ValueError("cannot complete an orthonormal basis: width exceeds dimension")


def _complete_zero_columns(u: np.ndarray, vt: np.ndarray, s: np.ndarray) -> None:
    """Repair basis columns paired with exact-zero singular values.

    A zero singular value can leave a zero (or shortened) column in one
    factor after an append in the residual-free branch; the reconstruction is
    unaffected by its direction, so any orthonormal completion is valid.
    """
    for j in np.flatnonzero(s == 0.0):
        for q in (u, vt.T):
            norm_sq = float(q[:, j] @ q[:, j])
            if abs(norm_sq - 1.0) > 1e-6:
                _orthonormal_completion(q, j)


class SvdEngine:
    """Single-owner mutable state of one incremental SVD stream."""

    def __init__(self, a0, k: int, tol: float = 1e-10, reortho_guard: bool = False):
        a0 = as_matrix(a0, "initial matrix")
        if a0.size == 0:
            raise ValueError("initial matrix must be nonempty")
        if k < 1:
            raise ValueError(f"work rank must be >= 1, got {k}")
        if not tol > 0.0:
            raise ValueError(f"tol must be positive, got {tol}")
        self.work_rank = int(k)
        self.tol = float(tol)
        self.reortho_guard = bool(reortho_guard)
        self._tracked = a0.copy()
        self._sq_norm = float(np.sum(a0 * a0))
        self.factors = truncated_svd(a0, self.work_rank)
        self.step = 0
        self.ref_subspace: np.ndarray | None = None
        # Novelty signal of the most recent append (residual and input norms).
        self.last_residual = float("nan")
        self.last_input_norm = float("nan")

    # ------------------------------------------------------------- views --

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self._tracked.shape)

    @property
    def tracked(self) -> np.ndarray:
        """The exact current matrix. Owned by the engine; do not mutate."""
        return self._tracked

    @property
    def sq_norm(self) -> float:
        return self._sq_norm

    def tracked_sq_norm(self) -> float:
        """Incrementally maintained squared Frobenius norm of the matrix."""
        return self._sq_norm

    # ------------------------------------------------------------ events --

    def row_append(self, x) -> None:
        """Append one row; exact up to truncation back to the work rank."""
        m, n = self._tracked.shape
        x = as_vector(x, length=n, name="appended row")
        f = self.factors
        keep = min(f.rank + 1, self.work_rank, m + 1, n)
        u, s, vt, rho = backend.row_append(f.u, f.s, f.vt, x, self.tol, keep)
        self.last_input_norm = float(np.linalg.norm(x))
        self.last_residual = rho
        self._install(u, s, vt)
        self._tracked = np.vstack([self._tracked, x[None, :]])
        self._sq_norm += float(x @ x)
        self.step += 1

    def col_append(self, y) -> None:
        """Append one column (a row append of the transposed problem)."""
        m, n = self._tracked.shape
        y = as_vector(y, length=m, name="appended column")
        f = self.factors
        keep = min(f.rank + 1, self.work_rank, m, n + 1)
        ut = np.ascontiguousarray(f.vt.T)
        vtt = np.ascontiguousarray(f.u.T)
        ut2, s, vtt2, rho = backend.row_append(ut, f.s, vtt, y, self.tol, keep)
        self.last_input_norm = float(np.linalg.norm(y))
        self.last_residual = rho
        self._install(
            np.ascontiguousarray(vtt2.T), s, np.ascontiguousarray(ut2.T)
        )
        self._tracked = np.hstack([self._tracked, y[:, None]])
        self._sq_norm += float(y @ y)
        self.step += 1

    def rank_one_update(self, i: int, j: int, delta: float) -> None:
        """Add ``delta`` to entry (i, j).

        The factors absorb the projection of the update onto the current
        subspaces; the tracked matrix and norm absorb it exactly.
        """
        m, n = self._tracked.shape
        if not (0 <= i < m and 0 <= j < n):
            raise ValueError(f"index ({i}, {j}) out of bounds for shape ({m}, {n})")
        delta = float(delta)
        if not np.isfinite(delta):
            raise ValueError("delta must be finite")
        f = self.factors
        u, s, vt = backend.rank_one(f.u, f.s, f.vt, int(i), int(j), delta, f.rank)
        self._install(u, s, vt)
        old = float(self._tracked[i, j])
        self._tracked[i, j] = old + delta
        self._sq_norm += 2.0 * delta * old + delta * delta
        self.step += 1

    # ------------------------------------------------------- maintenance --

    def refresh(self, store_reference: bool = False) -> None:
        """Recompute the truncated SVD of the tracked matrix (drift reset)."""
        self.factors = truncated_svd(self._tracked, self.work_rank)
        self._sq_norm = float(np.sum(self._tracked * self._tracked))
        if store_reference:
            self.ref_subspace = self.factors.u.copy()

    def set_reference(self) -> None:
        """Store the current left basis as the drift reference."""
        self.ref_subspace = self.factors.u.copy()

    def set_rank(self, k_new: int) -> None:
        """Change the work rank.

        Decreases truncate the factors immediately; increases take effect at
        the next append or refresh (an incremental update cannot conjure a
        direction that was already discarded).
        """
        if k_new < 1:
            raise ValueError(f"work rank must be >= 1, got {k_new}")
        self.work_rank = int(k_new)
        f = self.factors
        if f.rank > k_new:
            self.factors = SvdFactors(
                np.ascontiguousarray(f.u[:, :k_new]),
                f.s[:k_new].copy(),
                np.ascontiguousarray(f.vt[:k_new, :]),
            )

    # --------------------------------------------------------- internals --

    def _install(self, u, s, vt) -> None:
        if np.any(s == 0.0):
            _complete_zero_columns(u, vt, s)
        if self.reortho_guard:
            u, s, vt = self._reortho_if_needed(u, s, vt)
        canonicalize_signs(u, vt)
        self.factors = SvdFactors(u, s, vt)

    def _reortho_if_needed(self, u, s, vt):
        defect = max(orthonormality_defect(u), orthonormality_defect(vt.T))
        if defect <= REORTHO_THRESHOLD:
            return u, s, vt
        qu, ru = np.linalg.qr(u)
        qv, rv = np.linalg.qr(vt.T)
        uk, s2, vkt = backend.core_svd((ru * s) @ rv.T)
        return np.ascontiguousarray(qu @ uk), s2, np.ascontiguousarray(vkt @ qv.T)
