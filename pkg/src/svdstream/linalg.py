"""Dense SVD primitives shared by the engine, its oracles, and the metrics.

Factors follow one canonical form everywhere: singular values sorted
nonincreasing, values below ``ZERO_SV_RTOL * S[0]`` snapped to exactly zero,
and each left singular vector's largest-magnitude entry made nonnegative
(ties break to the lowest row index), negating the paired right vector in
tandem. Canonical form makes independently computed factorizations directly
comparable in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative cutoff below which a singular value is reported as exactly zero.
ZERO_SV_RTOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a C-contiguous float64 2-D array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def as_vector(x, length: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate and return a C-contiguous float64 1-D array."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {vec.shape}")
    if length is not None and vec.shape[0] != length:
        raise ValueError(f"{name} has length {vec.shape[0]}, expected {length}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(vec)


@dataclass
class SvdFactors:
    """A truncated SVD triplet: ``u`` (m, r), ``s`` (r,), ``vt`` (r, n)."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.u.shape[0]), int(self.vt.shape[1]))

    def copy(self) -> "SvdFactors":
        return SvdFactors(self.u.copy(), self.s.copy(), self.vt.copy())


def canonicalize_signs(u: np.ndarray, vt: np.ndarray) -> None:
    """Fix factor signs in place: each U column's largest-|entry| becomes >= 0.

    Ties resolve to the lowest row index (argmax semantics); the paired right
    vector flips in tandem so the reconstruction is unchanged.
    """
    if u.shape[1] == 0:
        return
    lead = np.argmax(np.abs(u), axis=0)
    flip = u[lead, np.arange(u.shape[1])] < 0.0
    if np.any(flip):
        u[:, flip] *= -1.0
        vt[flip, :] *= -1.0


def _snap_small(s: np.ndarray) -> np.ndarray:
    if s.size and s[0] > 0.0:
        s[s < ZERO_SV_RTOL * s[0]] = 0.0
    return s


def full_svd(a) -> SvdFactors:
    """Thin SVD of a dense matrix, in canonical form."""
    mat = as_matrix(a)
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    u = np.ascontiguousarray(u)
    vt = np.ascontiguousarray(vt)
    _snap_small(s)
    canonicalize_signs(u, vt)
    return SvdFactors(u, s, vt)


def truncated_svd(a, k: int) -> SvdFactors:
    """Top ``min(k, m, n)`` SVD triplets of ``a``.

    Exact zeros inside that width are kept, so the factor width is always
    ``min(k, m, n)`` regardless of the numerical rank of ``a``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    f = full_svd(a)
    w = min(int(k), f.rank)
    return SvdFactors(
        np.ascontiguousarray(f.u[:, :w]),
        f.s[:w].copy(),
        np.ascontiguousarray(f.vt[:w, :]),
    )


def reconstruct(f: SvdFactors) -> np.ndarray:
    """Dense matrix ``u @ diag(s) @ vt``."""
    if f.u.shape[1] != f.s.shape[0] or f.vt.shape[0] != f.s.shape[0]:
        raise ValueError(
            f"inconsistent factor shapes {f.u.shape}, {f.s.shape}, {f.vt.shape}"
        )
    return (f.u * f.s) @ f.vt


def frobenius_norm(a) -> float:
    """Frobenius norm of a dense matrix (2-norm of a vector)."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def orthonormality_defect(q) -> float:
    """Frobenius distance of ``q.T @ q`` from the identity."""
    q = np.asarray(q, dtype=np.float64)
    gram = q.T @ q
    return float(np.linalg.norm(gram - np.eye(q.shape[1])))


def principal_angle_max(q1, q2) -> float:
    """Largest principal angle (radians) between two orthonormal column spans.

    Equals ``arccos`` of the smallest singular value of ``q1.T @ q2``, clamped
    into [0, 1] against roundoff. Both bases must have the same ambient
    dimension and the same number of columns.
    """
    q1 = as_matrix(q1, "q1")
    q2 = as_matrix(q2, "q2")
    if q1.shape[0] != q2.shape[0]:
        raise ValueError(f"ambient dimensions differ: {q1.shape[0]} vs {q2.shape[0]}")
    if q1.shape[1] != q2.shape[1]:
        raise ValueError(f"column counts differ: {q1.shape[1]} vs {q2.shape[1]}")
    if q1.shape[1] == 0:
        raise ValueError("subspaces must have at least one column")
    for name, q in (("q1", q1), ("q2", q2)):
        if orthonormality_defect(q) > 1e-6:
            raise ValueError(f"{name} is not orthonormal (defect > 1e-6)")
    overlap = np.linalg.svd(q1.T @ q2, compute_uv=False)
    cos_min = min(1.0, max(0.0, float(overlap[-1])))
    return float(np.arccos(cos_min))
