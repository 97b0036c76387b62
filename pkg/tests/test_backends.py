"""Kernel contracts and compiled-vs-python backend parity."""

import os
import subprocess
import sys

import numpy as np
import pytest

from svdstream import backend
from svdstream.linalg import full_svd, orthonormality_defect, reconstruct

HAVE_BOTH = len(backend.available_backends()) == 2

needs_both = pytest.mark.skipif(
    not HAVE_BOTH, reason="compiled kernels are not built"
)


def _random_factors(m, n, r, seed):
    rng = np.random.default_rng(seed)
    f = full_svd(rng.standard_normal((m, r)) @ rng.standard_normal((r, n)))
    return f.u[:, :r].copy(), f.s[:r].copy(), f.vt[:r, :].copy()


# ---------------------------------------------------------------- core_svd


@pytest.mark.parametrize("size", [1, 2, 5, 9, 16])
def test_core_svd_reconstructs(size):
    rng = np.random.default_rng(size)
    core = rng.standard_normal((size, size))
    u, s, vt = backend.core_svd(core)
    assert np.allclose((u * s) @ vt, core, atol=1e-10)
    assert np.all(np.diff(s) <= 0.0)
    assert orthonormality_defect(u) <= 1e-10
    assert orthonormality_defect(vt.T) <= 1e-10


def test_core_svd_completes_dead_directions():
    # a core with a zero row forces a zero singular value; the matching
    # factor column must still be a unit vector orthogonal to the others
    core = np.array([[3.0, 1.0], [0.0, 0.0]])
    u, s, vt = backend.core_svd(core)
    assert s[-1] == 0.0
    assert orthonormality_defect(u) <= 1e-12
    assert orthonormality_defect(vt.T) <= 1e-12


# ----------------------------------------------------------------- kernels


def test_row_append_matches_stacked_batch_svd():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((6, 5))
    x = rng.standard_normal(5)
    f = full_svd(a)
    u, s, vt, rho = backend.row_append(f.u, f.s, f.vt, x, 1e-10, 6)
    stacked = np.vstack([a, x[None, :]])
    assert rho > 0.0
    assert np.allclose((u * s) @ vt, reconstruct(full_svd(stacked)), atol=1e-9)


def test_row_append_in_span_takes_zero_residual_branch():
    u, s, vt = _random_factors(7, 6, 3, seed=4)
    x = np.array([0.4, -1.1, 0.3]) @ vt  # lies in the current row space
    u2, s2, vt2, rho = backend.row_append(u, s, vt, x, 1e-10, 4)
    assert rho <= 1e-10
    # no new right direction carries energy
    assert s2[-1] == 0.0
    assert np.count_nonzero(s2) == 3


def test_rank_one_matches_projection_formula():
    u, s, vt = _random_factors(8, 6, 3, seed=2)
    i, j, delta = 5, 2, 0.7
    u2, s2, vt2 = backend.rank_one(u, s, vt, i, j, delta, 3)
    # brute-force baseline: project the perturbed reconstruction back onto
    # the old subspaces
    bump = np.zeros((8, 6))
    bump[i, j] = delta
    projected = (u @ u.T) @ ((u * s) @ vt + bump) @ (vt.T @ vt)
    assert np.allclose((u2 * s2) @ vt2, projected, atol=1e-10)


# ------------------------------------------------------------------ parity


@needs_both
@pytest.mark.parametrize("kernel", ["row_append", "rank_one", "core_svd"])
def test_backends_agree(kernel, restore_backend):
    rng = np.random.default_rng(99)
    u, s, vt = _random_factors(10, 8, 4, seed=99)
    x = rng.standard_normal(8)
    core = rng.standard_normal((7, 7))

    outputs = {}
    for name in backend.available_backends():
        backend.set_backend(name)
        if kernel == "row_append":
            outputs[name] = backend.row_append(u, s, vt, x, 1e-10, 5)
        elif kernel == "rank_one":
            outputs[name] = backend.rank_one(u, s, vt, 3, 6, 0.25, 4)
        else:
            outputs[name] = backend.core_svd(core)

    # compare sign-invariant quantities: spectra and reconstructions (raw
    # kernels may pick different column signs)
    uc, sc, vtc = outputs["compiled"][:3]
    up, sp, vtp = outputs["python"][:3]
    assert np.allclose(sc, sp, atol=1e-12)
    assert np.allclose((uc * sc) @ vtc, (up * sp) @ vtp, atol=1e-11)
    if kernel == "row_append":
        assert abs(outputs["compiled"][3] - outputs["python"][3]) <= 1e-12


@needs_both
def test_backends_agree_over_update_sequence(restore_backend):
    # identical event sequence, one engine per backend
    from svdstream.engine import SvdEngine

    rng = np.random.default_rng(5)
    a0 = rng.standard_normal((12, 10))
    rows = [rng.standard_normal(10) for _ in range(5)]
    bumps = [(int(r % 12), int(c % 10), d) for r, c, d in
             zip(rng.integers(0, 100, 5), rng.integers(0, 100, 5),
                 rng.normal(0, 0.1, 5))]

    results = {}
    for name in backend.available_backends():
        backend.set_backend(name)
        eng = SvdEngine(a0, k=6)
        for x in rows:
            eng.row_append(x)
        for i, j, d in bumps:
            eng.rank_one_update(i, j, d)
        results[name] = reconstruct(eng.factors)

    assert np.allclose(results["compiled"], results["python"], atol=1e-11)


# --------------------------------------------------------------- selection


def test_set_backend_rejects_unknown(restore_backend):
    with pytest.raises(ValueError):
        backend.set_backend("fortran")


def test_set_backend_python_always_available(restore_backend):
    backend.set_backend("python")
    assert backend.active_backend() == "python"


def test_env_var_forces_python_backend():
    code = "import svdstream.backend as b; print(b.active_backend())"
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={**os.environ, "SVDSTREAM_BACKEND": "python"},
    )
    assert out.returncode == 0
    assert out.stdout.strip() == "python"
