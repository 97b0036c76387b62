"""Acceptance gate: every numbered check must hold on pinned streams.

The checks live in ``svdstream.acceptance`` so the CLI ``verify`` subcommand
and this test module run exactly the same code. The whole suite is executed
once per test session; each test reports one criterion.
"""

import pytest

from svdstream.acceptance import run_acceptance


@pytest.fixture(scope="module")
def results():
    return {r.number: r for r in run_acceptance()}


def _require(results, number):
    result = results[number]
    assert result.passed, f"criterion {number} ({result.name}): {result.detail}"


def test_01_appends_are_exact_below_the_rank_budget(results):
    _require(results, 1)


def test_02_rank_one_updates_match_the_projection_formula(results):
    _require(results, 2)


def test_03_factors_stay_orthonormal_for_ten_thousand_events(results):
    _require(results, 3)


def test_04_error_ratio_never_beats_the_optimum(results):
    _require(results, 4)


def test_05_refresh_cadence_bounds_terminal_drift(results):
    _require(results, 5)


def test_06_refresh_resets_angle_and_ratio_sawtooth(results):
    _require(results, 6)


def test_07_update_cost_grows_with_maintained_rank(results):
    _require(results, 7)


def test_08_tracked_norm_matches_direct_recomputation(results):
    _require(results, 8)


def test_09_finance_errors_shrink_with_refresh_cadence(results):
    _require(results, 9)


def test_10_snapshots_are_causal(results):
    _require(results, 10)


def test_11_policy_triggers_obey_their_laws(results):
    _require(results, 11)


def test_12_batch_svd_agrees_with_gram_eigenvalues(results):
    _require(results, 12)
