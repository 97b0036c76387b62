"""Tests for price ingestion, causal centering, and the streamed risk pipeline."""

import math

import numpy as np
import pytest

from svdstream.finance import (
    PortfolioSpec,
    build_panel,
    center_ew,
    center_expanding,
    covariance_rel_error,
    dirichlet_portfolios,
    dirichlet_weights,
    equal_weights,
    gen_synthetic_panel,
    load_prices,
    log_returns,
    low_rank_covariance,
    portfolio_vol,
    risk_rel_error,
    run_finance_stream,
)
from svdstream.linalg import full_svd
from svdstream.policies import PolicyConfig


# ---------------------------------------------------------------- ingestion


def _write(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


GOOD = """date,AAA,BBB
2020-01-01,100.0,50.0
2020-01-02,101.0,49.5
2020-01-03,102.5,50.5
"""


class TestLoadPrices:
    def test_small_fixture(self, tmp_path):
        table = load_prices(_write(tmp_path, GOOD))
        assert table.prices.shape == (3, 2)
        assert table.tickers == ["AAA", "BBB"]
        assert table.prices[0, 0] == 100.0

    def test_rows_with_gaps_are_dropped(self, tmp_path):
        text = "date,AAA,BBB\n2020-01-01,100,50\n2020-01-02,,49\n2020-01-03,102,51\n"
        table = load_prices(_write(tmp_path, text))
        assert table.prices.shape == (2, 2)
        assert len(table.dates) == 2

    def test_nonpositive_price_rejected(self, tmp_path):
        text = "date,AAA\n2020-01-01,100\n2020-01-02,-3\n"
        with pytest.raises(ValueError, match="AAA"):
            load_prices(_write(tmp_path, text))

    def test_duplicate_dates_rejected(self, tmp_path):
        text = "date,AAA\n2020-01-01,100\n2020-01-01,101\n"
        with pytest.raises(ValueError):
            load_prices(_write(tmp_path, text))

    def test_unsorted_dates_rejected(self, tmp_path):
        text = "date,AAA\n2020-01-02,100\n2020-01-01,101\n"
        with pytest.raises(ValueError):
            load_prices(_write(tmp_path, text))

    def test_garbage_cell_rejected(self, tmp_path):
        text = "date,AAA\n2020-01-01,100\n2020-01-02,banana\n"
        with pytest.raises(ValueError, match="AAA"):
            load_prices(_write(tmp_path, text))

    def test_missing_date_column_rejected(self, tmp_path):
        text = "day,AAA\n2020-01-01,100\n"
        with pytest.raises(ValueError):
            load_prices(_write(tmp_path, text))


# ------------------------------------------------------------------ returns


class TestLogReturns:
    def test_ten_percent_move(self):
        r = log_returns(np.array([[100.0], [110.0]]))
        assert abs(r[0, 0] - math.log(1.1)) < 1e-15

    def test_constant_prices_give_zero(self):
        r = log_returns(np.full((5, 3), 42.0))
        assert np.array_equal(r, np.zeros((4, 3)))

    def test_exponential_trend_gives_constant(self):
        prices = np.exp(0.01 * np.arange(6))[:, None]
        r = log_returns(prices)
        assert np.allclose(r, 0.01, atol=1e-12)

    def test_needs_two_dates(self):
        with pytest.raises(ValueError):
            log_returns(np.array([[100.0, 50.0]]))


class TestCenterExpanding:
    def test_two_day_example(self):
        centered = center_expanding(np.array([[2.0], [4.0]]))
        assert centered[0, 0] == 0.0
        assert centered[1, 0] == 1.0

    def test_constant_returns_center_to_zero(self):
        centered = center_expanding(np.full((7, 2), 0.3))
        assert np.allclose(centered, 0.0, atol=1e-15)

    def test_first_row_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        centered = center_expanding(rng.standard_normal((10, 4)))
        assert np.array_equal(centered[0], np.zeros(4))

    def test_matches_batch_means(self):
        rng = np.random.default_rng(1)
        r = rng.standard_normal((100, 5))
        centered = center_expanding(r)
        for t in range(100):
            assert np.allclose(centered[t], r[t] - r[: t + 1].mean(axis=0), atol=1e-12)


class TestCenterEw:
    def test_two_day_example(self):
        # mu: 0 -> 0.5 -> 0.75, so the centered values are 0.5 and 0.25
        centered = center_ew(np.array([[1.0], [1.0]]), alpha=0.5)
        assert centered[0, 0] == 0.5
        assert centered[1, 0] == 0.25

    def test_alpha_near_one_centers_everything(self):
        rng = np.random.default_rng(2)
        centered = center_ew(rng.standard_normal((6, 3)), alpha=1.0 - 1e-12)
        assert np.allclose(centered, 0.0, atol=1e-9)

    def test_matches_closed_form_weights(self):
        # mu_t = alpha * sum_s (1-alpha)^(t-s) r_s, replayed independently
        rng = np.random.default_rng(3)
        r = rng.standard_normal((50, 3))
        alpha = 0.07
        centered = center_ew(r, alpha)
        for t in (0, 10, 49):
            weights = alpha * (1.0 - alpha) ** np.arange(t, -1, -1)
            mu = weights @ r[: t + 1]
            assert np.allclose(centered[t], r[t] - mu, atol=1e-12)

    def test_causal(self):
        rng = np.random.default_rng(4)
        r = rng.standard_normal((20, 2))
        tweaked = r.copy()
        tweaked[15:] += 5.0
        assert np.array_equal(center_ew(r, 0.1)[:15], center_ew(tweaked, 0.1)[:15])

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
    def test_alpha_out_of_range_rejected(self, alpha):
        with pytest.raises(ValueError):
            center_ew(np.zeros((3, 1)), alpha)


class TestBuildPanel:
    def test_expanding_default(self, tmp_path):
        panel = build_panel(load_prices(_write(tmp_path, GOOD)))
        assert panel.centering_mode == "expanding"
        assert panel.shape == (2, 2)
        assert panel.returns.shape == (2, 2)
        assert np.array_equal(panel.centered[0], np.zeros(2))

    def test_ew_mode_records_alpha(self, tmp_path):
        panel = build_panel(load_prices(_write(tmp_path, GOOD)), "ew", alpha=0.06)
        assert panel.centering_mode == "exponentially_weighted(alpha=0.06)"

    def test_unknown_mode_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_panel(load_prices(_write(tmp_path, GOOD)), "rolling")


class TestSyntheticPanel:
    def test_shape_and_positivity(self):
        table = gen_synthetic_panel(assets=10, days=50, factors=3, seed=0)
        assert table.prices.shape == (50, 10)
        assert np.all(table.prices > 0.0)
        assert len(table.dates) == 50
        assert len(table.tickers) == 10

    def test_deterministic(self):
        a = gen_synthetic_panel(assets=6, days=30, seed=5)
        b = gen_synthetic_panel(assets=6, days=30, seed=5)
        assert np.array_equal(a.prices, b.prices)

    def test_factor_structure_dominates(self):
        table = gen_synthetic_panel(assets=30, days=400, factors=3, seed=1)
        r = log_returns(table.prices)
        s = np.linalg.svd(r - r.mean(axis=0), compute_uv=False)
        # three factor directions carry most of the energy
        assert np.sum(s[:3] ** 2) / np.sum(s**2) > 0.6

    def test_regime_shift_scales_returns(self):
        quiet = gen_synthetic_panel(assets=8, days=60, seed=2)
        shifted = gen_synthetic_panel(assets=8, days=60, seed=2, regime_shift=40)
        r_quiet = log_returns(quiet.prices)
        r_shifted = log_returns(shifted.prices)
        assert np.allclose(r_shifted[:39], r_quiet[:39], atol=1e-12)
        assert np.allclose(r_shifted[40:], 3.0 * r_quiet[40:], rtol=1e-10)


# --------------------------------------------------------------- portfolios


class TestPortfolios:
    def test_equal_weights(self):
        spec = equal_weights(4)
        assert np.allclose(spec.weights, 0.25, atol=1e-15)
        assert spec.label == "equal"

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            PortfolioSpec(weights=np.array([0.5, 0.4]), label="short")

    def test_weights_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            PortfolioSpec(weights=np.array([1.5, -0.5]), label="levered")

    def test_dirichlet_single_asset(self):
        assert abs(dirichlet_weights(1, seed=0).weights[0] - 1.0) <= 1e-12

    def test_dirichlet_on_simplex(self):
        spec = dirichlet_weights(12, concentration=0.7, seed=3)
        assert abs(spec.weights.sum() - 1.0) <= 1e-12
        assert np.all(spec.weights >= 0.0)

    def test_dirichlet_deterministic(self):
        a = dirichlet_weights(5, seed=11)
        b = dirichlet_weights(5, seed=11)
        assert np.array_equal(a.weights, b.weights)

    def test_high_concentration_approaches_equal_weights(self):
        spec = dirichlet_weights(10, concentration=1e6, seed=4)
        assert np.max(np.abs(spec.weights - 0.1)) <= 0.01

    def test_batch_draw_labels(self):
        specs = dirichlet_portfolios(6, count=3, seed=5)
        assert [p.label for p in specs] == ["dirichlet1", "dirichlet2", "dirichlet3"]


# --------------------------------------------------------------- risk math


class TestLowRankCovariance:
    def test_two_day_single_asset(self):
        f = full_svd(np.array([[1.0], [-1.0]]))
        cov = low_rank_covariance(f, t=2)
        assert cov.shape == (1, 1)
        assert abs(cov[0, 0] - 2.0) < 1e-12

    def test_orthogonal_columns_give_diagonal(self):
        r = np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, 0.0], [0.0, -2.0]])
        cov = low_rank_covariance(full_svd(r), t=4)
        assert abs(cov[0, 1]) < 1e-12
        assert abs(cov[1, 0]) < 1e-12

    def test_matches_gram_matrix(self):
        rng = np.random.default_rng(6)
        r = rng.standard_normal((50, 6))
        cov = low_rank_covariance(full_svd(r), t=50)
        assert np.allclose(cov, r.T @ r / 49.0, atol=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(7)
        cov = low_rank_covariance(full_svd(rng.standard_normal((30, 5))), t=30)
        assert np.array_equal(cov, cov.T)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            low_rank_covariance(full_svd(np.ones((1, 2))), t=1)


class TestCovarianceRelError:
    def test_identical_matrices(self):
        cov = np.eye(3)
        assert covariance_rel_error(cov, cov) == 0.0

    def test_one_percent_scale(self):
        cov = np.diag([2.0, 1.0])
        assert abs(covariance_rel_error(1.01 * cov, cov) - 0.01) < 1e-12

    def test_zero_baseline_rejected(self):
        with pytest.raises(ValueError):
            covariance_rel_error(np.eye(2), np.zeros((2, 2)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            covariance_rel_error(np.eye(2), np.eye(3))


class TestPortfolioVol:
    def test_identity_covariance(self):
        vol = portfolio_vol(np.eye(2), equal_weights(2))
        assert abs(vol - math.sqrt(0.5)) < 1e-12

    def test_zero_covariance(self):
        assert portfolio_vol(np.zeros((3, 3)), equal_weights(3)) == 0.0

    def test_diagonal_covariance(self):
        spec = PortfolioSpec(weights=np.array([1.0, 0.0]), label="first")
        assert abs(portfolio_vol(np.diag([0.04, 0.01]), spec) - 0.2) < 1e-12

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            portfolio_vol(np.eye(3), equal_weights(2))

    def test_indefinite_quadratic_rejected(self):
        spec = PortfolioSpec(weights=np.array([1.0]), label="solo")
        with pytest.raises(ValueError):
            portfolio_vol(np.array([[-1.0]]), spec)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((6, 4))
        cov = a.T @ a
        w = dirichlet_weights(4, seed=9)
        perm = np.array([2, 0, 3, 1])
        permuted = PortfolioSpec(weights=w.weights[perm], label="permuted")
        assert abs(
            portfolio_vol(cov, w) - portfolio_vol(cov[np.ix_(perm, perm)], permuted)
        ) < 1e-12


def test_risk_rel_error():
    assert risk_rel_error(1.0, 1.0) == 0.0
    assert abs(risk_rel_error(1.001, 1.0) - 0.001) < 1e-12
    with pytest.raises(ValueError):
        risk_rel_error(1.0, 0.0)


# ------------------------------------------------------------ streamed runs


@pytest.fixture(scope="module")
def small_panel():
    return build_panel(gen_synthetic_panel(assets=20, days=320, factors=3, seed=1))


class TestRunFinanceStream:
    def test_single_streamed_day(self, small_panel):
        T, _ = small_panel.shape
        snaps = run_finance_stream(small_panel, t0=T - 1, k=5, log_every=5)
        assert len(snaps) == 1
        assert snaps[0].step == 1
        assert snaps[0].date == small_panel.dates[-1]

    def test_snapshots_at_cadence_plus_terminal(self, small_panel):
        T, _ = small_panel.shape
        snaps = run_finance_stream(small_panel, t0=100, k=3, log_every=5)
        steps = [s.step for s in snaps]
        streamed = T - 100
        expected = [t for t in range(1, streamed + 1) if t % 5 == 0]
        if streamed % 5 != 0:
            expected.append(streamed)
        assert steps == expected
        assert snaps[-1].date == small_panel.dates[-1]

    def test_full_rank_tracks_oracle_exactly(self, small_panel):
        _, N = small_panel.shape
        snaps = run_finance_stream(small_panel, t0=50, k=N, log_every=25)
        assert max(s.cov_rel_error for s in snaps) <= 1e-8

    def test_periodic_refresh_flagged(self, small_panel):
        snaps = run_finance_stream(
            small_panel,
            t0=100,
            k=3,
            policy=PolicyConfig(kind="periodic", period=20),
            log_every=5,
        )
        for s in snaps:
            assert s.refreshed == (s.step % 20 == 0)

    def test_refresh_beats_no_refresh_at_stream_end(self, small_panel):
        _, N = small_panel.shape
        runs = {}
        for name, policy in [
            ("none", PolicyConfig(kind="none")),
            ("p20", PolicyConfig(kind="periodic", period=20)),
        ]:
            runs[name] = run_finance_stream(
                small_panel,
                t0=100,
                k=3,
                policy=policy,
                portfolios=[equal_weights(N)],
                log_every=5,
            )
        assert runs["none"][-1].angle_factor > runs["p20"][-1].angle_factor
        assert runs["none"][-1].cov_rel_error > runs["p20"][-1].cov_rel_error

    def test_risk_errors_keyed_by_portfolio_label(self, small_panel):
        _, N = small_panel.shape
        portfolios = [equal_weights(N), dirichlet_weights(N, seed=2, label="tilt")]
        snaps = run_finance_stream(
            small_panel, t0=200, k=3, portfolios=portfolios, log_every=10
        )
        for s in snaps:
            assert set(s.risk_rel_error) == {"equal", "tilt"}
            for value in s.risk_rel_error.values():
                assert value >= 0.0

    def test_deterministic_modulo_timing(self, small_panel):
        a = run_finance_stream(small_panel, t0=150, k=3, log_every=20)
        b = run_finance_stream(small_panel, t0=150, k=3, log_every=20)
        for sa, sb in zip(a, b):
            assert sa.step == sb.step
            assert sa.cov_rel_error == sb.cov_rel_error
            assert sa.angle_factor == sb.angle_factor

    def test_no_lookahead(self):
        # changing the last day's prices must not move earlier snapshots
        base = gen_synthetic_panel(assets=10, days=120, factors=3, seed=7)
        bumped_prices = base.prices.copy()
        bumped_prices[-1] *= 1.5
        panel_a = build_panel(base)
        panel_b = build_panel(
            type(base)(dates=base.dates, tickers=base.tickers, prices=bumped_prices)
        )
        snaps_a = run_finance_stream(panel_a, t0=60, k=3, log_every=10)
        snaps_b = run_finance_stream(panel_b, t0=60, k=3, log_every=10)
        for sa, sb in zip(snaps_a[:-1], snaps_b[:-1]):
            assert sa.step == sb.step
            assert sa.cov_rel_error == sb.cov_rel_error
            assert sa.angle_factor == sb.angle_factor
        assert snaps_a[-1].cov_rel_error != snaps_b[-1].cov_rel_error

    def test_rejects_bad_window(self, small_panel):
        T, _ = small_panel.shape
        with pytest.raises(ValueError):
            run_finance_stream(small_panel, t0=1, k=3)
        with pytest.raises(ValueError):
            run_finance_stream(small_panel, t0=T, k=3)

    def test_rejects_oversized_rank(self, small_panel):
        _, N = small_panel.shape
        with pytest.raises(ValueError):
            run_finance_stream(small_panel, t0=100, k=N + 1)

    def test_rejects_wrong_portfolio_size(self, small_panel):
        with pytest.raises(ValueError):
            run_finance_stream(
                small_panel, t0=100, k=3, portfolios=[equal_weights(3)]
            )

    def test_rejects_bad_cadence(self, small_panel):
        with pytest.raises(ValueError):
            run_finance_stream(small_panel, t0=100, k=3, log_every=0)
