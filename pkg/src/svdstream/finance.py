"""Online factor/covariance pipeline.

Ingests a wide price panel (or generates a synthetic factor-model one),
builds causally centered log returns, streams the rows through an
:class:`~svdstream.engine.SvdEngine`, and at a logging cadence compares the
incrementally maintained low-rank covariance and portfolio volatilities
against a freshly computed batch baseline.

Centering is causal on purpose: row ``t`` of the centered panel depends only
on returns up to and including day ``t``, so no snapshot ever sees the
future.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .engine import SvdEngine
from .linalg import (
    SvdFactors,
    as_matrix,
    frobenius_norm,
    full_svd,
    principal_angle_max,
    reconstruct,
)
from .metrics import error_ratio
from .policies import (
    PolicyConfig,
    angle_should_refresh,
    error_should_refresh,
    periodic_should_refresh,
)
from .rng import PANEL, PORTFOLIO, substream

logger = logging.getLogger(__name__)

# Per-factor daily volatilities for the synthetic panel; extra factors beyond
# the third decay geometrically from the last pinned value.
_FACTOR_VOLS = (0.012, 0.008, 0.005)
_IDIO_VOL = 0.004


# --------------------------------------------------------------- ingestion


@dataclass
class PriceTable:
    """Wide price panel: one row per date, one column per ticker."""

    dates: list[str]
    tickers: list[str]
    prices: np.ndarray  # (T, N), strictly positive

    def __post_init__(self):
        self.prices = as_matrix(self.prices, "prices")
        if self.prices.shape != (len(self.dates), len(self.tickers)):
            raise ValueError(
                f"prices shape {self.prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )


def load_prices(path) -> PriceTable:
    """Read a comma-separated price file into a validated :class:`PriceTable`.

    Expected layout: header ``date,<ticker1>,<ticker2>,...``, ISO-8601 dates,
    strictly increasing, decimal prices. Days with any missing price are
    dropped (and counted in the log); nonpositive prices are a hard error
    because their log returns are undefined.
    """
    try:
        df = pd.read_csv(path)
    except Exception as exc:  # pandas raises several parser types
        raise ValueError(f"could not parse price file {path}: {exc}") from exc
    if df.shape[1] < 2:
        raise ValueError(f"{path}: need a date column plus at least one ticker")
    if df.columns[0] != "date":
        raise ValueError(f"{path}: first column must be 'date', got {df.columns[0]!r}")

    tickers = [str(c) for c in df.columns[1:]]
    try:
        when = pd.to_datetime(df["date"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise ValueError(f"{path}: unparseable date: {exc}") from exc
    for col in tickers:
        try:
            df[col] = pd.to_numeric(df[col])
        except (ValueError, TypeError) as exc:
            raise ValueError(f"{path}: column {col!r}: {exc}") from exc

    keep = ~df[tickers].isna().any(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        logger.info("%s: dropped %d day(s) with missing prices", path, dropped)
    when = when[keep]
    values = df.loc[keep, tickers].to_numpy(dtype=np.float64)
    if len(when) == 0:
        raise ValueError(f"{path}: no complete rows")

    dup = when.duplicated()
    if dup.any():
        raise ValueError(f"{path}: duplicate date {when[dup].iloc[0].date()}")
    if not when.is_monotonic_increasing:
        bad = int(np.argmax(np.diff(when.to_numpy()) < np.timedelta64(0)))
        raise ValueError(f"{path}: dates out of order at row {bad + 2}")

    nonpos = np.argwhere(values <= 0.0)
    if nonpos.size:
        r, c = nonpos[0]
        raise ValueError(
            f"{path}: nonpositive price {values[r, c]} for {tickers[c]} "
            f"on {when.iloc[int(r)].date()}"
        )
    dates = [d.strftime("%Y-%m-%d") for d in when]
    return PriceTable(dates=dates, tickers=tickers, prices=values)


def log_returns(prices) -> np.ndarray:
    """(T-1) x N matrix of log price ratios log(P_t / P_{t-1})."""
    p = as_matrix(prices, "prices")
    if p.shape[0] < 2:
        raise ValueError(f"need at least 2 dates for returns, got {p.shape[0]}")
    if np.any(p <= 0.0):
        raise ValueError("prices must be strictly positive")
    return np.diff(np.log(p), axis=0)


def center_expanding(returns) -> np.ndarray:
    """Subtract the expanding mean (including the current day) from each row.

    The first centered row is exactly zero; row ``t`` depends only on rows
    ``<= t``.
    """
    r = as_matrix(returns, "returns")
    counts = np.arange(1, r.shape[0] + 1, dtype=np.float64)[:, None]
    return r - np.cumsum(r, axis=0) / counts


def center_ew(returns, alpha: float) -> np.ndarray:
    """Subtract an exponentially weighted mean (mu_0 = 0) from each row.

    mu_t = (1 - alpha) * mu_{t-1} + alpha * r_t, then row t becomes
    r_t - mu_t. The zero start means early rows are only partially de-meaned;
    that bias decays at rate (1 - alpha)^t.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    r = as_matrix(returns, "returns")
    centered = np.empty_like(r)
    mu = np.zeros(r.shape[1])
    for t in range(r.shape[0]):
        mu = (1.0 - alpha) * mu + alpha * r[t]
        centered[t] = r[t] - mu
    return centered


@dataclass
class ReturnsPanel:
    """Log returns plus their causally centered version, aligned on dates."""

    dates: list[str]
    tickers: list[str]
    returns: np.ndarray  # (T, N)
    centered: np.ndarray  # (T, N)
    centering_mode: str

    def __post_init__(self):
        self.returns = as_matrix(self.returns, "returns")
        self.centered = as_matrix(self.centered, "centered")
        expected = (len(self.dates), len(self.tickers))
        if self.returns.shape != expected or self.centered.shape != expected:
            raise ValueError(
                f"panel shapes {self.returns.shape}/{self.centered.shape} "
                f"do not match {expected}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.returns.shape


def build_panel(table: PriceTable, centering: str = "expanding", alpha: float = 0.06) -> ReturnsPanel:
    """Turn a price table into a centered returns panel.

    ``centering`` is ``"expanding"`` or ``"ew"`` (exponentially weighted with
    the given ``alpha``).
    """
    r = log_returns(table.prices)
    if centering == "expanding":
        centered = center_expanding(r)
        mode = "expanding"
    elif centering == "ew":
        centered = center_ew(r, alpha)
        mode = f"exponentially_weighted(alpha={alpha:g})"
    else:
        raise ValueError(f"unknown centering {centering!r} (expected expanding|ew)")
    return ReturnsPanel(
        dates=table.dates[1:],
        tickers=table.tickers,
        returns=r,
        centered=centered,
        centering_mode=mode,
    )


def gen_synthetic_panel(
    assets: int = 60,
    days: int = 1640,
    factors: int = 3,
    seed: int = 0,
    regime_shift: int | None = None,
    shift_scale: float = 3.0,
) -> PriceTable:
    """Business-day price panel driven by a known latent factor model.

    Daily returns are ``B f_t + eps_t`` with ``B ~ N(0,1)`` loadings, factor
    volatilities from ``_FACTOR_VOLS``, and idiosyncratic noise. ``days``
    counts price rows, so the panel yields ``days - 1`` return rows. If
    ``regime_shift`` is given, every return row from that index on is scaled
    by ``shift_scale`` (a volatility regime change, transient by design).
    """
    if assets < 1:
        raise ValueError(f"assets must be >= 1, got {assets}")
    if days < 2:
        raise ValueError(f"days must be >= 2, got {days}")
    if factors < 1:
        raise ValueError(f"factors must be >= 1, got {factors}")
    n_ret = days - 1
    if regime_shift is not None and not 0 <= regime_shift < n_ret:
        raise ValueError(f"regime_shift must be in [0, {n_ret}), got {regime_shift}")

    vols = list(_FACTOR_VOLS[:factors])
    while len(vols) < factors:
        vols.append(vols[-1] * 0.7)
    rng = substream(seed, PANEL)
    loadings = rng.standard_normal((assets, factors))
    fac = rng.standard_normal((n_ret, factors)) * np.asarray(vols)
    idio = rng.standard_normal((n_ret, assets)) * _IDIO_VOL
    rets = fac @ loadings.T + idio
    if regime_shift is not None:
        rets[regime_shift:] *= float(shift_scale)

    base = rng.uniform(20.0, 200.0, assets)
    log_prices = np.vstack([np.zeros(assets), np.cumsum(rets, axis=0)])
    prices = base * np.exp(log_prices)
    dates = [
        d.strftime("%Y-%m-%d")
        for d in pd.bdate_range("2017-01-02", periods=days)
    ]
    tickers = [f"A{i:03d}" for i in range(assets)]
    return PriceTable(dates=dates, tickers=tickers, prices=prices)


# -------------------------------------------------------------- portfolios


@dataclass
class PortfolioSpec:
    """Long-only weights over N assets, summing to one."""

    weights: np.ndarray
    label: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError(f"weights must be a nonempty 1-D array, got shape {w.shape}")
        if np.any(w < 0.0):
            raise ValueError(f"portfolio {self.label!r} has negative weights")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(
                f"portfolio {self.label!r} weights sum to {w.sum()!r}, expected 1"
            )
        self.weights = w

    @property
    def n_assets(self) -> int:
        return self.weights.shape[0]


def equal_weights(n: int, label: str = "equal") -> PortfolioSpec:
    """The 1/N portfolio."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return PortfolioSpec(np.full(n, 1.0 / n), label)


def dirichlet_portfolios(
    n: int, count: int, concentration: float = 1.0, seed: int = 0
) -> list[PortfolioSpec]:
    """Draw ``count`` long-only portfolios from Dirichlet(concentration)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not concentration > 0.0:
        raise ValueError(f"concentration must be positive, got {concentration}")
    rng = substream(seed, PORTFOLIO)
    alpha = np.full(n, float(concentration))
    return [
        PortfolioSpec(rng.dirichlet(alpha), f"dirichlet{i + 1}")
        for i in range(count)
    ]


def dirichlet_weights(
    n: int, concentration: float = 1.0, seed: int = 0, label: str = "dirichlet"
) -> PortfolioSpec:
    """One Dirichlet-drawn portfolio, deterministic per seed."""
    spec = dirichlet_portfolios(n, 1, concentration, seed)[0]
    spec.label = label
    return spec


# ---------------------------------------------------------- risk quantities


def low_rank_covariance(f: SvdFactors, t: int) -> np.ndarray:
    """Covariance implied by a factorization of t centered rows.

    (1/(t-1)) * V diag(s^2) V^T, symmetrized against floating-point drift.
    """
    if t < 2:
        raise ValueError(f"need at least 2 rows for a covariance, got t={t}")
    v = f.vt.T
    cov = (v * (f.s**2)) @ v.T / (t - 1.0)
    return 0.5 * (cov + cov.T)


def covariance_rel_error(inc, orc) -> float:
    """Relative Frobenius distance between two covariance estimates."""
    inc = as_matrix(inc, "incremental covariance")
    orc = as_matrix(orc, "baseline covariance")
    if inc.shape != orc.shape:
        raise ValueError(f"covariance shapes differ: {inc.shape} vs {orc.shape}")
    denom = frobenius_norm(orc)
    if denom <= 0.0:
        raise ValueError("baseline covariance has zero norm; relative error undefined")
    return frobenius_norm(inc - orc) / denom


def portfolio_vol(cov, portfolio: PortfolioSpec) -> float:
    """sqrt(w^T cov w), clamping tiny negative quadratic forms to zero."""
    cov = as_matrix(cov, "covariance")
    if cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got {cov.shape}")
    if portfolio.n_assets != cov.shape[0]:
        raise ValueError(
            f"portfolio {portfolio.label!r} has {portfolio.n_assets} weights "
            f"for a {cov.shape[0]}-asset covariance"
        )
    w = portfolio.weights
    quad = float(w @ cov @ w)
    if quad < -1e-10:
        raise ValueError(f"covariance is not PSD on {portfolio.label!r}: w'Cw = {quad}")
    return math.sqrt(max(0.0, quad))


def risk_rel_error(vol_inc: float, vol_orc: float) -> float:
    """Relative volatility error |inc - orc| / orc."""
    if not vol_orc > 0.0:
        raise ValueError(f"baseline volatility must be positive, got {vol_orc}")
    return abs(vol_inc - vol_orc) / vol_orc


# ------------------------------------------------------------- stream loop


@dataclass
class RiskSnapshot:
    """One logged day of the finance stream (post-refresh state)."""

    step: int  # streamed days since the initial window (1-based)
    date: str
    cov_rel_error: float
    risk_rel_error: dict[str, float]
    angle_factor: float  # largest principal angle between V subspaces
    refreshed: bool
    rank: int
    update_time: float  # that day's append, seconds
    opt_time: float  # batch SVD for this snapshot, seconds


def run_finance_stream(
    panel: ReturnsPanel,
    t0: int,
    k: int,
    policy: PolicyConfig | None = None,
    portfolios: list[PortfolioSpec] | None = None,
    log_every: int = 5,
    tol: float = 1e-10,
    reortho_guard: bool = False,
) -> list[RiskSnapshot]:
    """Stream a centered returns panel one day at a time.

    The engine is initialized on the first ``t0`` centered rows; every later
    row is appended as an event. At the logging cadence (and always on the
    final day) a batch SVD of the same centered matrix is computed and the
    snapshot records covariance / per-portfolio risk errors and the factor
    (right-subspace) angle. Policy triggers are evaluated on pre-refresh
    metrics; snapshots describe the post-refresh state, so refresh days show
    the reset.
    """
    total, n = panel.shape
    if not 2 <= t0 < total:
        raise ValueError(f"t0 must be in [2, {total}), got {t0}")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if log_every < 1:
        raise ValueError(f"log_every must be >= 1, got {log_every}")
    policy = policy or PolicyConfig()
    portfolios = list(portfolios) if portfolios is not None else [equal_weights(n)]
    for p in portfolios:
        if p.n_assets != n:
            raise ValueError(f"portfolio {p.label!r} does not match {n} assets")

    returns = panel.centered
    engine = SvdEngine(returns[:t0], k, tol=tol, reortho_guard=reortho_guard)
    engine.set_reference()

    snapshots: list[RiskSnapshot] = []
    t_last_refresh = 0
    for day in range(t0, total):
        step = day - t0 + 1
        start = time.perf_counter()
        try:
            engine.row_append(returns[day])
        except ValueError as exc:
            raise ValueError(f"append failed on {panel.dates[day]}: {exc}") from exc
        update_time = time.perf_counter() - start

        rows = day + 1
        logged = step % log_every == 0 or day == total - 1
        batch: SvdFactors | None = None
        opt_time = 0.0
        if logged:
            start = time.perf_counter()
            batch = full_svd(returns[:rows])
            opt_time = time.perf_counter() - start

        fire = False
        if policy.kind == "periodic":
            fire = periodic_should_refresh(step, policy.period)
        elif policy.kind == "error" and batch is not None:
            width = engine.factors.rank
            e_opt = float(np.sqrt(np.sum(batch.s[width:] ** 2)))
            e_inc = frobenius_norm(engine.tracked - reconstruct(engine.factors))
            fire = error_should_refresh(
                error_ratio(e_inc, e_opt), policy.gamma, step, t_last_refresh,
                policy.min_spacing,
            )
        elif policy.kind == "angle" and batch is not None:
            width = engine.factors.rank
            angle = principal_angle_max(engine.factors.u, batch.u[:, :width])
            fire = angle_should_refresh(angle, policy.theta_max)
        if fire:
            engine.refresh(store_reference=True)
            t_last_refresh = step

        if logged:
            snapshots.append(
                _take_snapshot(
                    engine, batch, rows, step, panel.dates[day], portfolios,
                    refreshed=fire, update_time=update_time, opt_time=opt_time,
                )
            )
    return snapshots


def _take_snapshot(
    engine: SvdEngine,
    batch: SvdFactors,
    rows: int,
    step: int,
    date: str,
    portfolios: list[PortfolioSpec],
    refreshed: bool,
    update_time: float,
    opt_time: float,
) -> RiskSnapshot:
    inc = engine.factors
    width = inc.rank
    best = SvdFactors(
        np.ascontiguousarray(batch.u[:, :width]),
        batch.s[:width].copy(),
        np.ascontiguousarray(batch.vt[:width, :]),
    )
    angle = principal_angle_max(inc.vt.T, best.vt.T)
    cov_inc = low_rank_covariance(inc, rows)
    cov_best = low_rank_covariance(best, rows)
    cov_err = covariance_rel_error(cov_inc, cov_best)
    risks: dict[str, float] = {}
    for p in portfolios:
        vol_best = portfolio_vol(cov_best, p)
        try:
            risks[p.label] = risk_rel_error(portfolio_vol(cov_inc, p), vol_best)
        except ValueError:
            logger.warning(
                "zero baseline volatility for %r on %s; error undefined",
                p.label, date,
            )
            risks[p.label] = math.nan
    return RiskSnapshot(
        step=step,
        date=date,
        cov_rel_error=cov_err,
        risk_rel_error=risks,
        angle_factor=angle,
        refreshed=refreshed,
        rank=width,
        update_time=update_time,
        opt_time=opt_time,
    )
