"""Synthetic event streams and the simulation loop.

Event generation is deterministic per seed (see :mod:`svdstream.rng` for the
substream layout) and independent of the engine, so a stream can be replayed
against any configuration. ``run_simulation`` produces one
:class:`~svdstream.metrics.MetricsRecord` per logical step: the init step and
every event; oracle-derived fields are filled at the ``log_every`` cadence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .engine import SvdEngine
from .linalg import as_vector
from .metrics import (
    MetricsRecord,
    OracleResult,
    angle_to_opt,
    collect,
    compute_oracle,
    error_ratio,
    frob_error,
)
from .policies import (
    PolicyConfig,
    angle_should_refresh,
    error_should_refresh,
    evr_select_rank,
    novelty_rank_bump,
    periodic_should_refresh,
)


@dataclass(frozen=True)
class RowAppend:
    values: np.ndarray


@dataclass(frozen=True)
class ColAppend:
    values: np.ndarray


@dataclass(frozen=True)
class RankOneUpdate:
    i: int
    j: int
    delta: float


UpdateEvent = RowAppend | ColAppend | RankOneUpdate


def apply_event(engine: SvdEngine, event: UpdateEvent) -> None:
    """Dispatch one event to the engine."""
    if isinstance(event, RowAppend):
        engine.row_append(event.values)
    elif isinstance(event, ColAppend):
        engine.col_append(event.values)
    elif isinstance(event, RankOneUpdate):
        engine.rank_one_update(event.i, event.j, event.delta)
    else:
        raise TypeError(f"unknown event type {type(event).__name__}")


# --------------------------------------------------------------- generators


def gen_low_rank(m: int, n: int, rank: int, noise_scale: float, seed: int) -> np.ndarray:
    """Random m x n matrix of the given true rank plus dense Gaussian noise."""
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank must be in [1, min(m, n)], got {rank} for {m}x{n}")
    if noise_scale < 0.0:
        raise ValueError(f"noise_scale must be >= 0, got {noise_scale}")
    gen = rng.substream(seed, rng.INIT)
    left = gen.standard_normal((m, rank))
    right = gen.standard_normal((n, rank))
    return left @ right.T + noise_scale * gen.standard_normal((m, n))


def gen_rank_one_events(
    count: int, delta_sd: float, rows: int, cols: int, seed: int
) -> list[RankOneUpdate]:
    """Uniform random in-bounds (i, j) with normal deltas of sd ``delta_sd``."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    gen = rng.substream(seed, rng.EVENTS)
    i_idx = gen.integers(0, rows, size=count)
    j_idx = gen.integers(0, cols, size=count)
    deltas = gen.normal(0.0, delta_sd, size=count)
    return [
        RankOneUpdate(int(i), int(j), float(d))
        for i, j, d in zip(i_idx, j_idx, deltas)
    ]


def gen_structural_events(
    kind: str,
    count: int,
    factor_rank: int,
    noise_scale: float,
    width: int,
    seed: int,
) -> list[UpdateEvent]:
    """Appends drawn from a fixed latent factor model.

    ``width`` is the dimension that stays constant while the stream grows:
    the column count for row appends, the row count for column appends. The
    latent directions are fixed per seed for the whole stream.
    """
    if kind not in ("row", "col"):
        raise ValueError(f"kind must be 'row' or 'col', got {kind!r}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    gen = rng.substream(seed, rng.STRUCTURAL)
    directions = gen.standard_normal((factor_rank, width))
    events: list[UpdateEvent] = []
    for _ in range(count):
        loading = gen.standard_normal(factor_rank)
        vec = loading @ directions + noise_scale * gen.standard_normal(width)
        events.append(RowAppend(vec) if kind == "row" else ColAppend(vec))
    return events


def gen_mixed_stream(
    count: int,
    mix_weights,
    base_m: int,
    base_n: int,
    factor_rank: int,
    noise_scale: float,
    delta_sd: float,
    seed: int,
) -> list[UpdateEvent]:
    """Weighted interleaving of row appends, column appends and rank-1 updates.

    Appends follow a coherent latent model: every row carries a left loading,
    every column a right loading, so the ground truth stays near rank
    ``factor_rank`` as both dimensions grow.
    """
    weights = np.asarray(mix_weights, dtype=np.float64)
    if weights.shape != (3,) or np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("mix_weights must be 3 nonnegative values, not all zero")
    gen = rng.substream(seed, rng.MIXED)
    kinds = gen.choice(3, size=count, p=weights / weights.sum())
    left = gen.standard_normal((base_m, factor_rank))
    right = gen.standard_normal((base_n, factor_rank))
    events: list[UpdateEvent] = []
    for kind in kinds:
        if kind == 0:
            loading = gen.standard_normal(factor_rank)
            vec = loading @ right.T + noise_scale * gen.standard_normal(len(right))
            events.append(RowAppend(vec))
            left = np.vstack([left, loading[None, :]])
        elif kind == 1:
            loading = gen.standard_normal(factor_rank)
            vec = left @ loading + noise_scale * gen.standard_normal(len(left))
            events.append(ColAppend(vec))
            right = np.vstack([right, loading[None, :]])
        else:
            i = int(gen.integers(0, len(left)))
            j = int(gen.integers(0, len(right)))
            events.append(RankOneUpdate(i, j, float(gen.normal(0.0, delta_sd))))
    return events


# --------------------------------------------------------------- simulation


@dataclass
class StreamSpec:
    """Full description of one synthetic run (matrix, events, policy, logging)."""

    m: int = 50
    n: int = 40
    true_rank: int = 5
    noise_scale: float = 0.05
    k: int = 5
    seed: int = 0
    scenario: str = "rank1"  # rank1 | rows | cols | mixed
    events: int = 10_000
    delta_sd: float = 0.05
    mix_weights: tuple[float, float, float] = (0.05, 0.05, 0.90)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    log_every: int = 50
    tol: float = 1e-10
    reortho_guard: bool = False

    def __post_init__(self):
        if self.scenario not in ("rank1", "rows", "cols", "mixed"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.events < 0:
            raise ValueError(f"events must be >= 0, got {self.events}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


def build_events(spec: StreamSpec) -> list[UpdateEvent]:
    """Generate the event list for a spec (independent of any engine)."""
    if spec.scenario == "rank1":
        return gen_rank_one_events(spec.events, spec.delta_sd, spec.m, spec.n, spec.seed)
    if spec.scenario == "rows":
        return gen_structural_events(
            "row", spec.events, spec.true_rank, spec.noise_scale, spec.n, spec.seed
        )
    if spec.scenario == "cols":
        return gen_structural_events(
            "col", spec.events, spec.true_rank, spec.noise_scale, spec.m, spec.seed
        )
    return gen_mixed_stream(
        spec.events,
        spec.mix_weights,
        spec.m,
        spec.n,
        spec.true_rank,
        spec.noise_scale,
        spec.delta_sd,
        spec.seed,
    )


class _AdaptiveRankState:
    """Hysteresis for energy-based rank selection.

    A new rank is armed only after the same selection differs from the
    current rank on two consecutive oracle evaluations; armed changes apply
    at the next refresh.
    """

    def __init__(self, config):
        self.config = config
        self.pending: int | None = None
        self.armed: int | None = None

    def observe(self, spectrum, current_k: int) -> None:
        cfg = self.config
        selected = evr_select_rank(spectrum, cfg.tau, cfg.k_min, cfg.k_max)
        if selected == current_k:
            self.pending = None
            self.armed = None
        elif selected == self.pending:
            self.armed = selected
        else:
            self.pending = selected
            self.armed = None

    def take_armed(self) -> int | None:
        armed, self.armed, self.pending = self.armed, None, None
        return armed


def run_simulation(spec: StreamSpec, return_engine: bool = False):
    """Run one stream through the engine, returning the chronological log.

    With ``return_engine`` the final engine comes back too, as
    ``(records, engine)`` — handy for end-of-stream invariant checks.
    """
    initial = gen_low_rank(spec.m, spec.n, spec.true_rank, spec.noise_scale, spec.seed)
    start = time.perf_counter()
    engine = SvdEngine(
        initial, spec.k, tol=spec.tol, reortho_guard=spec.reortho_guard
    )
    init_time = time.perf_counter() - start
    engine.set_reference()
    events = build_events(spec)

    policy = spec.policy
    adaptive = _AdaptiveRankState(policy.adaptive) if policy.adaptive else None
    records = [
        collect(
            engine,
            update_time=init_time,
            refreshed=False,
            oracle=compute_oracle(engine.tracked, engine.work_rank),
        )
    ]
    t_last_refresh = 0
    for t, event in enumerate(events, start=1):
        start = time.perf_counter()
        try:
            apply_event(engine, event)
        except ValueError as exc:
            raise ValueError(f"event at step {t} failed: {exc}") from exc
        update_time = time.perf_counter() - start

        if adaptive and isinstance(event, (RowAppend, ColAppend)):
            bumped = novelty_rank_bump(
                engine.last_residual,
                engine.last_input_norm,
                policy.adaptive.eta,
                engine.work_rank,
                policy.adaptive.k_max,
            )
            if bumped != engine.work_rank:
                engine.set_rank(bumped)

        oracle: OracleResult | None = None
        if t % spec.log_every == 0:
            oracle = compute_oracle(engine.tracked, engine.work_rank)
            if adaptive:
                adaptive.observe(oracle.singular_values, engine.work_rank)

        fire = False
        if policy.kind == "periodic":
            fire = periodic_should_refresh(t, policy.period)
        elif policy.kind == "error" and oracle is not None:
            ratio = error_ratio(frob_error(engine), oracle.frob_opt)
            fire = error_should_refresh(
                ratio, policy.gamma, t, t_last_refresh, policy.min_spacing
            )
        elif policy.kind == "angle" and oracle is not None:
            angle = angle_to_opt(engine, oracle.basis)
            fire = angle_should_refresh(angle, policy.theta_max)

        if fire:
            if adaptive:
                armed = adaptive.take_armed()
                if armed is not None:
                    engine.set_rank(armed)
            engine.refresh(store_reference=True)
            t_last_refresh = t

        records.append(
            collect(engine, update_time=update_time, refreshed=fire, oracle=oracle)
        )
    if return_engine:
        return records, engine
    return records
