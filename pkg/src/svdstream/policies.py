"""Refresh triggers and rank-adaptation rules.

All triggers are pure functions of logged quantities; the simulation loop
owns the bookkeeping (last refresh step, hysteresis counters). Error- and
angle-based triggers only make sense on steps where the oracle was computed,
so an absent signal never fires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class AdaptiveRankConfig:
    """Rank adaptation: energy-target selection plus novelty bumps."""

    tau: float = 0.95
    k_min: int = 1
    k_max: int = 64
    eta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if not 1 <= self.k_min <= self.k_max:
            raise ValueError(
                f"need 1 <= k_min <= k_max, got ({self.k_min}, {self.k_max})"
            )
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass
class PolicyConfig:
    """When to refresh: never, on a fixed period, or on a drift signal."""

    kind: str = "none"  # none | periodic | error | angle
    period: int = 1000
    gamma: float = 1.1
    min_spacing: int = 0
    theta_max: float = 0.5
    adaptive: AdaptiveRankConfig | None = None

    def __post_init__(self):
        if self.kind not in ("none", "periodic", "error", "angle"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.min_spacing < 0:
            raise ValueError(f"min_spacing must be >= 0, got {self.min_spacing}")
        if not 0.0 < self.theta_max <= math.pi / 2:
            raise ValueError(f"theta_max must be in (0, pi/2], got {self.theta_max}")


def periodic_should_refresh(t: int, period: int) -> bool:
    """Fire every ``period`` events; the init step (t=0) is already fresh."""
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    return t > 0 and t % period == 0


def error_should_refresh(
    ratio: float | None, gamma: float, t: int, t_last: int, min_spacing: int
) -> bool:
    """Fire when the error ratio is defined, exceeds gamma, and the last
    refresh is at least ``min_spacing`` steps old."""
    if ratio is None or math.isnan(ratio):
        return False
    return ratio > gamma and (t - t_last) >= min_spacing


def angle_should_refresh(angle: float | None, theta_max: float) -> bool:
    """Fire when the drift angle is defined and exceeds ``theta_max``."""
    if angle is None or math.isnan(angle):
        return False
    return angle > theta_max


def evr_select_rank(singular_values, tau: float, k_min: int, k_max: int) -> int:
    """Smallest rank in [k_min, k_max] whose cumulative energy reaches tau.

    Scans upward, so ties resolve to the smallest rank; if no admissible rank
    reaches tau the cap ``k_max`` is returned. An all-zero spectrum is
    trivially explained, giving ``k_min``.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if not 1 <= k_min <= k_max:
        raise ValueError(f"need 1 <= k_min <= k_max, got ({k_min}, {k_max})")
    s = [float(v) for v in singular_values]
    if not s:
        raise ValueError("empty spectrum")
    energy = [v * v for v in s]
    total = sum(energy)
    if total <= 0.0:
        return k_min
    running = 0.0
    cumulative = []
    for e in energy:
        running += e
        cumulative.append(running)
    for k in range(k_min, k_max + 1):
        captured = cumulative[min(k, len(cumulative)) - 1]
        if captured / total >= tau:
            return k
    return k_max


def novelty_rank_bump(
    z_norm: float, x_norm: float, eta: float, k: int, k_max: int
) -> int:
    """Grow the rank by one (capped at k_max) when an appended vector's
    residual outside the current subspace is large relative to the vector."""
    if not eta > 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if x_norm > 0.0 and z_norm > eta * x_norm:
        return min(k + 1, k_max)
    return k
