"""Drift metrics: reconstruction error, oracle baseline, energy and angles.

Oracle quantities come from a fresh batch SVD of the engine's tracked matrix
and are intended to be computed at a logging cadence, never per event. In a
:class:`MetricsRecord`, ``None`` means "not computed at this step" while
``float('nan')`` means "computed but undefined" (e.g. a ratio with a zero
denominator); both serialize as ``NaN``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .engine import SvdEngine
from .linalg import frobenius_norm, full_svd, principal_angle_max, reconstruct

logger = logging.getLogger(__name__)

# A ratio denominator is treated as zero below this relative floor.
RATIO_FLOOR = 1e-12


@dataclass
class MetricsRecord:
    """One logged step of a stream. Timing fields are never reproducible."""

    step: int
    frob_error: float
    evr: float
    rank: int
    refreshed: bool
    update_time: float
    frob_opt: float | None = None
    frob_gap: float | None = None
    frob_ratio: float | None = None
    angle_ref: float | None = None
    angle_opt: float | None = None
    opt_time: float | None = None


@dataclass
class OracleResult:
    """Batch-SVD baseline of one matrix snapshot at work rank k."""

    frob_opt: float
    basis: np.ndarray
    singular_values: np.ndarray
    opt_time: float


def compute_oracle(a, k: int) -> OracleResult:
    """Full SVD of ``a``: optimal rank-k error, leading left basis, spectrum."""
    start = time.perf_counter()
    f = full_svd(a)
    elapsed = time.perf_counter() - start
    w = min(int(k), f.rank)
    tail = f.s[w:]
    frob_opt = float(np.sqrt(np.sum(tail * tail)))
    return OracleResult(frob_opt, f.u[:, :w].copy(), f.s.copy(), elapsed)


def oracle_baseline(a, k: int) -> tuple[float, np.ndarray, float]:
    """Optimal rank-k Frobenius error of ``a``, its left basis, and the
    wall-clock seconds the batch SVD took."""
    r = compute_oracle(a, k)
    return r.frob_opt, r.basis, r.opt_time


def frob_error(engine: SvdEngine) -> float:
    """Frobenius distance between the tracked matrix and the reconstruction."""
    return frobenius_norm(engine.tracked - reconstruct(engine.factors))


def error_ratio(e_inc: float, e_opt: float) -> float:
    """Incremental over optimal error; NaN when the optimal error is ~zero."""
    if e_opt > RATIO_FLOOR * max(1.0, e_inc):
        return e_inc / e_opt
    return float("nan")


def evr(engine: SvdEngine) -> float:
    """Fraction of tracked squared energy captured by the kept spectrum."""
    sq_norm = engine.sq_norm
    if sq_norm <= 0.0:
        raise ValueError("explained variance is undefined for a zero matrix")
    s = engine.factors.s
    value = float(np.sum(s * s)) / sq_norm
    return min(1.0, max(0.0, value))


def angle_to_ref(engine: SvdEngine) -> float | None:
    """Largest principal angle against the stored reference basis.

    Absent (None) when no reference is stored or when appends have changed
    the basis dimensions since the reference was taken.
    """
    ref = engine.ref_subspace
    if ref is None:
        return None
    u = engine.factors.u
    if ref.shape != u.shape:
        logger.debug(
            "reference basis %s does not match current %s; angle skipped",
            ref.shape,
            u.shape,
        )
        return None
    return principal_angle_max(u, ref)


def angle_to_opt(engine: SvdEngine, basis: np.ndarray) -> float:
    """Largest principal angle between the engine's left basis and the oracle's."""
    u = engine.factors.u
    return principal_angle_max(u, basis[:, : u.shape[1]])


def collect(
    engine: SvdEngine,
    update_time: float,
    refreshed: bool,
    oracle: OracleResult | None = None,
) -> MetricsRecord:
    """Assemble the record for the current step; oracle fields only if given."""
    e_inc = frob_error(engine)
    record = MetricsRecord(
        step=engine.step,
        frob_error=e_inc,
        evr=evr(engine) if engine.sq_norm > 0.0 else float("nan"),
        rank=engine.factors.rank,
        refreshed=bool(refreshed),
        update_time=float(update_time),
    )
    if oracle is not None:
        record.frob_opt = oracle.frob_opt
        record.frob_gap = e_inc - oracle.frob_opt
        record.frob_ratio = error_ratio(e_inc, oracle.frob_opt)
        record.angle_ref = angle_to_ref(engine)
        record.angle_opt = angle_to_opt(engine, oracle.basis)
        record.opt_time = oracle.opt_time
    return record


def is_defined(value: float | None) -> bool:
    """True for a present, non-NaN metric value."""
    return value is not None and not math.isnan(value)
