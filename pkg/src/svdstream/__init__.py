"""svdstream: incremental truncated SVD for streaming matrices.

Maintains a rank-k SVD of a growing/changing dense matrix under row appends,
column appends and rank-1 entry updates, with drift metrics against a
batch-SVD oracle, refresh/rank-adaptation policies, synthetic experiment
streams, and a low-rank covariance pipeline for returns panels.
"""

from .backend import active_backend, available_backends, set_backend
from .engine import SvdEngine
from .linalg import (
    SvdFactors,
    canonicalize_signs,
    frobenius_norm,
    full_svd,
    orthonormality_defect,
    principal_angle_max,
    reconstruct,
    truncated_svd,
)
from .metrics import MetricsRecord, error_ratio, evr, frob_error, oracle_baseline
from .policies import (
    AdaptiveRankConfig,
    PolicyConfig,
    angle_should_refresh,
    error_should_refresh,
    evr_select_rank,
    novelty_rank_bump,
    periodic_should_refresh,
)
from .stream import (
    ColAppend,
    RankOneUpdate,
    RowAppend,
    StreamSpec,
    apply_event,
    gen_low_rank,
    gen_mixed_stream,
    gen_rank_one_events,
    gen_structural_events,
    run_simulation,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveRankConfig",
    "ColAppend",
    "MetricsRecord",
    "PolicyConfig",
    "RankOneUpdate",
    "RowAppend",
    "StreamSpec",
    "SvdEngine",
    "SvdFactors",
    "active_backend",
    "angle_should_refresh",
    "apply_event",
    "available_backends",
    "canonicalize_signs",
    "error_ratio",
    "error_should_refresh",
    "evr",
    "evr_select_rank",
    "frob_error",
    "frobenius_norm",
    "full_svd",
    "gen_low_rank",
    "gen_mixed_stream",
    "gen_rank_one_events",
    "gen_structural_events",
    "novelty_rank_bump",
    "oracle_baseline",
    "orthonormality_defect",
    "periodic_should_refresh",
    "principal_angle_max",
    "reconstruct",
    "run_simulation",
    "set_backend",
    "truncated_svd",
    "__version__",
]
