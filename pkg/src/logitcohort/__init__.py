"""Rank-list and logit-cohort face verification scoring."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DimensionError,
    EmptySetError,
    FormatError,
    LogitCohortError,
    NonFiniteError,
    ParameterError,
    ProtocolError,
    ZeroNormError,
)
from .evaluation import RocCurve, VerificationReport, partition_scores, roc, tmr_at_fmr  # noqa: E402
from .linalg import WeightMatrix, compute_logits, compute_logits_batch, cosine  # noqa: E402
from .locos import (  # noqa: E402
    GalleryTemplate,
    IndexSelection,
    SelectionStrategy,
    Strategy,
    make_template,
    s_locos,
    select_indexes,
)
from .pipeline import (  # noqa: E402
    Flow,
    MethodConfig,
    ScoreMatrix,
    score_baseline,
    score_cohort_ranklist,
    score_locos,
    score_protocol,
    score_templates,
)
from .protocol import Sample, VerificationProtocol  # noqa: E402
from .ranklist import RankFunction, RankSimParams, ranks_from_similarities, s1, s2, s3  # noqa: E402

__all__ = [
    "__version__",
    "DimensionError",
    "EmptySetError",
    "FormatError",
    "LogitCohortError",
    "NonFiniteError",
    "ParameterError",
    "ProtocolError",
    "ZeroNormError",
    "RocCurve",
    "VerificationReport",
    "partition_scores",
    "roc",
    "tmr_at_fmr",
    "WeightMatrix",
    "compute_logits",
    "compute_logits_batch",
    "cosine",
    "GalleryTemplate",
    "IndexSelection",
    "SelectionStrategy",
    "Strategy",
    "make_template",
    "s_locos",
    "select_indexes",
    "Flow",
    "MethodConfig",
    "ScoreMatrix",
    "score_baseline",
    "score_cohort_ranklist",
    "score_locos",
    "score_protocol",
    "score_templates",
    "Sample",
    "VerificationProtocol",
    "RankFunction",
    "RankSimParams",
    "ranks_from_similarities",
    "s1",
    "s2",
    "s3",
]
