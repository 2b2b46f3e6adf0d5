"""End-to-end scoring of a verification protocol.

Four flows are supported:

* ``baseline``  -- cosine between gallery and probe embeddings
* ``cohort``    -- similarity lists against a two-condition cohort, turned
  into rank lists and compared with S1/S2/S3
* ``locos``     -- cosine between selected logit sub-vectors
* ``locos-rank``-- selected logit sub-vectors turned into rank lists and
  compared with S1/S2/S3

Scores are laid out gallery-major: ``scores[i, j]`` compares gallery ``i``
with probe ``j``.  Work is split into fixed-size gallery chunks, so results
do not depend on how many threads run them.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, ParameterError, ProtocolError
from .linalg import WeightMatrix, compute_logits_batch, cosine_matrix, unit_rows
from .locos import (
    GalleryTemplate,
    SelectionStrategy,
    Strategy,
    make_template,
    select_indexes,
    selected_cosines,
)
from .protocol import VerificationProtocol
from .ranklist import (
    RankFunction,
    RankSimParams,
    rank_similarity_batch,
    ranks_batch,
    ranks_from_similarities,
)

__all__ = [
    "Flow",
    "MethodConfig",
    "ScoreMatrix",
    "METHOD_NAMES",
    "genuine_mask",
    "baseline_scores",
    "cohort_scores",
    "template_scores",
    "enroll",
    "score_baseline",
    "score_cohort_ranklist",
    "score_locos",
    "score_templates",
    "score_protocol",
    "num_threads",
]

THREADS_ENV = "LOGITCOHORT_THREADS"
_CHUNK = 32


class Flow(str, enum.Enum):
    BASELINE = "baseline"
    COHORT = "cohort"
    LOCOS = "locos"
    LOCOS_RANK = "locos-rank"


_STRATEGY_SUFFIX = {
    Strategy.FIRST_K: "random",
    Strategy.TOP_K: "t",
    Strategy.TOP_BOTTOM: "tb",
    Strategy.PROBE_TOP_K: "p",
}
_SUFFIX_STRATEGY = {v: k for k, v in _STRATEGY_SUFFIX.items()}

METHOD_NAMES = (
    ["baseline"]
    + [f"cohort-{f.value}" for f in RankFunction]
    + [f"locos-{s}" for s in ("random", "t", "tb", "p")]
    + [f"locos-{s}-{f.value}" for s in ("t", "tb") for f in RankFunction]
)


@dataclass(frozen=True)
class MethodConfig:
    """One row of the tested-methods table.

    Only the combinations in :data:`METHOD_NAMES` can be built: rank-list
    functions pair with the external cohort or with top / top+bottom
    selections, never with first-K or probe-driven selection.
    """

    flow: Flow
    rank_fn: Optional[RankFunction] = None
    params: RankSimParams = field(default_factory=RankSimParams)
    strategy: Optional[SelectionStrategy] = None

    def __post_init__(self):
        flow = Flow(self.flow)
        object.__setattr__(self, "flow", flow)
        if self.rank_fn is not None:
            object.__setattr__(self, "rank_fn", RankFunction(self.rank_fn))
        ranked = flow in (Flow.COHORT, Flow.LOCOS_RANK)
        if ranked != (self.rank_fn is not None):
            raise ParameterError(f"flow {flow.value} {'needs' if ranked else 'takes no'} rank function")
        selecting = flow in (Flow.LOCOS, Flow.LOCOS_RANK)
        if selecting != (self.strategy is not None):
            raise ParameterError(f"flow {flow.value} {'needs' if selecting else 'takes no'} selection strategy")
        if flow is Flow.LOCOS_RANK and self.strategy.kind not in (Strategy.TOP_K, Strategy.TOP_BOTTOM):
            raise ParameterError("rank-list functions on logits combine only with top or top+bottom selection")

    @property
    def name(self) -> str:
        if self.flow is Flow.BASELINE:
            return "baseline"
        if self.flow is Flow.COHORT:
            return f"cohort-{self.rank_fn.value}"
        name = f"locos-{_STRATEGY_SUFFIX[self.strategy.kind]}"
        if self.flow is Flow.LOCOS_RANK:
            name += f"-{self.rank_fn.value}"
        return name

    @classmethod
    def from_name(
        cls,
        name: str,
        K: int = 500,
        T: Optional[int] = None,
        B: Optional[int] = None,
        params: Optional[RankSimParams] = None,
    ) -> "MethodConfig":
        """Build a config from a method name such as ``locos-tb-s2``."""
        params = params or RankSimParams()
        if name not in METHOD_NAMES:
            raise ParameterError(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")
        parts = name.split("-")
        if name == "baseline":
            return cls(Flow.BASELINE)
        if parts[0] == "cohort":
            return cls(Flow.COHORT, RankFunction(parts[1]), params)
        kind = _SUFFIX_STRATEGY[parts[1]]
        if kind is Strategy.TOP_BOTTOM:
            strategy = SelectionStrategy(kind, K, T, B)
        else:
            strategy = SelectionStrategy(kind, K)
        if len(parts) == 3:
            return cls(Flow.LOCOS_RANK, RankFunction(parts[2]), params, strategy)
        return cls(Flow.LOCOS, None, params, strategy)


@dataclass
class ScoreMatrix:
    scores: np.ndarray
    genuine: np.ndarray
    method: str = ""
    gallery_ids: List[str] = field(default_factory=list)
    probe_ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.genuine = np.asarray(self.genuine, dtype=bool)
        if self.scores.ndim != 2 or self.scores.shape != self.genuine.shape:
            raise DimensionError(f"score shape {self.scores.shape} vs mask shape {self.genuine.shape}")
        if not np.all(np.isfinite(self.scores)):
            raise NonFiniteError("score matrix contains non-finite values")

    @property
    def shape(self):
        return self.scores.shape


def genuine_mask(gallery_labels: Sequence, probe_labels: Sequence) -> np.ndarray:
    g = np.asarray(list(gallery_labels), dtype=object)
    p = np.asarray(list(probe_labels), dtype=object)
    return g[:, None] == p[None, :]


def num_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if n < 1:
            raise ParameterError(f"{THREADS_ENV} must be >= 1, got {n}")
        return n
    return min(4, os.cpu_count() or 1)


def _fill_rows(n_rows: int, n_cols: int, row_fn: Callable[[int], np.ndarray], threads: Optional[int]) -> np.ndarray:
    """Evaluate ``row_fn`` for every row, in fixed chunks, optionally threaded."""
    out = np.empty((n_rows, n_cols), dtype=np.float64)

    def run(start: int) -> None:
        for i in range(start, min(start + _CHUNK, n_rows)):
            out[i] = row_fn(i)

    starts = range(0, n_rows, _CHUNK)
    threads = num_threads() if threads is None else threads
    if threads <= 1 or n_rows <= _CHUNK:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))
    return out


# --- array-level kernels ----------------------------------------------------


def baseline_scores(gallery, probes) -> np.ndarray:
    return cosine_matrix(gallery, probes)


def cohort_scores(
    gallery,
    probes,
    cohort_gallery,
    cohort_probe,
    rank_fn: RankFunction,
    params: RankSimParams = RankSimParams(),
    threads: Optional[int] = None,
    stats: Optional[Dict[str, int]] = None,
) -> np.ndarray:
    """Indirect comparison through a cohort seen under both conditions.

    Each gallery vector is compared with every gallery-condition cohort
    vector, each probe with every probe-condition cohort vector; the two
    similarity lists are ranked and the rank lists scored.  Similarity lists
    are computed once per sample and reused for every pair.
    """
    cg = unit_rows(cohort_gallery, "cohort_gallery")
    cp = unit_rows(cohort_probe, "cohort_probe")
    if cg.shape[0] != cp.shape[0]:
        raise ProtocolError(f"cohort is not aligned: {cg.shape[0]} vs {cp.shape[0]} entries")
    gamma_g = ranks_batch(cosine_matrix(gallery, cg))
    gamma_p = ranks_batch(cosine_matrix(probes, cp))
    if stats is not None:
        n_c = cg.shape[0]
        stats["cohort_similarities"] = (gamma_g.shape[0] + gamma_p.shape[0]) * n_c
        stats["rank_comparisons"] = gamma_g.shape[0] * gamma_p.shape[0]
    return _fill_rows(
        gamma_g.shape[0],
        gamma_p.shape[0],
        lambda i: rank_similarity_batch(gamma_g[i], gamma_p, rank_fn, params),
        threads,
    )


def _check_logits(Z, C: Optional[int], name: str) -> np.ndarray:
    Z = np.asarray(Z)
    if Z.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d (N, C) array")
    if C is not None and Z.shape[1] != C:
        raise DimensionError(f"{name} have {Z.shape[1]} logits, templates expect {C}")
    if not np.all(np.isfinite(Z)):
        raise NonFiniteError(f"{name} contain non-finite values")
    return Z


def template_scores(
    templates: Sequence[GalleryTemplate],
    probe_logits,
    config: MethodConfig,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Score enrolled gallery templates against probe logit vectors.

    ``probe_logits`` is ``(P, C)``; float32 input is accepted and upcast per
    gathered block, so large probe sets need not be held in float64.
    """
    if config.flow not in (Flow.LOCOS, Flow.LOCOS_RANK):
        raise ParameterError(f"templates are scored only by logit-selection methods, not {config.name}")
    if not templates:
        raise ProtocolError("no gallery templates")
    kind = config.strategy.kind
    for t in templates:
        if (t.kind is Strategy.PROBE_TOP_K) != (kind is Strategy.PROBE_TOP_K):
            raise ParameterError(f"template of kind {t.kind.value} cannot be scored with {config.name}")
    C = templates[0].num_classes
    Zp = _check_logits(probe_logits, C, "probe logits")
    for t in templates:
        t.selection.check_bounds(Zp.shape[1])
    n_g, n_p = len(templates), Zp.shape[0]

    if kind is Strategy.PROBE_TOP_K:
        # indexes come from each probe and apply to every gallery: fill columns
        gallery_T = np.ascontiguousarray(np.stack([t.full_logits() for t in templates]).T)
        strategy = SelectionStrategy.top_k(config.strategy.K)

        def column(j: int) -> np.ndarray:
            zp = np.asarray(Zp[j], dtype=np.float64)
            sel = select_indexes(zp, strategy)
            return selected_cosines(zp[sel.indexes], sel, gallery_T)

        return _fill_rows(n_p, n_g, column, threads).T.copy()

    probes_T = np.ascontiguousarray(Zp.T)
    if config.flow is Flow.LOCOS:
        return _fill_rows(
            n_g,
            n_p,
            lambda i: selected_cosines(templates[i].values, templates[i].selection, probes_T),
            threads,
        )

    def ranked_row(i: int) -> np.ndarray:
        t = templates[i]
        gamma_g = ranks_from_similarities(t.values)
        gamma_p = ranks_batch(np.asarray(probes_T[t.selection.indexes], dtype=np.float64).T)
        return rank_similarity_batch(gamma_g, gamma_p, config.rank_fn, config.params)

    return _fill_rows(n_g, n_p, ranked_row, threads)


# --- protocol-level entry points --------------------------------------------


def _role(vectors: Mapping[str, np.ndarray], protocol: VerificationProtocol, role: str) -> np.ndarray:
    if role not in vectors:
        raise ProtocolError(f"no vectors supplied for role {role}")
    m = np.asarray(vectors[role])
    expected = len(protocol.samples(role))
    if m.ndim != 2 or m.shape[0] != expected:
        raise ProtocolError(f"{role}: expected {expected} vectors, got array of shape {m.shape}")
    return m


def _wrap(protocol: VerificationProtocol, scores: np.ndarray, config: MethodConfig) -> ScoreMatrix:
    return ScoreMatrix(
        scores,
        genuine_mask(protocol.gallery_labels, protocol.probe_labels),
        config.name,
        [s.sample_id for s in protocol.gallery],
        [s.sample_id for s in protocol.probes],
    )


def score_baseline(protocol: VerificationProtocol, features: Mapping[str, np.ndarray]) -> ScoreMatrix:
    G = _role(features, protocol, "gallery")
    P = _role(features, protocol, "probe")
    return _wrap(protocol, baseline_scores(G, P), MethodConfig(Flow.BASELINE))


def score_cohort_ranklist(
    protocol: VerificationProtocol,
    features: Mapping[str, np.ndarray],
    rank_fn: RankFunction,
    params: RankSimParams = RankSimParams(),
    threads: Optional[int] = None,
    stats: Optional[Dict[str, int]] = None,
) -> ScoreMatrix:
    if not protocol.has_cohort:
        raise ProtocolError("cohort rank-list scoring needs cohort_gallery and cohort_probe samples")
    scores = cohort_scores(
        _role(features, protocol, "gallery"),
        _role(features, protocol, "probe"),
        _role(features, protocol, "cohort_gallery"),
        _role(features, protocol, "cohort_probe"),
        rank_fn,
        params,
        threads,
        stats,
    )
    return _wrap(protocol, scores, MethodConfig(Flow.COHORT, rank_fn, params))


def enroll(protocol: VerificationProtocol, gallery_logits, strategy: SelectionStrategy) -> List[GalleryTemplate]:
    Zg = _check_logits(gallery_logits, None, "gallery logits")
    if Zg.shape[0] != len(protocol.gallery):
        raise ProtocolError(f"gallery: expected {len(protocol.gallery)} logit vectors, got {Zg.shape[0]}")
    return [make_template(Zg[i], strategy, s.label) for i, s in enumerate(protocol.gallery)]


def score_templates(
    protocol: VerificationProtocol,
    templates: Sequence[GalleryTemplate],
    probe_logits,
    config: MethodConfig,
    threads: Optional[int] = None,
) -> ScoreMatrix:
    if len(templates) != len(protocol.gallery):
        raise ProtocolError(f"{len(templates)} templates for {len(protocol.gallery)} gallery samples")
    for t, s in zip(templates, protocol.gallery):
        if str(t.label) != s.label:
            raise ProtocolError(f"template label {t.label!r} does not match gallery sample {s.sample_id!r} ({s.label!r})")
    Zp = _check_logits(probe_logits, None, "probe logits")
    if Zp.shape[0] != len(protocol.probes):
        raise ProtocolError(f"probe: expected {len(protocol.probes)} logit vectors, got {Zp.shape[0]}")
    return _wrap(protocol, template_scores(templates, Zp, config, threads), config)


def score_locos(
    protocol: VerificationProtocol,
    logits: Mapping[str, np.ndarray],
    config: MethodConfig,
    threads: Optional[int] = None,
) -> ScoreMatrix:
    """Logit-selection scoring straight from gallery and probe logits."""
    if config.strategy is None:
        raise ParameterError(f"{config.name} is not a logit-selection method")
    templates = enroll(protocol, _role(logits, protocol, "gallery"), config.strategy)
    return score_templates(protocol, templates, _role(logits, protocol, "probe"), config, threads)


def score_protocol(
    protocol: VerificationProtocol,
    vectors: Mapping[str, np.ndarray],
    config: MethodConfig,
    weights=None,
    threads: Optional[int] = None,
) -> ScoreMatrix:
    """Dispatch on ``config.flow``.

    For logit-selection flows, ``vectors`` are embeddings projected through
    ``weights`` when weights are given, and already logits otherwise.
    """
    if config.flow is Flow.BASELINE:
        return score_baseline(protocol, vectors)
    if config.flow is Flow.COHORT:
        return score_cohort_ranklist(protocol, vectors, config.rank_fn, config.params, threads)
    if weights is not None:
        W = weights if isinstance(weights, WeightMatrix) else WeightMatrix(weights)
        vectors = {
            role: compute_logits_batch(_role(vectors, protocol, role), W)
            for role in ("gallery", "probe")
        }
    return score_locos(protocol, vectors, config, threads)
