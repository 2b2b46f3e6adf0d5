"""Rank lists and the three classic rank-list similarity functions.

Ranks are 0-based: rank 0 is the most similar cohort identity.  Every score
depends on a pair of rank lists only through per-identity terms, so scores
are computed from a histogram of rank sums.  That makes them independent of
the order in which cohort identities are listed, bit for bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, NonFiniteError, ParameterError

__all__ = [
    "RankFunction",
    "RankSimParams",
    "ranks_from_similarities",
    "ranks_batch",
    "s1",
    "s2",
    "s3",
    "rank_similarity",
    "rank_similarity_batch",
]

DEFAULT_LAMBDA = 0.99


class RankFunction(str, enum.Enum):
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"


@dataclass(frozen=True)
class RankSimParams:
    """Parameters of the rank-list functions.

    ``k`` is the S2 cutoff (``None`` means the cohort size), ``lam`` the S3
    decay.  ``normalize`` divides S1/S3 by their self-similarity maximum; S2
    is never normalized.
    """

    k: Optional[int] = None
    lam: float = DEFAULT_LAMBDA
    normalize: bool = True

    def __post_init__(self):
        if self.k is not None and (int(self.k) != self.k or self.k < 0):
            raise ParameterError(f"k must be a nonnegative integer, got {self.k!r}")
        if not (0.0 < self.lam < 1.0):
            raise ParameterError(f"lambda must lie strictly inside (0, 1), got {self.lam!r}")


def ranks_from_similarities(similarities) -> np.ndarray:
    """Rank a similarity list: highest entry gets rank 0.

    Ties go to the lower cohort index first.

    >>> ranks_from_similarities([0.9, 0.1, 0.5]).tolist()
    [0, 2, 1]
    """
    L = np.asarray(similarities, dtype=np.float64)
    if L.ndim != 1 or L.size == 0:
        raise DimensionError("similarity list must be a nonempty 1-d sequence")
    return ranks_batch(L[None, :])[0]


def ranks_batch(similarities) -> np.ndarray:
    """Row-wise :func:`ranks_from_similarities` for an ``(N, Nc)`` array."""
    L = np.asarray(similarities)
    if L.ndim != 2 or L.shape[1] == 0:
        raise DimensionError(f"expected a nonempty (N, Nc) array, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise NonFiniteError("similarity list contains non-finite entries")
    # stable sort of the negation keeps equal values in ascending index order
    order = np.argsort(-L, axis=1, kind="stable")
    ranks = np.empty(L.shape, dtype=np.int64)
    rows = np.arange(L.shape[0])[:, None]
    ranks[rows, order] = np.arange(L.shape[1])
    return ranks


def _check_ranklist(gamma, name: str) -> np.ndarray:
    g = np.asarray(gamma)
    if g.ndim != 1 or g.size == 0:
        raise DimensionError(f"{name} must be a nonempty 1-d rank list")
    if not np.issubdtype(g.dtype, np.integer):
        if not np.all(np.equal(np.mod(g, 1), 0)):
            raise ParameterError(f"{name} has non-integer ranks")
    g = g.astype(np.int64)
    seen = np.zeros(g.size, dtype=bool)
    if g.min() < 0 or g.max() >= g.size:
        raise ParameterError(f"{name} is not a permutation of 0..{g.size - 1}")
    seen[g] = True
    if not seen.all():
        raise ParameterError(f"{name} is not a permutation of 0..{g.size - 1}")
    return g


def _pair(gamma_g, gamma_p):
    g = _check_ranklist(gamma_g, "gallery rank list")
    p = _check_ranklist(gamma_p, "probe rank list")
    if g.size != p.size:
        raise DimensionError(f"rank list length mismatch: {g.size} vs {p.size}")
    return g, p


def _sum_histogram(gamma_g: np.ndarray, gamma_p: np.ndarray) -> np.ndarray:
    """Counts of ``gamma_g[m] + gamma_p[i, m]`` per row, shape (P, 2*Nc - 1)."""
    n = gamma_g.shape[0]
    width = 2 * n - 1
    sums = gamma_p + gamma_g[None, :]
    flat = sums + (np.arange(gamma_p.shape[0]) * width)[:, None]
    counts = np.bincount(flat.ravel(), minlength=gamma_p.shape[0] * width)
    return counts.reshape(gamma_p.shape[0], width)


def _s1_table(n: int) -> np.ndarray:
    # 0-based ranks make (0 + 0)^(-1/4) singular; the +2 offset is the
    # 1-based form of the same function
    return (np.arange(2 * n - 1, dtype=np.float64) + 2.0) ** -0.25


def _s3_table(n: int, lam: float) -> np.ndarray:
    return lam ** np.arange(2 * n - 1, dtype=np.float64)


def _histogram_score(gamma_g, gamma_p, table) -> np.ndarray:
    counts = _sum_histogram(gamma_g, gamma_p)
    return (counts * table[None, :]).sum(axis=1)


def _self_score(n: int, table: np.ndarray) -> float:
    r = np.arange(n, dtype=np.int64)
    return float(_histogram_score(r, r[None, :], table)[0])


def _s1_batch(gamma_g, gamma_p, normalize: bool) -> np.ndarray:
    table = _s1_table(gamma_g.size)
    scores = _histogram_score(gamma_g, gamma_p, table)
    if normalize:
        scores = scores / _self_score(gamma_g.size, table)
    return scores


def _s3_batch(gamma_g, gamma_p, lam: float, normalize: bool) -> np.ndarray:
    table = _s3_table(gamma_g.size, lam)
    scores = _histogram_score(gamma_g, gamma_p, table)
    if normalize:
        scores = scores / _self_score(gamma_g.size, table)
    return scores


def _s2_batch(gamma_g, gamma_p, k: int) -> np.ndarray:
    n = gamma_g.size
    # every rank is < n, so a cutoff above n only adds a constant that is the
    # same for all rank-list pairs; saturate it so k > n scores exactly as k = n
    k = min(k, n)
    # exact integer arithmetic; Python ints once int64 could overflow
    dtype = np.int64 if (k + 1) ** 2 * n < 2**62 else object
    wg = np.maximum(k + 1 - gamma_g.astype(dtype), 0)
    wp = np.maximum(k + 1 - gamma_p.astype(dtype), 0)
    totals = (wp * wg[None, :]).sum(axis=1)
    return np.array([float(t) for t in totals], dtype=np.float64)


def s1(gamma_g, gamma_p, normalize: bool = True) -> float:
    """Sum over identities of ``(gamma_g[m] + gamma_p[m] + 2) ** -0.25``.

    With ``normalize`` the result is divided by the score of two identical
    lists, giving a value in (0, 1] that equals 1 only for identical lists.
    """
    g, p = _pair(gamma_g, gamma_p)
    return float(_s1_batch(g, p[None, :], normalize)[0])


def s2(gamma_g, gamma_p, k: Optional[int] = None) -> float:
    """Cutoff product score ``sum (k+1-gamma_g)_+ * (k+1-gamma_p)_+``.

    Unnormalized.  ``k`` defaults to the list length; larger cutoffs are
    saturated to it.
    """
    g, p = _pair(gamma_g, gamma_p)
    k = g.size if k is None else k
    if int(k) != k or k < 0:
        raise ParameterError(f"k must be a nonnegative integer, got {k!r}")
    return float(_s2_batch(g, p[None, :], int(k))[0])


def s3(gamma_g, gamma_p, lam: float = DEFAULT_LAMBDA, normalize: bool = True) -> float:
    """Exponential-decay score ``sum lam ** (gamma_g[m] + gamma_p[m])``."""
    if not (0.0 < lam < 1.0):
        raise ParameterError(f"lambda must lie strictly inside (0, 1), got {lam!r}")
    g, p = _pair(gamma_g, gamma_p)
    return float(_s3_batch(g, p[None, :], lam, normalize)[0])


def rank_similarity_batch(
    gamma_g, gamma_p, fn: RankFunction, params: RankSimParams = RankSimParams()
) -> np.ndarray:
    """Score one gallery rank list against each row of ``gamma_p``.

    Inputs are trusted to be valid permutations (callers build them with
    :func:`ranks_batch`); this is the hot path used by the pipeline.
    """
    gamma_g = np.asarray(gamma_g, dtype=np.int64)
    gamma_p = np.asarray(gamma_p, dtype=np.int64)
    if gamma_p.ndim != 2 or gamma_p.shape[1] != gamma_g.shape[0]:
        raise DimensionError(
            f"rank list length mismatch: {gamma_g.shape[0]} vs {gamma_p.shape[-1]}"
        )
    fn = RankFunction(fn)
    if fn is RankFunction.S1:
        return _s1_batch(gamma_g, gamma_p, params.normalize)
    if fn is RankFunction.S2:
        k = gamma_g.size if params.k is None else params.k
        return _s2_batch(gamma_g, gamma_p, k)
    return _s3_batch(gamma_g, gamma_p, params.lam, params.normalize)


def rank_similarity(gamma_g, gamma_p, fn: RankFunction, params: RankSimParams = RankSimParams()) -> float:
    g, p = _pair(gamma_g, gamma_p)
    return float(rank_similarity_batch(g, p[None, :], fn, params)[0])
