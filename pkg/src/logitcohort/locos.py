"""Logit-cohort selection: pick a subset of logit indexes and compare the
selected sub-vectors of a gallery and a probe.

Indexes are chosen from one selecting vector (the gallery logits, or the
probe logits for the probe-driven mode) and the same index set is applied to
both sides.  An :class:`IndexSelection` lays its indexes out as the top
``T`` entries in descending logit order followed by the bottom ``B``
entries in ascending order, so ``indexes[:T]`` and ``indexes[-B:]`` are the
two compared segments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Optional

import numpy as np

from .errors import DimensionError, NonFiniteError, ParameterError, ZeroNormError

__all__ = [
    "Strategy",
    "SelectionStrategy",
    "IndexSelection",
    "GalleryTemplate",
    "top_indexes",
    "select_indexes",
    "s_locos",
    "make_template",
    "selected_cosines",
]

DEFAULT_K = 500


class Strategy(str, enum.Enum):
    FIRST_K = "first"
    TOP_K = "top"
    TOP_BOTTOM = "topbottom"
    PROBE_TOP_K = "probe"


@dataclass(frozen=True)
class SelectionStrategy:
    """Which logits to keep and how to split them into top/bottom segments.

    For ``TOP_BOTTOM`` the split defaults to ``T = ceil(K/2)``, ``B = K - T``;
    every other kind uses ``T = K`` and ``B = 0``.
    """

    kind: Strategy
    K: int = DEFAULT_K
    T: Optional[int] = None
    B: Optional[int] = None

    def __post_init__(self):
        kind = Strategy(self.kind)
        object.__setattr__(self, "kind", kind)
        if int(self.K) != self.K or self.K <= 0:
            raise ParameterError(f"K must be a positive integer, got {self.K!r}")
        K = int(self.K)
        T, B = self.T, self.B
        if kind is Strategy.TOP_BOTTOM:
            if T is None and B is None:
                T = K - K // 2
                B = K // 2
            elif T is None:
                T = K - B
            elif B is None:
                B = K - T
            if T <= 0 or B <= 0 or T + B != K:
                raise ParameterError(f"top+bottom needs T > 0, B > 0, T + B = K; got T={T}, B={B}, K={K}")
        else:
            if (T is not None and T != K) or (B not in (None, 0)):
                raise ParameterError(f"{kind.value} selection uses T = K and B = 0; got T={T}, B={B}")
            T, B = K, 0
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "T", int(T))
        object.__setattr__(self, "B", int(B))

    @classmethod
    def first_k(cls, K: int = DEFAULT_K) -> "SelectionStrategy":
        return cls(Strategy.FIRST_K, K)

    @classmethod
    def top_k(cls, K: int = DEFAULT_K) -> "SelectionStrategy":
        return cls(Strategy.TOP_K, K)

    @classmethod
    def top_bottom(cls, K: int = DEFAULT_K, T: Optional[int] = None, B: Optional[int] = None) -> "SelectionStrategy":
        return cls(Strategy.TOP_BOTTOM, K, T, B)

    @classmethod
    def probe_top_k(cls, K: int = DEFAULT_K) -> "SelectionStrategy":
        return cls(Strategy.PROBE_TOP_K, K)


@dataclass(frozen=True, eq=False)
class IndexSelection:
    indexes: np.ndarray
    T: int
    B: int = 0

    def __post_init__(self):
        idx = np.asarray(self.indexes, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "indexes", idx)
        if idx.ndim != 1 or idx.size == 0:
            raise ParameterError("an index selection needs at least one index")
        if self.T < 0 or self.B < 0 or self.T + self.B != idx.size or self.T == 0:
            raise ParameterError(f"split T={self.T}, B={self.B} does not fit {idx.size} indexes")
        if idx.min() < 0 or np.unique(idx).size != idx.size:
            raise ParameterError("selected indexes must be distinct and nonnegative")

    @property
    def K(self) -> int:
        return int(self.indexes.size)

    @property
    def top(self) -> np.ndarray:
        return self.indexes[: self.T]

    @property
    def bottom(self) -> np.ndarray:
        return self.indexes[self.T :]

    def check_bounds(self, C: int) -> None:
        if int(self.indexes.max()) >= C:
            raise DimensionError(f"selection index {int(self.indexes.max())} out of range for {C} logits")

    def __eq__(self, other):
        if not isinstance(other, IndexSelection):
            return NotImplemented
        return (self.T, self.B) == (other.T, other.B) and np.array_equal(self.indexes, other.indexes)


@dataclass(frozen=True, eq=False)
class GalleryTemplate:
    """Enrolled gallery representation: selected indexes and their logits.

    Probe-driven templates keep the whole logit vector (``indexes`` is
    ``0..C-1``) because the selection happens only at probe time.
    """

    selection: IndexSelection
    values: np.ndarray
    label: Hashable
    kind: Strategy = Strategy.TOP_K
    num_classes: Optional[int] = field(default=None)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", Strategy(self.kind))
        if vals.shape != self.selection.indexes.shape:
            raise DimensionError("template values and indexes differ in length")
        if self.num_classes is not None:
            self.selection.check_bounds(self.num_classes)

    def full_logits(self) -> np.ndarray:
        """Dense logit vector of a probe-driven (full) template."""
        if self.kind is not Strategy.PROBE_TOP_K:
            raise ParameterError("only probe-driven templates store the full logit vector")
        out = np.empty(self.values.size, dtype=np.float64)
        out[self.selection.indexes] = self.values
        return out


def _logits(Z, name: str = "logits") -> np.ndarray:
    z = np.asarray(Z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise DimensionError(f"{name} must be a nonempty 1-d vector")
    if not np.all(np.isfinite(z)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return z


def top_indexes(Z: np.ndarray, n: int, exclude: Optional[np.ndarray] = None) -> np.ndarray:
    """Indexes of the ``n`` largest entries, descending, ties by ascending index.

    Uses a partition first so only the candidates are fully sorted.
    """
    z = np.asarray(Z)
    pool = np.arange(z.size)
    if exclude is not None and exclude.size:
        keep = np.ones(z.size, dtype=bool)
        keep[exclude] = False
        pool = pool[keep]
        z = z[keep]
    if n > z.size:
        raise ParameterError(f"cannot select {n} of {z.size} logits")
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if n < z.size:
        kth = np.partition(z, z.size - n)[z.size - n]
        cand = np.flatnonzero(z >= kth)
    else:
        cand = np.arange(z.size)
    # lexsort: last key is primary; ascending position breaks ties
    order = np.lexsort((cand, -z[cand]))[:n]
    return pool[cand[order]].astype(np.int64)


def select_indexes(Z, strategy: SelectionStrategy) -> IndexSelection:
    """Choose logit indexes from the selecting vector ``Z``.

    >>> select_indexes([0.1, 0.9, 0.5], SelectionStrategy.top_k(2)).indexes.tolist()
    [1, 2]
    >>> select_indexes([0.1, 0.9, 0.5], SelectionStrategy.top_bottom(2)).indexes.tolist()
    [1, 0]
    """
    z = _logits(Z)
    if strategy.K > z.size:
        raise ParameterError(f"K={strategy.K} exceeds the number of logits C={z.size}")
    if strategy.kind is Strategy.FIRST_K:
        return IndexSelection(np.arange(strategy.K), strategy.T, 0)
    top = top_indexes(z, strategy.T)
    if strategy.B == 0:
        return IndexSelection(top, strategy.T, 0)
    # bottom segment: smallest B of the rest, ascending, ties by ascending index
    bottom = top_indexes(-z, strategy.B, exclude=top)
    return IndexSelection(np.concatenate([top, bottom]), strategy.T, strategy.B)


def _segment_cosines(vg: np.ndarray, sub: np.ndarray) -> np.ndarray:
    """Cosine of ``vg`` (n,) with every column of ``sub`` (n, P)."""
    ng = float(np.sqrt(np.dot(vg, vg)))
    if ng == 0.0:
        raise ZeroNormError("selected gallery logit segment has zero norm")
    np_ = np.sqrt(np.einsum("ij,ij->j", sub, sub))
    if np.any(np_ == 0.0):
        raise ZeroNormError("selected probe logit segment has zero norm")
    return np.clip((vg @ sub) / (ng * np_), -1.0, 1.0)


def selected_cosines(values_g: np.ndarray, selection: IndexSelection, probes_T: np.ndarray) -> np.ndarray:
    """Selection score of one gallery against many probes.

    ``values_g`` are the gallery logits already gathered at
    ``selection.indexes``; ``probes_T`` is the probe logit matrix in
    ``(C, P)`` layout so that gathering selected rows is contiguous.
    """
    sub = np.asarray(probes_T[selection.indexes], dtype=np.float64)
    vg = np.asarray(values_g, dtype=np.float64)
    T = selection.T
    scores = _segment_cosines(vg[:T], sub[:T])
    if selection.B:
        scores = scores + _segment_cosines(vg[T:], sub[T:])
    return scores


def s_locos(Zg, Zp, selection: IndexSelection) -> float:
    """Cosine of the top segments plus, if present, cosine of the bottom segments.

    Lies in [-1, 1] without a bottom segment and in [-2, 2] with one.
    """
    zg = _logits(Zg, "gallery logits")
    zp = _logits(Zp, "probe logits")
    if zg.size != zp.size:
        raise DimensionError(f"logit length mismatch: {zg.size} vs {zp.size}")
    selection.check_bounds(zg.size)
    return float(selected_cosines(zg[selection.indexes], selection, zp[:, None])[0])


def make_template(Zg, strategy: SelectionStrategy, label: Hashable) -> GalleryTemplate:
    z = _logits(Zg, "gallery logits")
    if strategy.kind is Strategy.PROBE_TOP_K:
        if strategy.K > z.size:
            raise ParameterError(f"K={strategy.K} exceeds the number of logits C={z.size}")
        full = IndexSelection(np.arange(z.size), z.size, 0)
        return GalleryTemplate(full, z.copy(), label, Strategy.PROBE_TOP_K, z.size)
    sel = select_indexes(z, strategy)
    return GalleryTemplate(sel, z[sel.indexes], label, strategy.kind, z.size)
