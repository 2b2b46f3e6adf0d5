"""Genuine/impostor partitioning, ROC curves and TMR at a target FMR.

A pair is accepted when ``score >= threshold``.  The ROC is evaluated at every
distinct score plus a ``+inf`` sentinel (nothing accepted), so it is exact
rather than sampled on a grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .errors import EmptySetError, FormatError, NonFiniteError, ParameterError

__all__ = [
    "DEFAULT_FMR",
    "RocCurve",
    "VerificationReport",
    "partition_scores",
    "roc",
    "tmr_at_fmr",
    "write_roc_table",
    "read_roc_table",
]

DEFAULT_FMR = 1e-3
ROC_HEADER = "threshold\tfmr\ttmr"


@dataclass(frozen=True)
class RocCurve:
    """Operating points ordered by descending threshold."""

    thresholds: np.ndarray
    fmr: np.ndarray
    tmr: np.ndarray
    num_genuine: int
    num_impostor: int

    def __len__(self) -> int:
        return int(self.thresholds.size)

    def points(self):
        return list(zip(self.thresholds.tolist(), self.fmr.tolist(), self.tmr.tolist()))


@dataclass(frozen=True)
class VerificationReport:
    tmr_at_target: float
    target_fmr: float
    threshold: float
    fmr_at_threshold: float
    curve: RocCurve
    # fewer impostors than 1/target: the only admissible operating point has FMR 0
    resolution_limited: bool

    def as_dict(self) -> dict:
        return {
            "tmr": self.tmr_at_target,
            "target_fmr": self.target_fmr,
            "threshold": self.threshold,
            "fmr_at_threshold": self.fmr_at_threshold,
            "num_genuine": self.curve.num_genuine,
            "num_impostor": self.curve.num_impostor,
            "resolution_limited": self.resolution_limited,
        }


def partition_scores(m) -> Tuple[np.ndarray, np.ndarray]:
    """Split a :class:`~logitcohort.pipeline.ScoreMatrix` into genuine and impostor scores."""
    scores = np.asarray(m.scores, dtype=np.float64)
    mask = np.asarray(m.genuine, dtype=bool)
    if scores.shape != mask.shape:
        raise ParameterError(f"score shape {scores.shape} does not match mask shape {mask.shape}")
    genuine, impostor = scores[mask], scores[~mask]
    if genuine.size == 0:
        raise EmptySetError("no genuine pairs: verification metrics are undefined")
    if impostor.size == 0:
        raise EmptySetError("no impostor pairs: verification metrics are undefined")
    return genuine, impostor


def _scores(values, name: str) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        raise EmptySetError(f"{name} score set is empty")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} scores contain non-finite values")
    return a


def _accept_rate(sorted_scores: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    n = sorted_scores.size
    return (n - np.searchsorted(sorted_scores, thresholds, side="left")) / n


def roc(genuine, impostor) -> RocCurve:
    g = np.sort(_scores(genuine, "genuine"))
    i = np.sort(_scores(impostor, "impostor"))
    distinct = np.unique(np.concatenate([g, i]))[::-1]
    thresholds = np.concatenate([[np.inf], distinct])
    return RocCurve(thresholds, _accept_rate(i, thresholds), _accept_rate(g, thresholds), g.size, i.size)


def tmr_at_fmr(genuine, impostor, target: float = DEFAULT_FMR) -> VerificationReport:
    """TMR at the lowest threshold whose FMR does not exceed ``target``.

    No interpolation between operating points: the reported FMR never
    exceeds the target.
    """
    if not (0.0 <= target <= 1.0):
        raise ParameterError(f"target FMR must lie in [0, 1], got {target!r}")
    curve = roc(genuine, impostor)
    # FMR is non-decreasing along the curve and the +inf point has FMR 0
    ok = np.flatnonzero(curve.fmr <= target)
    k = int(ok[-1])
    return VerificationReport(
        tmr_at_target=float(curve.tmr[k]),
        target_fmr=float(target),
        threshold=float(curve.thresholds[k]),
        fmr_at_threshold=float(curve.fmr[k]),
        curve=curve,
        resolution_limited=curve.num_impostor * target < 1.0,
    )


def write_roc_table(curve: RocCurve, path) -> None:
    lines = [ROC_HEADER]
    for t, f, m in curve.points():
        lines.append(f"{t!r}\t{f!r}\t{m!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_roc_table(path) -> np.ndarray:
    """Read a ROC table back as an ``(n, 3)`` array of threshold, fmr, tmr."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != ROC_HEADER:
        raise FormatError(f"{path}: missing header {ROC_HEADER!r}")
    rows = []
    for n, line in enumerate(text[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{n}: expected 3 tab-separated fields")
        rows.append([float(p) for p in parts])
    return np.array(rows, dtype=np.float64).reshape(-1, 3)
