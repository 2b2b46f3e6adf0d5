"""Dense vector primitives: cosine similarity and logit projection.

A weight matrix is held as a ``(C, D)`` array, one row per training identity
(row ``c`` is the class-mean direction ``W_c``).  All arithmetic runs in
float64 regardless of the input dtype.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NonFiniteError, ZeroNormError

__all__ = [
    "as_vector",
    "as_matrix",
    "cosine",
    "unit_rows",
    "cosine_matrix",
    "WeightMatrix",
    "compute_logits",
    "compute_logits_batch",
]

# rows of W processed per block in compute_logits_batch; bounds peak memory
_LOGIT_BLOCK = 65536


def as_vector(values, name: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {v.shape}")
    if v.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return v


def as_matrix(values, name: str = "matrix", dtype=np.float64) -> np.ndarray:
    m = np.asarray(values, dtype=dtype)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {m.shape}")
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise DimensionError(f"{name} has an empty dimension: {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return m


def _norm(v: np.ndarray, name: str) -> float:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ZeroNormError(f"{name} has zero norm")
    return n


def cosine(a, b) -> float:
    """Cosine similarity ``a.b / (|a| |b|)``.

    Raises ``ZeroNormError`` instead of returning 0 for a zero vector.
    """
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.size} vs {b.size}")
    value = float(np.dot(a, b)) / (_norm(a, "a") * _norm(b, "b"))
    # rounding can push |value| a hair past 1
    return min(1.0, max(-1.0, value))


def unit_rows(m, name: str = "matrix") -> np.ndarray:
    """Return a float64 copy of ``m`` with every row scaled to unit length."""
    m = as_matrix(m, name)
    norms = np.linalg.norm(m, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ZeroNormError(f"{name} row {int(bad[0])} has zero norm")
    return m / norms[:, None]


def cosine_matrix(a, b) -> np.ndarray:
    """All-pairs cosine between the rows of ``a`` (N, D) and ``b`` (M, D)."""
    ua = unit_rows(a, "a")
    ub = unit_rows(b, "b")
    if ua.shape[1] != ub.shape[1]:
        raise DimensionError(f"dimension mismatch: {ua.shape[1]} vs {ub.shape[1]}")
    return np.clip(ua @ ub.T, -1.0, 1.0)


class WeightMatrix:
    """Classifier weights, one row per training identity.

    Rows are normalized once on construction, since logits are cosines and
    stored weights are not guaranteed to be unit length.
    """

    def __init__(self, rows):
        self.unit = unit_rows(rows, "weight matrix")

    @property
    def num_classes(self) -> int:
        return self.unit.shape[0]

    @property
    def dim(self) -> int:
        return self.unit.shape[1]

    def __repr__(self) -> str:
        return f"WeightMatrix(C={self.num_classes}, D={self.dim})"


def _weights(W) -> WeightMatrix:
    return W if isinstance(W, WeightMatrix) else WeightMatrix(W)


def compute_logits(phi, W) -> np.ndarray:
    """Logit vector ``z_c = cos(W_c, phi)`` for every class ``c``."""
    W = _weights(W)
    phi = as_vector(phi, "feature")
    if phi.size != W.dim:
        raise DimensionError(f"feature has dimension {phi.size}, weights expect {W.dim}")
    phi = phi / _norm(phi, "feature")
    return np.clip(W.unit @ phi, -1.0, 1.0)


def compute_logits_batch(features, W, dtype=np.float64) -> np.ndarray:
    """Logits for every row of ``features``; returns ``(N, C)`` in ``dtype``.

    Pass ``dtype=np.float32`` to halve memory when C is large.
    """
    W = _weights(W)
    feats = unit_rows(features, "features")
    if feats.shape[1] != W.dim:
        raise DimensionError(f"features have dimension {feats.shape[1]}, weights expect {W.dim}")
    out = np.empty((feats.shape[0], W.num_classes), dtype=dtype)
    for start in range(0, W.num_classes, _LOGIT_BLOCK):
        stop = min(start + _LOGIT_BLOCK, W.num_classes)
        out[:, start:stop] = np.clip(feats @ W.unit[start:stop].T, -1.0, 1.0)
    return out
