"""Synthetic identities for exercising the full scoring pipeline.

Class centers are drawn uniformly on the unit sphere and serve as the rows of
the weight matrix.  Each evaluated identity contributes one gallery and one
probe sample, obtained by rotating its center by a random tangent-space
angle of scale ``sigma_gallery`` / ``sigma_probe`` (radians).  A low-quality
probe condition is simply a larger probe angle.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .fileio import write_matrix, write_protocol
from .protocol import Sample, VerificationProtocol

__all__ = ["SynthConfig", "SynthData", "generate", "perturb", "write_synth"]


@dataclass(frozen=True)
class SynthConfig:
    num_identities: int = 2000
    dim: int = 128
    num_eval: int = 100
    sigma_gallery: float = 0.0
    sigma_probe: float = 0.0
    seed: int = 0
    num_cohort: int = 0
    # evaluated identities get fresh centers that are not rows of W
    disjoint: bool = False

    def __post_init__(self):
        if self.dim < 2:
            raise ParameterError(f"dim must be >= 2, got {self.dim}")
        if self.num_eval < 2:
            raise ParameterError(f"num_eval must be >= 2, got {self.num_eval}")
        if self.num_identities < self.num_eval:
            raise ParameterError(f"num_identities ({self.num_identities}) must be >= num_eval ({self.num_eval})")
        if self.sigma_gallery < 0 or self.sigma_probe < 0:
            raise ParameterError("noise scales must be nonnegative")
        if self.num_cohort < 0:
            raise ParameterError("num_cohort must be nonnegative")
        free = self.num_identities - (0 if self.disjoint else self.num_eval)
        if self.num_cohort > free:
            raise ParameterError(f"num_cohort={self.num_cohort} exceeds the {free} identities left for the cohort")
        if not (0 <= self.seed < 2**64):
            raise ParameterError("seed must fit in 64 bits")


@dataclass
class SynthData:
    weights: np.ndarray
    protocol: VerificationProtocol
    gallery: np.ndarray
    probes: np.ndarray
    cohort_gallery: np.ndarray
    cohort_probe: np.ndarray
    eval_ids: np.ndarray

    def vectors(self) -> dict:
        out = {"gallery": self.gallery, "probe": self.probes}
        if self.cohort_gallery.shape[0]:
            out["cohort_gallery"] = self.cohort_gallery
            out["cohort_probe"] = self.cohort_probe
        return out


def _sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def perturb(rng: np.random.Generator, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Rotate unit ``centers`` along random tangent directions.

    The tangent step has i.i.d. normal coordinates scaled so its expected
    squared length is ``sigma**2``; the step is applied with the exponential
    map, so outputs stay on the sphere.
    """
    n, d = centers.shape
    t = rng.standard_normal((n, d)) * (sigma / np.sqrt(d - 1))
    t -= np.sum(t * centers, axis=1, keepdims=True) * centers
    theta = np.linalg.norm(t, axis=1, keepdims=True)
    safe = np.where(theta > 0, theta, 1.0)
    out = np.cos(theta) * centers + np.sin(theta) * (t / safe)
    out = np.where(theta > 0, out, centers)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def generate(config: SynthConfig) -> SynthData:
    rng = np.random.default_rng(config.seed)
    C, D = config.num_identities, config.dim
    W = _sphere(rng, C, D)
    if config.disjoint:
        eval_ids = np.arange(C, C + config.num_eval)
        eval_centers = _sphere(rng, config.num_eval, D)
        pool = np.arange(C)
    else:
        eval_ids = np.sort(rng.choice(C, size=config.num_eval, replace=False))
        eval_centers = W[eval_ids]
        pool = np.setdiff1d(np.arange(C), eval_ids)
    cohort_ids = np.sort(rng.choice(pool, size=config.num_cohort, replace=False))

    gallery = perturb(rng, eval_centers, config.sigma_gallery)
    probes = perturb(rng, eval_centers, config.sigma_probe)
    cohort_gallery = perturb(rng, W[cohort_ids], config.sigma_gallery)
    cohort_probe = perturb(rng, W[cohort_ids], config.sigma_probe)

    protocol = VerificationProtocol(
        gallery=[Sample(f"g{i:05d}", f"id{c}", str(i)) for i, c in enumerate(eval_ids)],
        probes=[Sample(f"p{i:05d}", f"id{c}", str(i)) for i, c in enumerate(eval_ids)],
        cohort_gallery=[Sample(f"cg{m:05d}", f"id{c}", str(m)) for m, c in enumerate(cohort_ids)],
        cohort_probe=[Sample(f"cp{m:05d}", f"id{c}", str(m)) for m, c in enumerate(cohort_ids)],
    )
    return SynthData(W, protocol, gallery, probes, cohort_gallery, cohort_probe, eval_ids)


def write_synth(data: SynthData, out_dir) -> dict:
    """Write weights, per-role vectors and the protocol; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "weights": out / "weights.lcv",
        "gallery": out / "gallery.lcv",
        "probe": out / "probe.lcv",
        "protocol": out / "protocol.csv",
    }
    write_matrix(data.weights, paths["weights"])
    write_matrix(data.gallery, paths["gallery"])
    write_matrix(data.probes, paths["probe"])
    if data.cohort_gallery.shape[0]:
        paths["cohort_gallery"] = out / "cohort_gallery.lcv"
        paths["cohort_probe"] = out / "cohort_probe.lcv"
        write_matrix(data.cohort_gallery, paths["cohort_gallery"])
        write_matrix(data.cohort_probe, paths["cohort_probe"])
    write_protocol(data.protocol, paths["protocol"])
    return paths
