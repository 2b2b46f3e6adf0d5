"""Verification protocol: who is enrolled, who probes, and the optional cohort."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

from .errors import ProtocolError

ROLES = ("gallery", "probe", "cohort_gallery", "cohort_probe")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    label: str
    ref: str  # row number into the role's matrix, or a path to a 1-row matrix file


@dataclass
class VerificationProtocol:
    """Gallery/probe samples plus an aligned two-condition cohort.

    Cohort entries pair up by position: ``cohort_gallery[m]`` and
    ``cohort_probe[m]`` show the same person under gallery and probe
    conditions.
    """

    gallery: List[Sample] = field(default_factory=list)
    probes: List[Sample] = field(default_factory=list)
    cohort_gallery: List[Sample] = field(default_factory=list)
    cohort_probe: List[Sample] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    @property
    def has_cohort(self) -> bool:
        return bool(self.cohort_gallery)

    def samples(self, role: str) -> List[Sample]:
        if role not in ROLES:
            raise ProtocolError(f"unknown role {role!r}")
        return {
            "gallery": self.gallery,
            "probe": self.probes,
            "cohort_gallery": self.cohort_gallery,
            "cohort_probe": self.cohort_probe,
        }[role]

    def validate(self) -> None:
        if not self.gallery or not self.probes:
            raise ProtocolError("protocol needs at least one gallery and one probe sample")
        for role in ROLES:
            ids = [s.sample_id for s in self.samples(role)]
            if len(set(ids)) != len(ids):
                dup = next(i for i in ids if ids.count(i) > 1)
                raise ProtocolError(f"duplicate sample_id {dup!r} in role {role}")
        if len(self.cohort_gallery) != len(self.cohort_probe):
            raise ProtocolError(
                f"cohort is not aligned: {len(self.cohort_gallery)} cohort_gallery "
                f"vs {len(self.cohort_probe)} cohort_probe entries"
            )

    @property
    def gallery_labels(self) -> List[str]:
        return [s.label for s in self.gallery]

    @property
    def probe_labels(self) -> List[str]:
        return [s.label for s in self.probes]
