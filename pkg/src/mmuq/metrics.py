"""Calibration and discrimination metrics for hallucination detection.

All metrics consume :class:`DetectionRecord` rows: one item id, its
uncertainty score in [0, 1], and whether the item's initial answer was a
hallucination. Conventions:

* AUROC treats hallucination as the positive class and uncertainty as the
  score, computed by the rank-sum formulation with average ranks for ties.
* AURAC is the discrete mean over all rejection counts ``k = 0 .. n-1`` of
  the accuracy among the ``n - k`` retained items after rejecting the ``k``
  most uncertain (ties broken by id ascending).
* ECE buckets confidence ``1 - u`` into equal-width bins, left-closed with
  the last bin closed on both ends, skips empty bins, and weights each
  bin's |accuracy - mean confidence| gap by its occupancy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabelsError, InvariantViolation

#: How the area under the rejection-accuracy curve is discretized.
AURAC_DEFINITION = (
    "mean over k=0..n-1 of accuracy among the n-k items retained after "
    "rejecting the k highest-uncertainty items (ties by id ascending)"
)


@dataclass(frozen=True)
class DetectionRecord:
    """Outcome of hallucination detection for one dataset item."""

    id: str
    uncertainty: float | None
    hallucination: bool | None
    initial_answer: str = ""
    final_answer: str | None = None
    per_modality: Mapping[str, float] = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None

    def __post_init__(self):
        if not self.id:
            raise InvariantViolation("detection records need a non-empty id")
        if self.status not in ("ok", "failed"):
            raise InvariantViolation(f"unknown record status {self.status!r}")
        object.__setattr__(self, "per_modality", dict(self.per_modality))
        if self.status == "ok":
            if self.uncertainty is None or self.hallucination is None:
                raise InvariantViolation(
                    f"record {self.id}: ok records need uncertainty and label"
                )
            if not 0.0 <= self.uncertainty <= 1.0:
                raise InvariantViolation(
                    f"record {self.id}: uncertainty {self.uncertainty} outside [0, 1]"
                )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "uncertainty": self.uncertainty,
            "hallucination": self.hallucination,
            "initial_answer": self.initial_answer,
            "final_answer": self.final_answer,
            "per_modality": dict(self.per_modality),
            "status": self.status,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DetectionRecord":
        return cls(
            id=str(doc["id"]),
            uncertainty=doc.get("uncertainty"),
            hallucination=doc.get("hallucination"),
            initial_answer=str(doc.get("initial_answer", "")),
            final_answer=doc.get("final_answer"),
            per_modality=dict(doc.get("per_modality", {})),
            status=str(doc.get("status", "ok")),
            error=doc.get("error"),
        )


def _scored(records: Sequence[DetectionRecord]) -> list[DetectionRecord]:
    rows = [r for r in records if r.status == "ok"]
    if not rows:
        raise InvariantViolation("no scorable records")
    ids = [r.id for r in rows]
    if len(ids) != len(set(ids)):
        raise InvariantViolation("duplicate record ids")
    return rows


def auroc(records: Sequence[DetectionRecord]) -> float:
    """Probability that a random hallucination outscores a random correct item.

    Rank-sum (Mann-Whitney) formulation; ties contribute half. Requires at
    least one record of each label.
    """
    rows = _scored(records)
    scores = np.array([r.uncertainty for r in rows], dtype=np.float64)
    positive = np.array([r.hallucination for r in rows], dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(rows) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"AUROC needs both labels, got {n_pos} hallucinations and "
            f"{n_neg} correct answers"
        )
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[positive].sum())
    u_stat = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)


def aurac(records: Sequence[DetectionRecord]) -> float:
    """Area under the rejection-accuracy curve, as a discrete mean.

    Items are rejected most-uncertain first. For each rejection count
    ``k = 0 .. n-1`` the accuracy of the remaining ``n - k`` items is
    recorded; the area is the unweighted mean of those accuracies. Higher
    is better: useful uncertainty pushes wrong answers out first.
    """
    rows = _scored(records)
    order = sorted(rows, key=lambda r: (-r.uncertainty, r.id))
    n = len(order)
    correct = np.array([not r.hallucination for r in order], dtype=np.float64)
    # suffix_correct[k] = number correct among the items retained after
    # rejecting the first k of the rejection order.
    suffix_correct = np.concatenate(([0.0], np.cumsum(correct[::-1])))[::-1]
    retained = n - np.arange(n)
    accuracies = suffix_correct[:n] / retained
    return float(accuracies.mean())


def _bin_edges(bin_count: int) -> np.ndarray:
    if bin_count < 1:
        raise InvariantViolation(f"bin_count must be at least 1, got {bin_count}")
    return np.array([k / bin_count for k in range(bin_count + 1)])


def _bin_indices(confidence: np.ndarray, bin_count: int) -> np.ndarray:
    edges = _bin_edges(bin_count)
    idx = np.searchsorted(edges, confidence, side="right") - 1
    # Confidence 1.0 belongs to the last bin, which is closed on the right.
    return np.clip(idx, 0, bin_count - 1)


@dataclass(frozen=True)
class ReliabilityBin:
    """One confidence bin of a reliability diagram."""

    lo: float
    hi: float
    count: int
    mean_confidence: float | None
    accuracy: float | None

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "count": self.count,
            "mean_confidence": self.mean_confidence,
            "accuracy": self.accuracy,
        }


def reliability_bins(
    records: Sequence[DetectionRecord], bin_count: int = 10
) -> list[ReliabilityBin]:
    """Equal-width confidence bins with occupancy, confidence, and accuracy."""
    rows = _scored(records)
    confidence = np.array([1.0 - r.uncertainty for r in rows])
    correct = np.array([not r.hallucination for r in rows], dtype=np.float64)
    idx = _bin_indices(confidence, bin_count)
    edges = _bin_edges(bin_count)
    bins = []
    for b in range(bin_count):
        mask = idx == b
        count = int(mask.sum())
        bins.append(
            ReliabilityBin(
                lo=float(edges[b]),
                hi=float(edges[b + 1]),
                count=count,
                mean_confidence=float(confidence[mask].mean()) if count else None,
                accuracy=float(correct[mask].mean()) if count else None,
            )
        )
    return bins


def ece(records: Sequence[DetectionRecord], bin_count: int = 10) -> float:
    """Expected calibration error of confidence ``1 - u`` against accuracy.

    Occupancy-weighted mean of per-bin |accuracy - mean confidence| over
    non-empty bins.
    """
    rows = _scored(records)
    total = len(rows)
    gap = 0.0
    for b in reliability_bins(rows, bin_count):
        if b.count:
            gap += (b.count / total) * abs(b.accuracy - b.mean_confidence)
    return gap


@dataclass(frozen=True)
class MetricReport:
    """AUROC, AURAC, and ECE for one record set."""

    auroc: float
    aurac: float
    ece: float
    n: int
    bins: tuple[ReliabilityBin, ...]
    aurac_definition: str = AURAC_DEFINITION

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "aurac": self.aurac,
            "ece": self.ece,
            "n": self.n,
            "bins": [b.to_dict() for b in self.bins],
            "aurac_definition": self.aurac_definition,
        }


def compute_report(
    records: Sequence[DetectionRecord], bin_count: int = 10
) -> MetricReport:
    rows = _scored(records)
    return MetricReport(
        auroc=auroc(rows),
        aurac=aurac(rows),
        ece=ece(rows, bin_count),
        n=len(rows),
        bins=tuple(reliability_bins(rows, bin_count)),
    )


def records_to_jsonl(records: Sequence[DetectionRecord]) -> str:
    """Canonical JSONL serialization: sorted keys, no whitespace padding."""
    lines = [
        json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":"))
        for r in records
    ]
    return "\n".join(lines) + "\n" if lines else ""


def records_from_jsonl(text: str) -> list[DetectionRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise InvariantViolation(f"records line {lineno}: bad JSON: {e}") from e
        records.append(DetectionRecord.from_dict(doc))
    return records
