"""Semantic uncertainty estimation from perturbed-prompt response samples.

The pipeline per modality: render each response as text (captioning
non-text content), greedily cluster the texts by judged semantic
equivalence, and score the cluster size distribution with normalized
entropy,

    u = -(1 / ln C) * sum_i (c_i / C) * ln(c_i / C),

where ``C`` is the sample count and ``c_i`` the cluster sizes. ``u`` is 0
when all samples agree and 1 when all C samples land in distinct clusters.
A single sample carries no disagreement signal, so ``C = 1`` scores 0.
Per-modality scores merge by unweighted mean over the modalities present.

Clustering is greedy and order-deterministic: samples are visited by
sample index, each compared against existing cluster representatives in
creation order, joining the first equivalent cluster or founding a new
one. A lexical variant clusters by exact string identity instead of a
judge and exists as a deliberately meaning-blind baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .backends import ModelResponse, RoleClients
from .errors import (
    CaptionError,
    InvariantViolation,
    JudgeError,
    MixedModalitySetsError,
    ToolkitError,
)
from .media import MODALITY_ORDER, Modality, TextContent


@dataclass(frozen=True)
class CaptionedSample:
    """One response sample reduced to text for one modality."""

    sample_index: int
    modality: Modality
    caption: TextContent

    def __post_init__(self):
        if self.sample_index < 0:
            raise InvariantViolation("sample_index must be non-negative")
        if len(self.caption.text) == 0:
            raise InvariantViolation("captions must be non-empty")


@dataclass(frozen=True)
class SemanticCluster:
    """A group of mutually equivalent samples.

    The representative is the caption of the cluster's founding sample;
    members are sample indices in joining order.
    """

    representative: TextContent
    members: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) == 0:
            raise InvariantViolation("a cluster must have at least one member")

    @property
    def count(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ClusterDistribution:
    """A partition of ``total`` samples into semantic clusters."""

    clusters: tuple[SemanticCluster, ...]
    total: int

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        covered = sorted(i for c in self.clusters for i in c.members)
        if len(covered) != len(set(covered)):
            raise InvariantViolation("clusters overlap")
        if len(covered) != self.total:
            raise InvariantViolation(
                f"clusters cover {len(covered)} samples, expected {self.total}"
            )

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(c.count for c in self.clusters)


def cluster_captions(
    captions: Sequence[CaptionedSample],
    judge: Callable[[str, str], bool],
) -> ClusterDistribution:
    """Greedily partition captions into judged-equivalence clusters.

    ``judge(a, b)`` answers whether two caption strings are equivalent.
    Judge failures are wrapped in :class:`JudgeError` carrying the pair
    that was being compared.
    """
    if not captions:
        raise InvariantViolation("cannot cluster an empty caption list")
    ordered = sorted(captions, key=lambda s: s.sample_index)
    reps: list[TextContent] = []
    members: list[list[int]] = []
    for sample in ordered:
        placed = False
        for k, rep in enumerate(reps):
            try:
                same = judge(rep.text, sample.caption.text)
            except ToolkitError as e:
                raise JudgeError(
                    f"equivalence judge failed: {e}",
                    pair=(rep.text, sample.caption.text),
                ) from e
            if same:
                members[k].append(sample.sample_index)
                placed = True
                break
        if not placed:
            reps.append(sample.caption)
            members.append([sample.sample_index])
    clusters = tuple(
        SemanticCluster(representative=rep, members=tuple(m))
        for rep, m in zip(reps, members)
    )
    return ClusterDistribution(clusters=clusters, total=len(ordered))


def lexical_cluster(captions: Sequence[CaptionedSample]) -> ClusterDistribution:
    """Cluster by exact string identity. A meaning-blind baseline.

    "yes" and "Yes." land in different clusters here; a semantic judge
    would merge them.
    """
    return cluster_captions(captions, lambda a, b: a == b)


def entropy(distribution: ClusterDistribution) -> float:
    """Normalized entropy of the cluster size distribution, in [0, 1]."""
    c = distribution.total
    if c <= 1:
        return 0.0
    h = 0.0
    for count in distribution.counts:
        p = count / c
        h -= p * math.log(p)
    u = h / math.log(c)
    # Guard against float drift just outside the closed interval.
    return min(1.0, max(0.0, u))


def raw_entropy(distribution: ClusterDistribution) -> float:
    """Unnormalized cluster entropy in nats."""
    c = distribution.total
    h = 0.0
    for count in distribution.counts:
        p = count / c
        h -= p * math.log(p)
    return h


@dataclass(frozen=True)
class UncertaintyEstimate:
    """Merged and per-modality uncertainty for one prompt."""

    merged: float
    per_modality: Mapping[Modality, float]
    distributions: Mapping[Modality, ClusterDistribution]

    def __post_init__(self):
        object.__setattr__(self, "per_modality", dict(self.per_modality))
        object.__setattr__(self, "distributions", dict(self.distributions))

    def to_dict(self) -> dict:
        return {
            "u": self.merged,
            "per_modality": {m.value: u for m, u in self.per_modality.items()},
            "clusters": {
                m.value: {
                    "counts": list(d.counts),
                    "representatives": [c.representative.text for c in d.clusters],
                }
                for m, d in self.distributions.items()
            },
        }


def estimate(
    samples: Sequence[ModelResponse],
    roles: RoleClients,
    question: str = "",
    clustering: str = "semantic",
) -> UncertaintyEstimate:
    """Estimate uncertainty from C response samples of one prompt.

    All samples must expose the same modality set. Non-text outputs are
    captioned by the configured captioner; captioning failures carry the
    offending sample index. ``clustering`` selects the semantic judge
    (default) or the lexical baseline.
    """
    if not samples:
        raise InvariantViolation("estimate needs at least one response sample")
    if clustering not in ("semantic", "lexical"):
        raise InvariantViolation(f"unknown clustering mode {clustering!r}")
    mod_sets = [resp.modalities() for resp in samples]
    if any(ms != mod_sets[0] for ms in mod_sets[1:]):
        seen = sorted({tuple(m.value for m in ms) for ms in mod_sets})
        raise MixedModalitySetsError(f"samples disagree on output modalities: {seen}")
    if clustering == "semantic":
        if roles.equivalence_judge is None:
            raise InvariantViolation(
                "semantic clustering requires an equivalence judge backend"
            )
        judge_client = roles.equivalence_judge

        def judge(a: str, b: str) -> bool:
            return judge_client.judge(question, a, b)

    per_modality: dict[Modality, float] = {}
    distributions: dict[Modality, ClusterDistribution] = {}
    for modality in MODALITY_ORDER:
        if modality not in mod_sets[0]:
            continue
        captions = []
        for idx, resp in enumerate(samples):
            content = resp.outputs[modality]
            if isinstance(content, TextContent):
                if not content.text:
                    raise CaptionError(
                        f"sample {idx} returned an empty text response",
                        sample_index=idx,
                    )
                cap = content
            else:
                if roles.captioner is None:
                    raise CaptionError(
                        f"sample {idx} has {modality.value} output but no "
                        "captioner backend is configured",
                        sample_index=idx,
                    )
                try:
                    cap = roles.captioner.caption(content)
                except ToolkitError as e:
                    raise CaptionError(
                        f"captioning sample {idx} failed: {e}", sample_index=idx
                    ) from e
            captions.append(
                CaptionedSample(sample_index=idx, modality=modality, caption=cap)
            )
        if clustering == "semantic":
            dist = cluster_captions(captions, judge)
        else:
            dist = lexical_cluster(captions)
        distributions[modality] = dist
        per_modality[modality] = entropy(dist)
    merged = sum(per_modality.values()) / len(per_modality)
    return UncertaintyEstimate(
        merged=merged, per_modality=per_modality, distributions=distributions
    )
