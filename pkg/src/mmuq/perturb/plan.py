"""Perturbation plans: how one prompt becomes C perturbed variants.

A plan fixes the sample count, one operator kind per modality, the pairing
order that assigns degrees across modalities, and a seed. Sample ``i`` of
``C`` draws its degrees from the ladder ``i / (C - 1)``:

* ``progressive``: every modality of sample ``i`` gets ladder degree ``i``,
  so perturbation strength is aligned across modalities.
* ``random``: each modality independently permutes the ladder (seeded), so
  strengths are decoupled but each ladder value still appears exactly once
  per modality.
* ``shifted``: modality number ``m`` uses ladder index ``(i + m) mod C``, a
  deterministic misalignment used as an ablation.

Randomness is derived per ``(seed, sample index, modality)``, never from
shared generator state, so building samples in any order, or in parallel,
yields identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from ..errors import InvalidPlanError, InvariantViolation
from ..media import MODALITY_ORDER, Content, Modality, PromptBundle, modality_of
from .audio import perturb_audio
from .image import perturb_image
from .kinds import (
    DEFAULT_KINDS,
    DEFAULT_PARAMS,
    AudioKind,
    ImageKind,
    Kind,
    PerturbParams,
    PointCloudKind,
    TextKind,
    VideoKind,
    kind_for,
)
from .pointcloud import perturb_pointcloud
from .text import perturb_text
from .video import perturb_video


class PairingOrder(str, Enum):
    PROGRESSIVE = "progressive"
    RANDOM = "random"
    SHIFTED = "shifted"


#: Stable per-modality codes used in RNG seed derivation.
MODALITY_CODE: dict[Modality, int] = {m: i for i, m in enumerate(MODALITY_ORDER)}

# Tags keep the operator streams and the ladder-permutation streams of one
# seed from colliding.
_SAMPLE_TAG = 1
_PAIRING_TAG = 2


@dataclass(frozen=True)
class PerturbationPlan:
    """Recipe for generating perturbed prompt variants."""

    sample_count: int = 5
    kinds: Mapping[Modality, Kind] = field(default_factory=dict)
    pairing_order: PairingOrder = PairingOrder.PROGRESSIVE
    seed: int = 0
    params: PerturbParams = DEFAULT_PARAMS

    def __post_init__(self):
        if self.sample_count < 1:
            raise InvalidPlanError(
                f"sample_count must be at least 1, got {self.sample_count}"
            )
        kinds = dict(self.kinds)
        for mod, kind in kinds.items():
            name = kind.value if isinstance(kind, Enum) else str(kind)
            try:
                resolved = kind_for(mod, name)
            except InvariantViolation as e:
                raise InvalidPlanError(str(e)) from e
            if isinstance(kind, Enum) and resolved is not kind:
                raise InvalidPlanError(f"kind {kind!r} does not belong to {mod.value}")
            kinds[mod] = resolved
        object.__setattr__(self, "kinds", kinds)

    def kind_of(self, modality: Modality) -> Kind:
        return self.kinds.get(modality, DEFAULT_KINDS[modality])

    def with_seed(self, seed: int) -> "PerturbationPlan":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "kinds": {m.value: k.value for m, k in self.kinds.items()},
            "pairing_order": self.pairing_order.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: Mapping, params: PerturbParams = DEFAULT_PARAMS) -> "PerturbationPlan":
        kinds = {}
        for name, kind_name in dict(doc.get("kinds", {})).items():
            mod = Modality(name)
            kinds[mod] = kind_for(mod, kind_name)
        return cls(
            sample_count=int(doc.get("sample_count", 5)),
            kinds=kinds,
            pairing_order=PairingOrder(doc.get("pairing_order", "progressive")),
            seed=int(doc.get("seed", 0)),
            params=params,
        )


@dataclass(frozen=True)
class AppliedPerturbation:
    """One operator application recorded in a sample's provenance."""

    modality: Modality
    kind: Kind
    degree: float


@dataclass(frozen=True)
class PerturbedPrompt:
    """One perturbed variant of a prompt, with provenance."""

    sample_index: int
    bundle: PromptBundle
    applied: tuple[AppliedPerturbation, ...]

    def degree_of(self, modality: Modality) -> float:
        for a in self.applied:
            if a.modality is modality:
                return a.degree
        raise InvariantViolation(f"no {modality.value} perturbation recorded")


def degree_ladder(sample_count: int) -> tuple[float, ...]:
    """Evenly spaced degrees 0..1; a single sample gets degree 0."""
    if sample_count < 1:
        raise InvalidPlanError(f"sample_count must be at least 1, got {sample_count}")
    if sample_count == 1:
        return (0.0,)
    return tuple(i / (sample_count - 1) for i in range(sample_count))


def sample_rng(seed: int, sample_index: int, modality: Modality) -> np.random.Generator:
    """Independent generator for one (sample, modality) operator slot."""
    return np.random.default_rng(
        [seed, _SAMPLE_TAG, sample_index, MODALITY_CODE[modality]]
    )


def degree_schedule(
    plan: PerturbationPlan, modalities: Sequence[Modality]
) -> list[dict[Modality, float]]:
    """Per-sample mapping of modality to perturbation degree.

    Every modality sees each ladder degree exactly once across the C
    samples, whatever the pairing order; the orders differ only in how
    degrees line up across modalities within one sample.
    """
    c = plan.sample_count
    ladder = degree_ladder(c)
    mods = [m for m in MODALITY_ORDER if m in set(modalities)]
    if plan.pairing_order is PairingOrder.PROGRESSIVE:
        index_of = {m: [i for i in range(c)] for m in mods}
    elif plan.pairing_order is PairingOrder.RANDOM:
        index_of = {}
        for m in mods:
            perm_rng = np.random.default_rng(
                [plan.seed, _PAIRING_TAG, MODALITY_CODE[m]]
            )
            index_of[m] = [int(j) for j in perm_rng.permutation(c)]
    elif plan.pairing_order is PairingOrder.SHIFTED:
        index_of = {m: [(i + pos) % c for i in range(c)] for pos, m in enumerate(mods)}
    else:
        raise InvalidPlanError(f"unknown pairing order {plan.pairing_order!r}")
    return [{m: ladder[index_of[m][i]] for m in mods} for i in range(c)]


def perturb_content(
    content: Content,
    kind: Kind,
    degree: float,
    rng: np.random.Generator,
    params: PerturbParams = DEFAULT_PARAMS,
    rephraser=None,
) -> Content:
    """Apply one operator to one content object."""
    modality = modality_of(content)
    if isinstance(kind, TextKind):
        if modality is not Modality.TEXT:
            raise InvariantViolation(f"{kind.value} cannot apply to {modality.value}")
        return perturb_text(content, kind, degree, rng, rephraser, params)
    if isinstance(kind, ImageKind):
        if modality is not Modality.IMAGE:
            raise InvariantViolation(f"{kind.value} cannot apply to {modality.value}")
        return perturb_image(content, kind, degree, params)
    if isinstance(kind, AudioKind):
        if modality is not Modality.AUDIO:
            raise InvariantViolation(f"{kind.value} cannot apply to {modality.value}")
        return perturb_audio(content, kind, degree, params)
    if isinstance(kind, VideoKind):
        if modality is not Modality.VIDEO:
            raise InvariantViolation(f"{kind.value} cannot apply to {modality.value}")
        return perturb_video(content, kind, degree, rng, params)
    if isinstance(kind, PointCloudKind):
        if modality is not Modality.POINT_CLOUD:
            raise InvariantViolation(f"{kind.value} cannot apply to {modality.value}")
        return perturb_pointcloud(content, kind, degree, rng, params)
    raise InvariantViolation(f"unknown perturbation kind {kind!r}")


def build_samples(
    bundle: PromptBundle, plan: PerturbationPlan, rephraser=None
) -> list[PerturbedPrompt]:
    """Generate the plan's C perturbed variants of a prompt.

    Each sample perturbs every modality present in the bundle at that
    sample's scheduled degree. Output is deterministic in ``plan.seed`` and
    independent of evaluation order.
    """
    mods = bundle.modalities()
    schedule = degree_schedule(plan, mods)
    out = []
    for i in range(plan.sample_count):
        degrees = schedule[i]
        applied = []
        text = bundle.text
        attachments: dict[Modality, Content] = {}
        for m in mods:
            kind = plan.kind_of(m)
            degree = degrees[m]
            rng = sample_rng(plan.seed, i, m)
            if m is Modality.TEXT:
                text = perturb_content(
                    bundle.text, kind, degree, rng, plan.params, rephraser
                )
            else:
                attachments[m] = perturb_content(
                    bundle.attachments[m], kind, degree, rng, plan.params, rephraser
                )
            applied.append(AppliedPerturbation(modality=m, kind=kind, degree=degree))
        out.append(
            PerturbedPrompt(
                sample_index=i,
                bundle=PromptBundle(text=text, attachments=attachments),
                applied=tuple(applied),
            )
        )
    return out
