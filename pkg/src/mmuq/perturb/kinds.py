"""Perturbation kind registry and shared operator parameters.

Only semantic-preserving operators are registered here. Anything that
changes what a prompt asks for (word deletion, content cropping that
removes subjects, and so on) has no place in this registry, which is what
:func:`is_semantic_preserving` reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..errors import InvariantViolation
from ..media import Modality


class TextKind(str, Enum):
    WORD_SWAP = "word_swap"
    LLM_REPHRASE = "llm_rephrase"


class ImageKind(str, Enum):
    ROTATE = "rotate"
    BRIGHTNESS = "brightness"
    BLUR = "blur"


class AudioKind(str, Enum):
    VOLUME = "volume"
    TEMPORAL_SHIFT = "temporal_shift"
    PITCH_SHIFT = "pitch_shift"
    TIMBRE_TILT = "timbre_tilt"


class VideoKind(str, Enum):
    FRAME_DROP = "frame_drop"
    TEMPORAL_CROP = "temporal_crop"
    SPEED = "speed"
    SPATIAL_ROTATE = "spatial_rotate"
    SPATIAL_BRIGHTNESS = "spatial_brightness"
    SPATIAL_BLUR = "spatial_blur"


class PointCloudKind(str, Enum):
    SUBSAMPLE = "subsample"
    JITTER = "jitter"
    ROTATE3D = "rotate3d"
    SCALE = "scale"


Kind = TextKind | ImageKind | AudioKind | VideoKind | PointCloudKind

KINDS_BY_MODALITY: dict[Modality, type] = {
    Modality.TEXT: TextKind,
    Modality.IMAGE: ImageKind,
    Modality.AUDIO: AudioKind,
    Modality.VIDEO: VideoKind,
    Modality.POINT_CLOUD: PointCloudKind,
}

#: Default kind per modality when a plan does not choose one.
DEFAULT_KINDS: dict[Modality, Kind] = {
    Modality.TEXT: TextKind.WORD_SWAP,
    Modality.IMAGE: ImageKind.ROTATE,
    Modality.AUDIO: AudioKind.VOLUME,
    Modality.VIDEO: VideoKind.SPEED,
    Modality.POINT_CLOUD: PointCloudKind.JITTER,
}

#: Every kind that runs without a model backend.
RULE_BASED_KINDS: tuple[tuple[Modality, Kind], ...] = tuple(
    (mod, kind)
    for mod, enum_cls in KINDS_BY_MODALITY.items()
    for kind in enum_cls
    if kind is not TextKind.LLM_REPHRASE
)


def kind_for(modality: Modality, name: str) -> Kind:
    """Resolve a kind name within a modality's registry."""
    enum_cls = KINDS_BY_MODALITY[modality]
    try:
        return enum_cls(name)
    except ValueError:
        valid = ", ".join(k.value for k in enum_cls)
        raise InvariantViolation(
            f"unknown {modality.value} perturbation kind {name!r}; one of: {valid}"
        )


def is_semantic_preserving(kind: Kind) -> bool:
    """True for every registered kind; the registry admits nothing else."""
    return isinstance(
        kind, (TextKind, ImageKind, AudioKind, VideoKind, PointCloudKind)
    )


def check_degree(degree: float) -> float:
    """Validate a perturbation degree, returning it as a float in [0, 1]."""
    d = float(degree)
    if not 0.0 <= d <= 1.0:
        raise InvariantViolation(f"perturbation degree must lie in [0, 1], got {d}")
    return d


@dataclass(frozen=True)
class PerturbParams:
    """Maximum-strength settings for the rule-based operators.

    Each operator scales its parameter linearly with the degree, so these
    values describe what degree 1 does. Defaults are mild on purpose: the
    point of a perturbation is to leave the meaning of the prompt alone.
    """

    max_rotation_deg: float = 15.0
    brightness_gain: float = 0.4
    blur_sigma_px: float = 2.0
    volume_gain: float = 0.5
    shift_fraction: float = 0.2
    pitch_factor: float = 0.1
    tilt_strength: float = 0.3
    frame_drop_fraction: float = 0.3
    crop_fraction: float = 0.3
    speed_factor: float = 0.5
    subsample_fraction: float = 0.5
    jitter_scale: float = 0.01
    rotate3d_max_deg: float = 15.0
    scale_factor: float = 0.1
    rephrase_base_temperature: float = 0.2
    rephrase_temperature_span: float = 0.6


DEFAULT_PARAMS = PerturbParams()
