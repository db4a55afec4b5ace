"""Semantic-preserving perturbation operators and sampling plans."""

from .audio import perturb_audio, pitch_shift, temporal_shift, timbre_tilt, volume
from .image import blur, brightness, perturb_image, rotate
from .kinds import (
    DEFAULT_KINDS,
    DEFAULT_PARAMS,
    KINDS_BY_MODALITY,
    RULE_BASED_KINDS,
    AudioKind,
    ImageKind,
    Kind,
    PerturbParams,
    PointCloudKind,
    TextKind,
    VideoKind,
    check_degree,
    is_semantic_preserving,
    kind_for,
)
from .plan import (
    MODALITY_CODE,
    AppliedPerturbation,
    PairingOrder,
    PerturbationPlan,
    PerturbedPrompt,
    build_samples,
    degree_ladder,
    degree_schedule,
    perturb_content,
    sample_rng,
)
from .pointcloud import jitter, perturb_pointcloud, rotate3d, scale, subsample
from .text import perturb_text, rephrase, word_swap
from .video import frame_drop, perturb_video, spatial, speed, temporal_crop

__all__ = [
    "AppliedPerturbation",
    "AudioKind",
    "DEFAULT_KINDS",
    "DEFAULT_PARAMS",
    "ImageKind",
    "Kind",
    "KINDS_BY_MODALITY",
    "MODALITY_CODE",
    "PairingOrder",
    "PerturbParams",
    "PerturbationPlan",
    "PerturbedPrompt",
    "PointCloudKind",
    "RULE_BASED_KINDS",
    "TextKind",
    "VideoKind",
    "blur",
    "brightness",
    "build_samples",
    "check_degree",
    "degree_ladder",
    "degree_schedule",
    "frame_drop",
    "is_semantic_preserving",
    "jitter",
    "kind_for",
    "perturb_audio",
    "perturb_content",
    "perturb_image",
    "perturb_pointcloud",
    "perturb_text",
    "perturb_video",
    "pitch_shift",
    "rephrase",
    "rotate",
    "rotate3d",
    "sample_rng",
    "scale",
    "spatial",
    "speed",
    "subsample",
    "temporal_crop",
    "temporal_shift",
    "timbre_tilt",
    "volume",
    "word_swap",
]
