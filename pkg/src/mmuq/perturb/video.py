"""Video perturbation operators.

Temporal kinds (``frame_drop``, ``temporal_crop``) need at least two frames
and always keep at least one, preserving frame order. ``speed`` rewrites
only the frame rate. The spatial kinds apply one image operator to every
frame at the same degree.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvariantViolation, TooFewFramesError
from ..media import VideoContent
from .image import blur, brightness, rotate
from .kinds import DEFAULT_PARAMS, PerturbParams, VideoKind, check_degree


def frame_drop(
    video: VideoContent,
    degree: float,
    rng: np.random.Generator,
    params: PerturbParams = DEFAULT_PARAMS,
) -> VideoContent:
    """Drop ``floor(degree * frame_drop_fraction * F)`` random frames."""
    degree = check_degree(degree)
    f = len(video.frames)
    if f < 2:
        raise TooFewFramesError(f"frame_drop needs at least 2 frames, got {f}")
    count = min(int(degree * params.frame_drop_fraction * f), f - 1)
    if count == 0:
        return video
    dropped = set(int(i) for i in rng.choice(f, size=count, replace=False))
    kept = tuple(frame for i, frame in enumerate(video.frames) if i not in dropped)
    return VideoContent(fps=video.fps, frames=kept)


def temporal_crop(
    video: VideoContent,
    degree: float,
    rng: np.random.Generator,
    params: PerturbParams = DEFAULT_PARAMS,
) -> VideoContent:
    """Keep a contiguous window of ``ceil((1 - degree * crop_fraction) * F)`` frames.

    The window start is drawn uniformly from the valid range.
    """
    degree = check_degree(degree)
    f = len(video.frames)
    if f < 2:
        raise TooFewFramesError(f"temporal_crop needs at least 2 frames, got {f}")
    keep = int(np.ceil((1.0 - degree * params.crop_fraction) * f))
    keep = max(1, min(keep, f))
    if keep == f:
        return video
    start = int(rng.integers(0, f - keep + 1))
    return VideoContent(fps=video.fps, frames=video.frames[start : start + keep])


def speed(
    video: VideoContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> VideoContent:
    """Scale the frame rate by ``1 + degree * speed_factor``; frames untouched."""
    degree = check_degree(degree)
    if degree == 0.0:
        return video
    return VideoContent(fps=video.fps * (1.0 + degree * params.speed_factor), frames=video.frames)


_SPATIAL_OPS = {
    VideoKind.SPATIAL_ROTATE: rotate,
    VideoKind.SPATIAL_BRIGHTNESS: brightness,
    VideoKind.SPATIAL_BLUR: blur,
}


def spatial(
    video: VideoContent,
    kind: VideoKind,
    degree: float,
    params: PerturbParams = DEFAULT_PARAMS,
) -> VideoContent:
    """Apply one image operator to every frame at the same degree."""
    degree = check_degree(degree)
    if degree == 0.0:
        return video
    op = _SPATIAL_OPS[kind]
    return VideoContent(
        fps=video.fps, frames=tuple(op(frame, degree, params) for frame in video.frames)
    )


def perturb_video(
    video: VideoContent,
    kind: VideoKind,
    degree: float,
    rng: np.random.Generator,
    params: PerturbParams = DEFAULT_PARAMS,
) -> VideoContent:
    if kind is VideoKind.FRAME_DROP:
        return frame_drop(video, degree, rng, params)
    if kind is VideoKind.TEMPORAL_CROP:
        return temporal_crop(video, degree, rng, params)
    if kind is VideoKind.SPEED:
        return speed(video, degree, params)
    if kind in _SPATIAL_OPS:
        return spatial(video, kind, degree, params)
    raise InvariantViolation(f"unknown video kind {kind!r}")
