"""Audio perturbation operators on mono [-1, 1] waveforms."""

from __future__ import annotations

import numpy as np

from ..errors import InvariantViolation
from ..media import AudioContent
from .kinds import DEFAULT_PARAMS, AudioKind, PerturbParams, check_degree


def volume(
    audio: AudioContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> AudioContent:
    """Scale amplitude by ``1 + degree * volume_gain``, clamped to [-1, 1]."""
    degree = check_degree(degree)
    if degree == 0.0:
        return audio
    gain = 1.0 + degree * params.volume_gain
    out = np.clip(audio.to_array() * gain, -1.0, 1.0)
    return AudioContent.from_array(audio.sample_rate, out)


def temporal_shift(
    audio: AudioContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> AudioContent:
    """Circularly shift by ``floor(degree * shift_fraction * N)`` samples."""
    degree = check_degree(degree)
    n = len(audio.samples)
    offset = int(degree * params.shift_fraction * n)
    if offset % n == 0:
        return audio
    out = np.roll(audio.to_array(), offset)
    return AudioContent.from_array(audio.sample_rate, out)


def pitch_shift(
    audio: AudioContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> AudioContent:
    """Resample by factor ``1 + degree * pitch_factor`` (naive pitch change).

    Linear interpolation at stride ``factor`` raises the pitch and shortens
    the clip to ``round(N / factor)`` samples. The sample rate header is
    left untouched, which is what makes the pitch move.
    """
    degree = check_degree(degree)
    if degree == 0.0:
        return audio
    factor = 1.0 + degree * params.pitch_factor
    arr = audio.to_array()
    n = len(arr)
    m = max(1, round(n / factor))
    positions = np.clip(np.arange(m) * factor, 0.0, n - 1.0)
    out = np.interp(positions, np.arange(n), arr)
    return AudioContent.from_array(audio.sample_rate, out)


def timbre_tilt(
    audio: AudioContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> AudioContent:
    """Brighten the spectrum with a first-difference high-shelf.

    ``y[n] = x[n] + degree * tilt_strength * (x[n] - x[n-1])`` with ``x[-1]``
    taken as ``x[0]``, then clamped. A crude stand-in for a proper spectral
    tilt, but monotone in degree and exactly length-preserving.
    """
    degree = check_degree(degree)
    if degree == 0.0:
        return audio
    arr = audio.to_array()
    diff = arr - np.concatenate(([arr[0]], arr[:-1]))
    out = np.clip(arr + degree * params.tilt_strength * diff, -1.0, 1.0)
    return AudioContent.from_array(audio.sample_rate, out)


def perturb_audio(
    audio: AudioContent,
    kind: AudioKind,
    degree: float,
    params: PerturbParams = DEFAULT_PARAMS,
) -> AudioContent:
    if kind is AudioKind.VOLUME:
        return volume(audio, degree, params)
    if kind is AudioKind.TEMPORAL_SHIFT:
        return temporal_shift(audio, degree, params)
    if kind is AudioKind.PITCH_SHIFT:
        return pitch_shift(audio, degree, params)
    if kind is AudioKind.TIMBRE_TILT:
        return timbre_tilt(audio, degree, params)
    raise InvariantViolation(f"unknown audio kind {kind!r}")
