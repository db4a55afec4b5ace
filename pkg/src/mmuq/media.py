"""Content types for the five supported modalities, plus file round-trip I/O.

All content objects are immutable value types. Pixel data lives in raw
``bytes``, audio in float tuples scaled to [-1, 1], point clouds in float
coordinate tuples. Converters to and from numpy arrays are provided because
every perturbation operator works on arrays.

On-disk formats are deliberately boring: UTF-8 text, PPM (P3 or P6) or PNG
images, 16-bit PCM mono WAV audio, ASCII ``x y z [r g b]`` point clouds, and
a JSON manifest naming per-frame image files for video.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
import wave
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image as _PILImage

from .errors import (
    EncodingError,
    FormatError,
    InvariantViolation,
    MissingFileError,
)


class Modality(str, Enum):
    """Tag for the kind of content a value carries."""

    TEXT = "text"
    IMAGE = "image"
    AUDIO = "audio"
    VIDEO = "video"
    POINT_CLOUD = "point_cloud"


#: Canonical ordering used whenever modalities are iterated or merged.
MODALITY_ORDER: tuple[Modality, ...] = (
    Modality.TEXT,
    Modality.IMAGE,
    Modality.AUDIO,
    Modality.VIDEO,
    Modality.POINT_CLOUD,
)


@dataclass(frozen=True)
class TextContent:
    """A unicode string. May be empty only as a model response."""

    text: str

    def __post_init__(self):
        if not isinstance(self.text, str):
            raise InvariantViolation("text content must be a str")


@dataclass(frozen=True)
class ImageContent:
    """An 8-bit RGB raster stored row-major as ``height*width*3`` bytes."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvariantViolation(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise InvariantViolation(
                f"image pixel buffer has {len(self.pixels)} bytes, expected {expected}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageContent":
        """Build from an ``(H, W, 3)`` uint8 array."""
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvariantViolation(f"expected (H, W, 3) array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise InvariantViolation(f"expected uint8 pixels, got {arr.dtype}")
        h, w = arr.shape[:2]
        return cls(width=w, height=h, pixels=arr.tobytes())

    def to_array(self) -> np.ndarray:
        """Return pixels as an ``(H, W, 3)`` uint8 array."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(
            self.height, self.width, 3
        )


@dataclass(frozen=True)
class AudioContent:
    """A mono waveform: sample rate in Hz plus float samples in [-1, 1]."""

    sample_rate: int
    samples: tuple[float, ...]

    def __post_init__(self):
        if self.sample_rate < 1:
            raise InvariantViolation(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))
        if len(self.samples) == 0:
            raise InvariantViolation("audio must contain at least one sample")
        arr = np.asarray(self.samples)
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation("audio samples must be finite")
        if arr.min() < -1.0 or arr.max() > 1.0:
            raise InvariantViolation(
                f"audio samples must lie in [-1, 1], got range "
                f"[{arr.min():.6g}, {arr.max():.6g}]"
            )

    @classmethod
    def from_array(cls, sample_rate: int, arr: np.ndarray) -> "AudioContent":
        return cls(sample_rate=sample_rate, samples=tuple(np.asarray(arr, dtype=float)))

    def to_array(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=np.float64)


@dataclass(frozen=True)
class VideoContent:
    """An ordered frame sequence with a nominal frame rate.

    All frames share one resolution; a video has at least one frame.
    """

    fps: float
    frames: tuple[ImageContent, ...]

    def __post_init__(self):
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise InvariantViolation(f"fps must be positive and finite, got {self.fps}")
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) == 0:
            raise InvariantViolation("video must contain at least one frame")
        w, h = self.frames[0].width, self.frames[0].height
        for i, f in enumerate(self.frames):
            if f.width != w or f.height != h:
                raise InvariantViolation(
                    f"frame {i} is {f.width}x{f.height}, expected {w}x{h}"
                )


@dataclass(frozen=True)
class PointCloudContent:
    """3D points, optionally with one 8-bit RGB color per point."""

    points: tuple[tuple[float, float, float], ...]
    colors: tuple[tuple[int, int, int], ...] | None = None

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) == 0:
            raise InvariantViolation("point cloud must contain at least one point")
        for p in pts:
            if len(p) != 3:
                raise InvariantViolation(f"point has {len(p)} coordinates, expected 3")
            if not all(math.isfinite(c) for c in p):
                raise InvariantViolation("point coordinates must be finite")
        if self.colors is not None:
            cols = tuple(tuple(int(c) for c in col) for col in self.colors)
            object.__setattr__(self, "colors", cols)
            if len(cols) != len(pts):
                raise InvariantViolation(
                    f"{len(cols)} colors for {len(pts)} points; counts must match"
                )
            for col in cols:
                if len(col) != 3 or not all(0 <= c <= 255 for c in col):
                    raise InvariantViolation(f"invalid 8-bit color {col}")

    @classmethod
    def from_arrays(
        cls, points: np.ndarray, colors: np.ndarray | None = None
    ) -> "PointCloudContent":
        pts = tuple(tuple(float(c) for c in p) for p in np.asarray(points))
        cols = None
        if colors is not None:
            cols = tuple(tuple(int(c) for c in col) for col in np.asarray(colors))
        return cls(points=pts, colors=cols)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)


Content = TextContent | ImageContent | AudioContent | VideoContent | PointCloudContent

_CONTENT_MODALITY: dict[type, Modality] = {
    TextContent: Modality.TEXT,
    ImageContent: Modality.IMAGE,
    AudioContent: Modality.AUDIO,
    VideoContent: Modality.VIDEO,
    PointCloudContent: Modality.POINT_CLOUD,
}


def modality_of(content: Content) -> Modality:
    """Return the modality tag for a content object."""
    try:
        return _CONTENT_MODALITY[type(content)]
    except KeyError:
        raise InvariantViolation(f"not a content object: {type(content).__name__}")


@dataclass(frozen=True)
class PromptBundle:
    """A prompt: instruction text plus at most one attachment per modality.

    The text part is mandatory and non-empty; attachments are keyed by
    modality and may not include a second text part.
    """

    text: TextContent
    attachments: Mapping[Modality, Content] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.text, TextContent) or len(self.text.text) == 0:
            raise InvariantViolation("prompt text must be present and non-empty")
        atts = dict(self.attachments)
        object.__setattr__(self, "attachments", atts)
        for mod, content in atts.items():
            if not isinstance(mod, Modality):
                raise InvariantViolation(f"attachment key {mod!r} is not a modality")
            if mod is Modality.TEXT:
                raise InvariantViolation("text goes in the prompt body, not attachments")
            if modality_of(content) is not mod:
                raise InvariantViolation(
                    f"attachment under key {mod.value} is actually "
                    f"{modality_of(content).value}"
                )

    def modalities(self) -> tuple[Modality, ...]:
        """Modalities present in this bundle, in canonical order."""
        present = {Modality.TEXT, *self.attachments}
        return tuple(m for m in MODALITY_ORDER if m in present)

    def with_text(self, text: str) -> "PromptBundle":
        """Copy of this bundle with the instruction text replaced."""
        return PromptBundle(text=TextContent(text), attachments=self.attachments)


# ---------------------------------------------------------------------------
# Hashing

def content_hash(content: Content) -> str:
    """Stable SHA-256 hex digest of a content object's value."""
    h = hashlib.sha256()
    _hash_into(h, content)
    return h.hexdigest()


def _hash_into(h, content: Content) -> None:
    if isinstance(content, TextContent):
        h.update(b"text\x00")
        h.update(content.text.encode("utf-8"))
    elif isinstance(content, ImageContent):
        h.update(b"image\x00")
        h.update(struct.pack("<II", content.width, content.height))
        h.update(content.pixels)
    elif isinstance(content, AudioContent):
        h.update(b"audio\x00")
        h.update(struct.pack("<I", content.sample_rate))
        h.update(np.asarray(content.samples, dtype="<f8").tobytes())
    elif isinstance(content, VideoContent):
        h.update(b"video\x00")
        h.update(struct.pack("<d", content.fps))
        for f in content.frames:
            _hash_into(h, f)
    elif isinstance(content, PointCloudContent):
        h.update(b"points\x00")
        h.update(np.asarray(content.points, dtype="<f8").tobytes())
        if content.colors is not None:
            h.update(np.asarray(content.colors, dtype="<u1").tobytes())
    else:
        raise InvariantViolation(f"cannot hash {type(content).__name__}")


# ---------------------------------------------------------------------------
# PCM helpers

def encode_pcm16(samples: Sequence[float]) -> bytes:
    """Quantize [-1, 1] floats to little-endian signed 16-bit PCM bytes."""
    arr = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.rint(arr * 32768.0), -32768, 32767).astype("<i2")
    return ints.tobytes()


def decode_pcm16(data: bytes) -> tuple[float, ...]:
    """Inverse of :func:`encode_pcm16`: ints scaled by 1/32768."""
    if len(data) % 2 != 0:
        raise FormatError(f"PCM payload has odd byte count {len(data)}")
    ints = np.frombuffer(data, dtype="<i2")
    return tuple(ints.astype(np.float64) / 32768.0)


# ---------------------------------------------------------------------------
# Loading

def load_content(path: str | Path, modality: Modality) -> Content:
    """Load a file as the given modality, dispatching on file extension.

    Raises :class:`MissingFileError` if the file does not exist and
    :class:`FormatError` if it cannot be decoded.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such file: {path}")
    ext = path.suffix.lower()
    if modality is Modality.TEXT:
        return _load_text(path)
    if modality is Modality.IMAGE:
        if ext == ".ppm":
            return _load_ppm(path)
        if ext == ".png":
            return _load_png(path)
        raise FormatError(f"unsupported image extension {ext!r} for {path}")
    if modality is Modality.AUDIO:
        if ext == ".wav":
            return _load_wav(path)
        raise FormatError(f"unsupported audio extension {ext!r} for {path}")
    if modality is Modality.VIDEO:
        if ext == ".json":
            return _load_video_manifest(path)
        raise FormatError(f"unsupported video extension {ext!r} for {path}")
    if modality is Modality.POINT_CLOUD:
        if ext == ".xyz":
            return _load_xyz(path)
        raise FormatError(f"unsupported point cloud extension {ext!r} for {path}")
    raise InvariantViolation(f"unknown modality {modality!r}")


def save_content(content: Content, path: str | Path) -> None:
    """Write a content object to disk in the format implied by the extension."""
    path = Path(path)
    ext = path.suffix.lower()
    if isinstance(content, TextContent):
        path.write_text(content.text, encoding="utf-8")
    elif isinstance(content, ImageContent):
        if ext == ".ppm":
            _save_ppm(content, path)
        elif ext == ".png":
            _save_png(content, path)
        else:
            raise EncodingError(f"cannot encode image as {ext!r}")
    elif isinstance(content, AudioContent):
        if ext != ".wav":
            raise EncodingError(f"cannot encode audio as {ext!r}")
        _save_wav(content, path)
    elif isinstance(content, VideoContent):
        if ext != ".json":
            raise EncodingError(f"cannot encode video as {ext!r}")
        _save_video_manifest(content, path)
    elif isinstance(content, PointCloudContent):
        if ext != ".xyz":
            raise EncodingError(f"cannot encode point cloud as {ext!r}")
        _save_xyz(content, path)
    else:
        raise InvariantViolation(f"cannot save {type(content).__name__}")


def _load_text(path: Path) -> TextContent:
    try:
        return TextContent(path.read_bytes().decode("utf-8"))
    except UnicodeDecodeError as e:
        raise FormatError(f"{path} is not valid UTF-8: {e}") from e


# ---------------------------------------------------------------------------
# PPM

class _PpmTokenizer:
    """Whitespace-and-comment-aware tokenizer over raw PPM bytes."""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def next_token(self) -> bytes:
        data, n = self.data, len(self.data)
        while self.pos < n:
            c = self.data[self.pos]
            if c in b" \t\r\n":
                self.pos += 1
            elif c == ord("#"):
                while self.pos < n and data[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                break
        if self.pos >= n:
            raise FormatError(f"{self.path}: unexpected end of header at byte {self.pos}")
        start = self.pos
        while self.pos < n and data[self.pos] not in b" \t\r\n":
            self.pos += 1
        return data[start : self.pos]

    def next_int(self, what: str) -> int:
        tok = self.next_token()
        try:
            return int(tok)
        except ValueError:
            raise FormatError(
                f"{self.path}: expected integer {what}, got {tok!r} near byte {self.pos}"
            )


def _load_ppm(path: Path) -> ImageContent:
    data = path.read_bytes()
    tok = _PpmTokenizer(data, path)
    magic = tok.next_token()
    if magic not in (b"P3", b"P6"):
        raise FormatError(f"{path}: bad PPM magic {magic!r}")
    width = tok.next_int("width")
    height = tok.next_int("height")
    maxval = tok.next_int("maxval")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: non-positive PPM dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM supported, maxval {maxval}")
    count = width * height * 3
    if magic == b"P3":
        values = []
        for i in range(count):
            v = tok.next_int("sample")
            if not 0 <= v <= maxval:
                raise FormatError(
                    f"{path}: sample {v} out of range 0..{maxval} near byte {tok.pos}"
                )
            values.append(v)
        pixels = bytes(values)
    else:
        # Exactly one whitespace byte separates the header from the raster.
        if tok.pos >= len(data) or data[tok.pos] not in b" \t\r\n":
            raise FormatError(f"{path}: missing separator after P6 header")
        start = tok.pos + 1
        pixels = data[start : start + count]
        if len(pixels) < count:
            raise FormatError(
                f"{path}: P6 raster truncated at byte {start + len(pixels)}, "
                f"expected {count} bytes"
            )
    return ImageContent(width=width, height=height, pixels=pixels)


def _save_ppm(content: ImageContent, path: Path) -> None:
    header = f"P6\n{content.width} {content.height}\n255\n".encode("ascii")
    path.write_bytes(header + content.pixels)


def _load_png(path: Path) -> ImageContent:
    try:
        with _PILImage.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except Exception as e:
        raise FormatError(f"{path}: cannot decode PNG: {e}") from e
    return ImageContent.from_array(arr)


def _save_png(content: ImageContent, path: Path) -> None:
    img = _PILImage.fromarray(content.to_array(), mode="RGB")
    img.save(path, format="PNG")


def png_bytes(content: ImageContent) -> bytes:
    """Encode an image as PNG in memory."""
    buf = io.BytesIO()
    _PILImage.fromarray(content.to_array(), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# WAV

def _load_wav(path: Path) -> AudioContent:
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            if channels != 1:
                raise FormatError(f"{path}: expected mono audio, got {channels} channels")
            if w.getsampwidth() != 2:
                raise FormatError(
                    f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit"
                )
            if w.getcomptype() != "NONE":
                raise FormatError(f"{path}: compressed WAV not supported")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as e:
        raise FormatError(f"{path}: cannot decode WAV: {e}") from e
    if len(raw) == 0:
        raise FormatError(f"{path}: WAV contains no samples")
    return AudioContent(sample_rate=rate, samples=decode_pcm16(raw))


def _save_wav(content: AudioContent, path: Path) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(content.sample_rate)
        w.writeframes(encode_pcm16(content.samples))


# ---------------------------------------------------------------------------
# XYZ point clouds

def _load_xyz(path: Path) -> PointCloudContent:
    points: list[tuple[float, float, float]] = []
    colors: list[tuple[int, int, int]] = []
    width: int | None = None
    text = _load_text(path).text
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (3, 6):
            raise FormatError(
                f"{path}:{lineno}: expected 3 or 6 columns, got {len(parts)}"
            )
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise FormatError(
                f"{path}:{lineno}: mixed {width}- and {len(parts)}-column rows"
            )
        try:
            x, y, z = (float(v) for v in parts[:3])
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: bad coordinate: {e}") from e
        points.append((x, y, z))
        if width == 6:
            try:
                r, g, b = (int(v) for v in parts[3:])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: bad color: {e}") from e
            if not all(0 <= c <= 255 for c in (r, g, b)):
                raise FormatError(f"{path}:{lineno}: color {(r, g, b)} out of 0..255")
            colors.append((r, g, b))
    if not points:
        raise FormatError(f"{path}: point cloud file contains no points")
    return PointCloudContent(
        points=tuple(points), colors=tuple(colors) if width == 6 else None
    )


def _save_xyz(content: PointCloudContent, path: Path) -> None:
    lines = []
    for i, (x, y, z) in enumerate(content.points):
        row = f"{x!r} {y!r} {z!r}"
        if content.colors is not None:
            r, g, b = content.colors[i]
            row += f" {r} {g} {b}"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Video manifests

def _load_video_manifest(path: Path) -> VideoContent:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError(f"{path}: cannot parse video manifest: {e}") from e
    if not isinstance(doc, dict) or "fps" not in doc or "frames" not in doc:
        raise FormatError(f"{path}: video manifest needs 'fps' and 'frames' keys")
    fps = doc["fps"]
    frames = doc["frames"]
    if not isinstance(fps, (int, float)):
        raise FormatError(f"{path}: fps must be a number, got {type(fps).__name__}")
    if not isinstance(frames, list) or not frames:
        raise FormatError(f"{path}: frames must be a non-empty list of paths")
    loaded = []
    for name in frames:
        frame_path = path.parent / name
        if not frame_path.exists():
            raise MissingFileError(f"{path}: frame file missing: {frame_path}")
        loaded.append(load_content(frame_path, Modality.IMAGE))
    try:
        return VideoContent(fps=float(fps), frames=tuple(loaded))
    except InvariantViolation as e:
        raise FormatError(f"{path}: {e}") from e


def _save_video_manifest(content: VideoContent, path: Path) -> None:
    stem = path.stem
    names = []
    for i, frame in enumerate(content.frames):
        name = f"{stem}_{i:04d}.png"
        _save_png(frame, path.parent / name)
        names.append(name)
    doc = {"fps": content.fps, "frames": names}
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
