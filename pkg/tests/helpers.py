"""Shared test utilities: oracles, random content builders, fake servers."""

from __future__ import annotations

import json
import re
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import mpmath
import numpy as np

from mmuq.backends import (
    BackendConfig,
    BackendRoleSet,
    ModelResponse,
    RoleClients,
    make_backend,
    normalize_answer,
)
from mmuq.media import (
    AudioContent,
    ImageContent,
    Modality,
    PointCloudContent,
    TextContent,
    VideoContent,
)

mpmath.mp.dps = 50


def exact_entropy(counts) -> float:
    """Normalized cluster entropy evaluated at 50 decimal digits.

    Independent of the library implementation: direct evaluation of
    -(1/ln C) * sum (c/C) ln(c/C) in arbitrary precision, rounded to float
    at the very end.
    """
    total = sum(counts)
    if total <= 1:
        return 0.0
    c = mpmath.mpf(total)
    h = mpmath.mpf(0)
    for count in counts:
        p = mpmath.mpf(count) / c
        h -= p * mpmath.log(p)
    return float(h / mpmath.log(c))


def exact_raw_entropy(counts) -> float:
    total = sum(counts)
    c = mpmath.mpf(total)
    h = mpmath.mpf(0)
    for count in counts:
        p = mpmath.mpf(count) / c
        h -= p * mpmath.log(p)
    return float(h)


# ---------------------------------------------------------------------------
# Random content builders

_WORDS = (
    "amber basalt cedar dune ember fjord garnet harbor iris juniper kelp "
    "lumen mesa nectar onyx prairie quartz reef sable tundra umber vale "
    "willow xenon yarrow zephyr"
).split()


def random_text(rng: np.random.Generator, max_words: int = 24) -> TextContent:
    n = int(rng.integers(1, max_words + 1))
    words = [_WORDS[int(i)] for i in rng.integers(0, len(_WORDS), n)]
    return TextContent(" ".join(words))


def random_image(rng: np.random.Generator, max_side: int = 24) -> ImageContent:
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    arr = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    return ImageContent.from_array(arr)


def random_audio(rng: np.random.Generator, max_len: int = 2000) -> AudioContent:
    n = int(rng.integers(1, max_len + 1))
    arr = rng.uniform(-1.0, 1.0, n)
    return AudioContent.from_array(int(rng.integers(4000, 48001)), arr)


def random_video(
    rng: np.random.Generator, min_frames: int = 2, max_frames: int = 6
) -> VideoContent:
    f = int(rng.integers(min_frames, max_frames + 1))
    h = int(rng.integers(2, 13))
    w = int(rng.integers(2, 13))
    frames = tuple(
        ImageContent.from_array(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
        for _ in range(f)
    )
    return VideoContent(fps=float(rng.uniform(1.0, 60.0)), frames=frames)


def random_cloud(
    rng: np.random.Generator, max_points: int = 200, with_colors: bool | None = None
) -> PointCloudContent:
    p = int(rng.integers(1, max_points + 1))
    pts = rng.normal(0.0, 5.0, (p, 3))
    if with_colors is None:
        with_colors = bool(rng.integers(0, 2))
    colors = rng.integers(0, 256, (p, 3)) if with_colors else None
    return PointCloudContent.from_arrays(pts, colors)


def random_content(rng: np.random.Generator, modality: Modality):
    if modality is Modality.TEXT:
        return random_text(rng)
    if modality is Modality.IMAGE:
        return random_image(rng)
    if modality is Modality.AUDIO:
        return random_audio(rng)
    if modality is Modality.VIDEO:
        return random_video(rng)
    if modality is Modality.POINT_CLOUD:
        return random_cloud(rng)
    raise AssertionError(modality)


# ---------------------------------------------------------------------------
# Backends for tests

def mock_roles(fixtures: dict | None = None, seed: int = 0) -> RoleClients:
    """Role clients where every role is a mock backend sharing one fixture table."""
    shared = BackendConfig(kind="mock", fixtures=fixtures, seed=seed)
    return RoleClients.from_roles(
        BackendRoleSet(
            responder=shared,
            captioner=shared,
            equivalence_judge=shared,
            grader=shared,
        )
    )


class ScriptedResponder:
    """Duck-typed backend whose replies come from a plain function.

    ``fn(bundle, sample_index, temperature) -> str``. Captioning passes
    text through and hashes other content; judging is normalized string
    equality. Records every respond call for assertion.
    """

    def __init__(self, fn):
        self.fn = fn
        self.calls: list[tuple[str, int | None, float | None]] = []
        self._fallback = make_backend(BackendConfig(kind="mock"))

    def respond(self, bundle, *, sample_index=None, temperature=None):
        self.calls.append((bundle.text.text, sample_index, temperature))
        reply = self.fn(bundle, sample_index, temperature)
        return ModelResponse(outputs={Modality.TEXT: TextContent(str(reply))})

    def caption(self, content):
        return self._fallback.caption(content)

    def judge(self, question, a, b):
        return normalize_answer(a) == normalize_answer(b)

    def rephrase(self, text, temperature):
        return text


def scripted_clients(fn) -> tuple[RoleClients, ScriptedResponder]:
    responder = ScriptedResponder(fn)
    judge = make_backend(BackendConfig(kind="mock"))
    clients = RoleClients(
        responder=responder,
        captioner=judge,
        equivalence_judge=judge,
        grader=judge,
    )
    return clients, responder


def uncertainties_in_prompt(text: str) -> list[float]:
    return [float(m) for m in re.findall(r"\(uncertainty: ([0-9.]+)\)", text)]


# ---------------------------------------------------------------------------
# Local chat-completions server

class _ChatHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        status, payload = self.server.respond_fn(self, body)
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@contextmanager
def chat_server(respond_fn):
    """Serve ``respond_fn(handler, body) -> (status, payload)`` locally."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
    server.respond_fn = respond_fn
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}"
    finally:
        server.shutdown()
        thread.join()


def completion(text: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}
