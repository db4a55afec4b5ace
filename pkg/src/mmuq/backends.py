"""Model backend clients: HTTP chat endpoints, local commands, and a mock.

Three client kinds hide behind one interface:

* ``http_chat`` speaks the common chat-completions JSON protocol: POST to
  ``{base_url}/chat/completions`` with bearer auth, images inlined as base64
  data URLs. Transient failures retry with exponential backoff; concurrent
  requests are capped by a semaphore.
* ``command`` spawns a configured program with a content file path and a
  prompt file path as arguments and reads stdout. If stdout names an
  existing file, that file is loaded as the response artifact; otherwise
  stdout is the response text. This is also how audio, video, and point
  cloud content reach models: serialized to their on-disk formats.
* ``mock`` is a pure function of its inputs and configured fixtures, used
  for tests and offline demos.

Every client answers four roles: ``respond`` (generate), ``caption``
(non-text content to text), ``judge`` (are two answers equivalent), and
``rephrase`` (meaning-preserving rewrite). Captioning text returns it
unchanged, and judging two identical strings short-circuits to True without
any call.
"""

from __future__ import annotations

import base64
import hashlib
import os
import re
import string
import subprocess
import tempfile
import threading
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import requests

from .errors import (
    AuthError,
    EmptyCaptionError,
    InvariantViolation,
    ProtocolError,
    TransportError,
    UnparseableVerdictError,
    UnsupportedModalityError,
)
from .media import (
    MODALITY_ORDER,
    Content,
    Modality,
    PromptBundle,
    TextContent,
    content_hash,
    load_content,
    modality_of,
    png_bytes,
    save_content,
)

#: Default prompt for the equivalence judge. ``{question}`` may be empty.
JUDGE_TEMPLATE = (
    "Question: {question}\n"
    "Answer A: {a}\n"
    "Answer B: {b}\n"
    "Do these two answers convey the same meaning in the context of the "
    "question? Reply with yes or no."
)

CAPTION_INSTRUCTION = "Describe this content in one short sentence."

REPHRASE_INSTRUCTION = (
    "Rewrite the following text so that it keeps exactly the same meaning "
    "but uses different wording. Reply with the rewrite only.\n{text}"
)

#: File extension used when serializing content for command backends.
_CONTENT_EXT = {
    Modality.TEXT: ".txt",
    Modality.IMAGE: ".png",
    Modality.AUDIO: ".wav",
    Modality.VIDEO: ".json",
    Modality.POINT_CLOUD: ".xyz",
}

_LOAD_EXT = {
    ".txt": Modality.TEXT,
    ".png": Modality.IMAGE,
    ".ppm": Modality.IMAGE,
    ".wav": Modality.AUDIO,
    ".json": Modality.VIDEO,
    ".xyz": Modality.POINT_CLOUD,
}

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace.

    The default notion of textual equality for grading and for the mock
    judge.
    """
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


@dataclass(frozen=True)
class RetryPolicy:
    """Retry settings for transient transport failures."""

    max_attempts: int = 3
    backoff_base_ms: float = 100.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise InvariantViolation(
                f"max_attempts must be at least 1, got {self.max_attempts}"
            )
        if self.backoff_base_ms < 0:
            raise InvariantViolation("backoff_base_ms must be non-negative")


@dataclass(frozen=True)
class BackendConfig:
    """Declarative description of one backend client.

    Secrets never appear here: ``api_key_env`` names the environment
    variable holding the key.
    """

    kind: str
    model: str = ""
    base_url: str = ""
    api_key_env: str = ""
    temperature: float = 0.0
    timeout: float = 30.0
    max_inflight: int = 4
    retry: RetryPolicy = RetryPolicy()
    judge_template: str = JUDGE_TEMPLATE
    program: tuple[str, ...] = ()
    fixtures: Mapping[str, Any] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("http_chat", "command", "mock"):
            raise InvariantViolation(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise InvariantViolation("temperature must be non-negative")
        if self.max_inflight < 1:
            raise InvariantViolation(
                f"max_inflight must be at least 1, got {self.max_inflight}"
            )
        if self.timeout <= 0:
            raise InvariantViolation("timeout must be positive")
        if self.kind == "http_chat":
            if not self.base_url:
                raise InvariantViolation("http_chat backend requires base_url")
            if not self.api_key_env:
                raise InvariantViolation(
                    "http_chat backend requires api_key_env naming the key variable"
                )
        if self.kind == "command" and not self.program:
            raise InvariantViolation("command backend requires a program argv")
        object.__setattr__(self, "program", tuple(self.program))

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BackendConfig":
        retry_doc = doc.get("retry", {})
        retry = RetryPolicy(
            max_attempts=int(retry_doc.get("max_attempts", 3)),
            backoff_base_ms=float(retry_doc.get("backoff_base_ms", 100.0)),
        )
        return cls(
            kind=str(doc.get("kind", "")),
            model=str(doc.get("model", "")),
            base_url=str(doc.get("base_url", "")).rstrip("/"),
            api_key_env=str(doc.get("api_key_env", "")),
            temperature=float(doc.get("temperature", 0.0)),
            timeout=float(doc.get("timeout", 30.0)),
            max_inflight=int(doc.get("max_inflight", 4)),
            retry=retry,
            judge_template=str(doc.get("judge_template", JUDGE_TEMPLATE)),
            program=tuple(doc.get("program", ())),
            fixtures=doc.get("fixtures"),
            seed=int(doc.get("seed", 0)),
        )


@dataclass(frozen=True)
class ModelResponse:
    """One model reply: at least one content object, keyed by modality."""

    outputs: Mapping[Modality, Content]
    latency_ms: float = 0.0
    raw: Any = None

    def __post_init__(self):
        outs = dict(self.outputs)
        object.__setattr__(self, "outputs", outs)
        if not outs:
            raise InvariantViolation("a model response must contain some content")
        for mod, content in outs.items():
            if modality_of(content) is not mod:
                raise InvariantViolation(
                    f"response content under {mod.value} is "
                    f"{modality_of(content).value}"
                )

    @property
    def text(self) -> TextContent | None:
        return self.outputs.get(Modality.TEXT)

    def modalities(self) -> tuple[Modality, ...]:
        return tuple(m for m in MODALITY_ORDER if m in self.outputs)

    def primary_artifact(self) -> tuple[Modality, Content]:
        """The first non-text output, for generation-task grading."""
        for m in MODALITY_ORDER:
            if m is not Modality.TEXT and m in self.outputs:
                return m, self.outputs[m]
        raise InvariantViolation("response has no non-text artifact")


class Backend:
    """Shared behavior: in-flight cap, caption pass-through, judge shortcut."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._gate = threading.BoundedSemaphore(config.max_inflight)

    def respond(
        self,
        bundle: PromptBundle,
        *,
        sample_index: int | None = None,
        temperature: float | None = None,
    ) -> ModelResponse:
        """Generate a reply to a prompt.

        ``sample_index`` identifies which perturbation draw this call
        belongs to; real backends ignore it, the mock uses it to script
        per-draw replies deterministically.
        """
        raise NotImplementedError

    def caption(self, content: Content) -> TextContent:
        """Render any content as text. Text passes through unchanged."""
        if isinstance(content, TextContent):
            return content
        out = self._caption_impl(content)
        if not out.text.strip():
            raise EmptyCaptionError("captioner returned blank output")
        return out

    def judge(self, question: str, a: str, b: str) -> bool:
        """Decide whether two answers mean the same thing.

        Identical strings short-circuit to True without any backend call,
        which enforces reflexivity.
        """
        if a == b:
            return True
        return self._judge_impl(question, a, b)

    def rephrase(self, text: TextContent, temperature: float) -> TextContent:
        raise NotImplementedError

    def _caption_impl(self, content: Content) -> TextContent:
        raise NotImplementedError

    def _judge_impl(self, question: str, a: str, b: str) -> bool:
        raise NotImplementedError


def _parse_verdict(reply: str) -> bool:
    m = re.search(r"\b(yes|no)\b", reply.lower())
    if m is None:
        raise UnparseableVerdictError(
            f"judge reply contains neither yes nor no: {reply!r}"
        )
    return m.group(1) == "yes"


# ---------------------------------------------------------------------------
# Mock backend

def _word_multiset(text: str) -> Counter:
    return Counter(normalize_answer(text).split())


class MockBackend(Backend):
    """Deterministic offline backend driven by a fixtures table.

    ``fixtures["responses"]`` maps a prompt's text to either a plain reply
    string or a dict with optional fields:

    * ``initial``: reply when no sample index is given,
    * ``samples``: replies indexed by sample index (wrapping),
    * ``revised``: reply when the prompt is a revision request,
    * ``cot``: replies indexed by how many answer/uncertainty pairs the
      prompt already carries.

    Lookup normalizes the prompt to a word multiset, so rule-based text
    perturbations of a fixture key still match it; revision and reasoning
    prompts that embed the original question match by word containment.
    ``fixtures["captions"]`` maps content hashes to captions. Unfixtured
    prompts get a stable hash-derived reply, so the mock is a pure function
    of (prompt, sample index, seed).
    """

    #: Substring that marks a revision request prompt.
    REVISION_MARKER = "Could you improve your answer"

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        fixtures = dict(config.fixtures or {})
        self._captions = {str(k): str(v) for k, v in fixtures.get("captions", {}).items()}
        self._entries: list[tuple[Counter, Any]] = []
        for key, entry in dict(fixtures.get("responses", {})).items():
            self._entries.append((_word_multiset(key), entry))

    def _find_entry(self, prompt_text: str) -> Any | None:
        words = _word_multiset(prompt_text)
        best = None
        best_size = -1
        for key_words, entry in self._entries:
            if key_words == words:
                return entry
            if sum(key_words.values()) > best_size and key_words <= words:
                best = entry
                best_size = sum(key_words.values())
        return best

    def _fallback(self, prompt_text: str) -> str:
        canon = " ".join(sorted(normalize_answer(prompt_text).split()))
        digest = hashlib.sha256(
            f"{self.config.seed}|{canon}".encode("utf-8")
        ).hexdigest()
        return f"mock-{digest[:8]}"

    def respond(
        self,
        bundle: PromptBundle,
        *,
        sample_index: int | None = None,
        temperature: float | None = None,
    ) -> ModelResponse:
        text = bundle.text.text
        entry = self._find_entry(text)
        answer = self._resolve(entry, text, sample_index)
        return ModelResponse(outputs={Modality.TEXT: TextContent(answer)})

    def _resolve(self, entry: Any, prompt_text: str, sample_index: int | None) -> str:
        if entry is None:
            return self._fallback(prompt_text)
        if isinstance(entry, str):
            return entry
        if sample_index is not None and "samples" in entry:
            samples = entry["samples"]
            return str(samples[sample_index % len(samples)])
        if self.REVISION_MARKER in prompt_text and "revised" in entry:
            return str(entry["revised"])
        if "cot" in entry and (
            "step-by-step" in prompt_text or "(uncertainty:" in prompt_text
        ):
            steps = entry["cot"]
            k = prompt_text.count("(uncertainty:")
            return str(steps[min(k, len(steps) - 1)])
        if "initial" in entry:
            return str(entry["initial"])
        if "samples" in entry:
            return str(entry["samples"][0])
        return self._fallback(prompt_text)

    def _caption_impl(self, content: Content) -> TextContent:
        digest = content_hash(content)
        if digest in self._captions:
            return TextContent(self._captions[digest])
        return TextContent(f"content-{digest[:8]}")

    def _judge_impl(self, question: str, a: str, b: str) -> bool:
        return normalize_answer(a) == normalize_answer(b)

    def rephrase(self, text: TextContent, temperature: float) -> TextContent:
        words = text.text.split()
        if len(words) < 2:
            return text
        digest = hashlib.sha256(
            f"{self.config.seed}|{normalize_answer(text.text)}".encode("utf-8")
        ).digest()
        k = (digest[0] + int(round(temperature * 100))) % len(words)
        if k == 0:
            return text
        return TextContent(" ".join(words[k:] + words[:k]))


# ---------------------------------------------------------------------------
# HTTP chat backend

_RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})


class HttpChatBackend(Backend):
    """Client for chat-completions-style HTTP endpoints.

    The API key is read once, at construction, from the environment
    variable named in the config; a missing key fails immediately with
    :class:`AuthError` before any request goes out.
    """

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        key = os.environ.get(config.api_key_env, "")
        if not key:
            raise AuthError(
                f"environment variable {config.api_key_env} is not set; "
                f"it must hold the API key for {config.base_url}"
            )
        self._headers = {"Authorization": f"Bearer {key}"}
        self._session = requests.Session()

    # -- transport

    def _post(self, payload: dict) -> dict:
        url = f"{self.config.base_url}/chat/completions"
        attempts = self.config.retry.max_attempts
        last_failure = "no attempts made"
        for attempt in range(attempts):
            if attempt > 0:
                time.sleep(
                    self.config.retry.backoff_base_ms / 1000.0 * (2 ** (attempt - 1))
                )
            try:
                with self._gate:
                    resp = self._session.post(
                        url,
                        json=payload,
                        headers=self._headers,
                        timeout=self.config.timeout,
                    )
            except requests.RequestException as e:
                last_failure = f"transport failure: {e}"
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as e:
                    raise ProtocolError(f"non-JSON body from {url}: {e}") from e
            if resp.status_code in (401, 403):
                raise AuthError(
                    f"{url} rejected credentials from "
                    f"${self.config.api_key_env} (HTTP {resp.status_code})"
                )
            if resp.status_code in _RETRYABLE_STATUS:
                last_failure = f"HTTP {resp.status_code}"
                continue
            raise ProtocolError(
                f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        raise TransportError(
            f"{url} still failing after {attempts} attempts ({last_failure})"
        )

    def _extract_text(self, data: dict) -> str:
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ProtocolError(f"malformed chat completion payload: {e!r}") from e
        if not isinstance(content, str):
            raise ProtocolError(
                f"chat completion content is {type(content).__name__}, expected str"
            )
        return content

    def _content_part(self, content: Content) -> dict:
        if isinstance(content, TextContent):
            return {"type": "text", "text": content.text}
        if modality_of(content) is Modality.IMAGE:
            encoded = base64.b64encode(png_bytes(content)).decode("ascii")
            return {
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{encoded}"},
            }
        raise UnsupportedModalityError(
            f"http_chat cannot carry {modality_of(content).value} content; "
            "use a command backend for this modality"
        )

    def _chat(self, parts: list[dict], temperature: float) -> tuple[str, dict]:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": parts}],
            "temperature": temperature,
        }
        started = time.monotonic()
        data = self._post(payload)
        latency = (time.monotonic() - started) * 1000.0
        return self._extract_text(data), {"raw": data, "latency_ms": latency}

    # -- roles

    def respond(
        self,
        bundle: PromptBundle,
        *,
        sample_index: int | None = None,
        temperature: float | None = None,
    ) -> ModelResponse:
        parts = [{"type": "text", "text": bundle.text.text}]
        for mod in MODALITY_ORDER:
            if mod in bundle.attachments:
                parts.append(self._content_part(bundle.attachments[mod]))
        t = self.config.temperature if temperature is None else temperature
        text, meta = self._chat(parts, t)
        return ModelResponse(
            outputs={Modality.TEXT: TextContent(text)},
            latency_ms=meta["latency_ms"],
            raw=meta["raw"],
        )

    def _caption_impl(self, content: Content) -> TextContent:
        parts = [
            {"type": "text", "text": CAPTION_INSTRUCTION},
            self._content_part(content),
        ]
        text, _ = self._chat(parts, 0.0)
        return TextContent(text.strip())

    def _judge_impl(self, question: str, a: str, b: str) -> bool:
        prompt = self.config.judge_template.format(question=question, a=a, b=b)
        text, _ = self._chat([{"type": "text", "text": prompt}], 0.0)
        return _parse_verdict(text)

    def rephrase(self, text: TextContent, temperature: float) -> TextContent:
        prompt = REPHRASE_INSTRUCTION.format(text=text.text)
        out, _ = self._chat([{"type": "text", "text": prompt}], temperature)
        return TextContent(out.strip())


# ---------------------------------------------------------------------------
# Command backend

class CommandBackend(Backend):
    """Adapter for local executables.

    Call convention: ``argv = [*program, content_path, prompt_path]``.
    The prompt text is written to ``prompt_path``; the first attachment (in
    canonical modality order) is serialized to ``content_path``, or the
    empty string is passed when there is none. The reply is stdout: a bare
    file path means "load this file as the response artifact", anything
    else is response text.
    """

    def _run(self, content: Content | None, prompt: str) -> str:
        with tempfile.TemporaryDirectory(prefix="mmuq-cmd-") as tmp:
            tmp_path = Path(tmp)
            prompt_path = tmp_path / "prompt.txt"
            prompt_path.write_text(prompt, encoding="utf-8")
            content_arg = ""
            if content is not None:
                ext = _CONTENT_EXT[modality_of(content)]
                content_path = tmp_path / f"content{ext}"
                save_content(content, content_path)
                content_arg = str(content_path)
            argv = [*self.config.program, content_arg, str(prompt_path)]
            try:
                with self._gate:
                    proc = subprocess.run(
                        argv,
                        capture_output=True,
                        text=True,
                        timeout=self.config.timeout,
                    )
            except FileNotFoundError as e:
                raise TransportError(f"command not found: {argv[0]}") from e
            except subprocess.TimeoutExpired as e:
                raise TransportError(
                    f"{argv[0]} timed out after {self.config.timeout}s"
                ) from e
            if proc.returncode != 0:
                tail = (proc.stderr or "").strip()[-200:]
                raise TransportError(
                    f"{argv[0]} exited with status {proc.returncode}: {tail}"
                )
            return proc.stdout

    def respond(
        self,
        bundle: PromptBundle,
        *,
        sample_index: int | None = None,
        temperature: float | None = None,
    ) -> ModelResponse:
        content = None
        for mod in MODALITY_ORDER:
            if mod in bundle.attachments:
                content = bundle.attachments[mod]
                break
        reply = self._run(content, bundle.text.text).strip()
        path = Path(reply)
        if reply and "\n" not in reply and path.suffix.lower() in _LOAD_EXT and path.is_file():
            mod = _LOAD_EXT[path.suffix.lower()]
            return ModelResponse(outputs={mod: load_content(path, mod)})
        return ModelResponse(outputs={Modality.TEXT: TextContent(reply)})

    def _caption_impl(self, content: Content) -> TextContent:
        return TextContent(self._run(content, CAPTION_INSTRUCTION).strip())

    def _judge_impl(self, question: str, a: str, b: str) -> bool:
        prompt = self.config.judge_template.format(question=question, a=a, b=b)
        return _parse_verdict(self._run(None, prompt))

    def rephrase(self, text: TextContent, temperature: float) -> TextContent:
        prompt = REPHRASE_INSTRUCTION.format(text=text.text)
        return TextContent(self._run(None, prompt).strip())


# ---------------------------------------------------------------------------
# Construction and role wiring

def make_backend(config: BackendConfig) -> Backend:
    """Instantiate the client a config describes."""
    if config.kind == "mock":
        return MockBackend(config)
    if config.kind == "http_chat":
        return HttpChatBackend(config)
    if config.kind == "command":
        return CommandBackend(config)
    raise InvariantViolation(f"unknown backend kind {config.kind!r}")


@dataclass(frozen=True)
class BackendRoleSet:
    """Which backend serves which pipeline role.

    Only the responder is mandatory. A missing captioner, judge, or grader
    limits which features run, and the pipeline fails loudly when it needs
    the missing role.
    """

    responder: BackendConfig
    captioner: BackendConfig | None = None
    equivalence_judge: BackendConfig | None = None
    grader: BackendConfig | None = None

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BackendRoleSet":
        def opt(name: str) -> BackendConfig | None:
            sub = doc.get(name)
            return None if sub is None else BackendConfig.from_dict(sub)

        if "responder" not in doc:
            raise InvariantViolation("role set requires a responder backend")
        return cls(
            responder=BackendConfig.from_dict(doc["responder"]),
            captioner=opt("captioner"),
            equivalence_judge=opt("equivalence_judge"),
            grader=opt("grader"),
        )


class RoleClients:
    """Instantiated clients for each configured role."""

    def __init__(
        self,
        responder: Backend,
        captioner: Backend | None = None,
        equivalence_judge: Backend | None = None,
        grader: Backend | None = None,
    ):
        self.responder = responder
        self.captioner = captioner
        self.equivalence_judge = equivalence_judge
        self.grader = grader

    @classmethod
    def from_roles(cls, roles: BackendRoleSet) -> "RoleClients":
        return cls(
            responder=make_backend(roles.responder),
            captioner=None if roles.captioner is None else make_backend(roles.captioner),
            equivalence_judge=(
                None
                if roles.equivalence_judge is None
                else make_backend(roles.equivalence_judge)
            ),
            grader=None if roles.grader is None else make_backend(roles.grader),
        )


def resolve_roles(roles: BackendRoleSet | RoleClients) -> RoleClients:
    """Accept either configured roles or already-built clients."""
    if isinstance(roles, RoleClients):
        return roles
    return RoleClients.from_roles(roles)


# Convenience wrappers for one-off calls.

def respond(
    bundle: PromptBundle,
    config: BackendConfig,
    *,
    sample_index: int | None = None,
    temperature: float | None = None,
) -> ModelResponse:
    return make_backend(config).respond(
        bundle, sample_index=sample_index, temperature=temperature
    )


def caption(content: Content, config: BackendConfig) -> TextContent:
    return make_backend(config).caption(content)


def judge_equivalence(a: str, b: str, config: BackendConfig, question: str = "") -> bool:
    return make_backend(config).judge(question, a, b)
