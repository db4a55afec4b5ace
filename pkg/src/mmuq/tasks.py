"""Applied pipelines: hallucination detection, mitigation, and stepwise
reasoning with uncertainty feedback.

Detection runs three phases per dataset item: draw the initial answer at
low temperature, estimate uncertainty from perturbed-prompt samples, and
grade the initial answer against the ground truth to label it. Mitigation
asks the model to revise the most uncertain answers. The reasoning loop
feeds each step's uncertainty back into the next step's prompt.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .backends import (
    BackendRoleSet,
    ModelResponse,
    RoleClients,
    normalize_answer,
    resolve_roles,
)
from .errors import FormatError, InvariantViolation, MissingFileError, ToolkitError
from .media import Modality, PromptBundle, TextContent, load_content
from .metrics import DetectionRecord
from .perturb import PerturbationPlan, build_samples
from .uncertainty import estimate

#: Sampling temperature for the initial answer draw.
DEFAULT_INITIAL_TEMPERATURE = 0.1

#: How uncertainty scores are rendered inside prompts.
UNCERTAINTY_FORMAT = "{:.2f}"

REVISION_TEMPLATE = (
    "Prompt: {prompt}, Initial Answer: {answer}, Your answer has a high "
    "uncertainty score of {uncertainty}, which ranges from 0 to 1. Could "
    "you improve your answer and revise it to be more accurate?"
)

COT_FIRST_STEP = (
    "Let's think step-by-step. Now, provide your first step of the answer:"
)
COT_FINISH_INSTRUCTION = (
    "Respond with `Finish.' when you think you have solved the question."
)
COT_STEP_LINE = "Step {index} answer: {answer} (uncertainty: {uncertainty})"
FINISH_TOKEN = "Finish."

TASK_KINDS = ("comprehension", "generation")


@dataclass(frozen=True)
class DatasetItem:
    """One evaluation item: a prompt, its reference answer, and task kind."""

    id: str
    prompt: PromptBundle
    ground_truth: str
    task_kind: str = "comprehension"

    def __post_init__(self):
        if not self.id:
            raise InvariantViolation("dataset items need a non-empty id")
        if self.task_kind not in TASK_KINDS:
            raise InvariantViolation(
                f"item {self.id}: task_kind must be one of {TASK_KINDS}, "
                f"got {self.task_kind!r}"
            )


def load_manifest(path: str | Path) -> list[DatasetItem]:
    """Read a JSONL dataset manifest.

    Each line holds ``{"id", "text", "attachments", "ground_truth",
    "task_kind"}``, with attachment paths relative to the manifest file.
    Any malformed line or duplicate id aborts the load.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such manifest: {path}")
    items: list[DatasetItem] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{lineno}: bad JSON: {e}") from e
        for key in ("id", "text", "ground_truth", "task_kind"):
            if key not in doc:
                raise FormatError(f"{path}:{lineno}: missing key {key!r}")
        item_id = str(doc["id"])
        if item_id in seen:
            raise FormatError(f"{path}:{lineno}: duplicate id {item_id!r}")
        seen.add(item_id)
        attachments = {}
        for att in doc.get("attachments", []):
            if "modality" not in att or "path" not in att:
                raise FormatError(
                    f"{path}:{lineno}: attachments need modality and path"
                )
            try:
                modality = Modality(att["modality"])
            except ValueError as e:
                raise FormatError(
                    f"{path}:{lineno}: unknown modality {att['modality']!r}"
                ) from e
            if modality in attachments:
                raise FormatError(
                    f"{path}:{lineno}: duplicate {modality.value} attachment"
                )
            attachments[modality] = load_content(path.parent / att["path"], modality)
        try:
            items.append(
                DatasetItem(
                    id=item_id,
                    prompt=PromptBundle(
                        text=TextContent(str(doc["text"])), attachments=attachments
                    ),
                    ground_truth=str(doc["ground_truth"]),
                    task_kind=str(doc["task_kind"]),
                )
            )
        except InvariantViolation as e:
            raise FormatError(f"{path}:{lineno}: {e}") from e
    return items


def _answer_text(response: ModelResponse, clients: RoleClients, item: DatasetItem) -> str:
    """Reduce a model response to gradeable text.

    Comprehension answers are the text output. Generation answers are the
    caption of the produced artifact; a text-only reply falls back to the
    text itself.
    """
    if item.task_kind == "generation":
        non_text = [m for m in response.modalities() if m is not Modality.TEXT]
        if non_text:
            if clients.captioner is None:
                raise InvariantViolation(
                    f"item {item.id}: grading a generated artifact requires "
                    "a captioner backend"
                )
            _, artifact = response.primary_artifact()
            return clients.captioner.caption(artifact).text
    text = response.text
    if text is None:
        raise InvariantViolation(f"item {item.id}: response contains no text answer")
    return text.text


def _grade(item: DatasetItem, answer: str, clients: RoleClients, grader: str) -> bool:
    if grader == "exact":
        return normalize_answer(answer) == normalize_answer(item.ground_truth)
    if grader == "backend":
        if clients.grader is None:
            raise InvariantViolation("grader='backend' requires a grader backend")
        return clients.grader.judge(item.prompt.text.text, answer, item.ground_truth)
    raise InvariantViolation(f"unknown grader {grader!r}")


def estimate_item(
    bundle: PromptBundle,
    clients: RoleClients,
    plan: PerturbationPlan,
    question: str,
    clustering: str = "semantic",
):
    """Perturb, sample, and estimate uncertainty for one prompt."""
    samples = build_samples(bundle, plan, rephraser=clients.responder)
    responses = [
        clients.responder.respond(s.bundle, sample_index=s.sample_index)
        for s in samples
    ]
    return estimate(responses, clients, question=question, clustering=clustering)


def detect(
    items: Sequence[DatasetItem],
    roles: BackendRoleSet | RoleClients,
    plan: PerturbationPlan,
    *,
    clustering: str = "semantic",
    grader: str = "exact",
    parallelism: int = 1,
) -> list[DetectionRecord]:
    """Run hallucination detection over a dataset.

    Per item: the initial answer is drawn at temperature 0.1, graded
    against the ground truth to set the hallucination label, and scored
    with perturbation-based uncertainty. A failing item yields a record
    with ``status="failed"`` instead of aborting the batch. Output order
    matches input order regardless of ``parallelism``.
    """
    if parallelism < 1:
        raise InvariantViolation(f"parallelism must be at least 1, got {parallelism}")
    if grader not in ("exact", "backend"):
        raise InvariantViolation(f"unknown grader {grader!r}")
    clients = resolve_roles(roles)

    def run_item(item: DatasetItem) -> DetectionRecord:
        try:
            initial = clients.responder.respond(
                item.prompt, temperature=DEFAULT_INITIAL_TEMPERATURE
            )
            answer = _answer_text(initial, clients, item)
            correct = _grade(item, answer, clients, grader)
            est = estimate_item(
                item.prompt, clients, plan, item.prompt.text.text, clustering
            )
            return DetectionRecord(
                id=item.id,
                uncertainty=est.merged,
                hallucination=not correct,
                initial_answer=answer,
                per_modality={m.value: u for m, u in est.per_modality.items()},
                status="ok",
            )
        except ToolkitError as e:
            return DetectionRecord(
                id=item.id,
                uncertainty=None,
                hallucination=None,
                status="failed",
                error=f"{type(e).__name__}: {e}",
            )

    if parallelism == 1:
        return [run_item(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(run_item, items))


@dataclass(frozen=True)
class MitigationOutcome:
    """Result of the revise-if-uncertain pass for one item."""

    id: str
    initial_answer: str
    uncertainty: float | None
    selected: bool
    final_answer: str
    status: str = "ok"
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "initial_answer": self.initial_answer,
            "uncertainty": self.uncertainty,
            "selected": self.selected,
            "final_answer": self.final_answer,
            "status": self.status,
            "error": self.error,
        }


def revision_prompt(prompt_text: str, initial_answer: str, uncertainty: float) -> str:
    """The verbatim revision request shown to the model."""
    return REVISION_TEMPLATE.format(
        prompt=prompt_text,
        answer=initial_answer,
        uncertainty=UNCERTAINTY_FORMAT.format(uncertainty),
    )


def mitigate(
    items: Sequence[DatasetItem],
    records: Sequence[DetectionRecord],
    roles: BackendRoleSet | RoleClients,
    *,
    top_fraction: float = 0.5,
) -> list[MitigationOutcome]:
    """Ask the model to revise the most uncertain answers.

    The ``ceil(top_fraction * n)`` highest-uncertainty items (ties by id
    ascending, ``n`` counting scorable records) are re-prompted with the
    revision template; everything else keeps its initial answer. Failed
    records pass through unrevised.
    """
    if not 0.0 <= top_fraction <= 1.0:
        raise InvariantViolation(
            f"top_fraction must lie in [0, 1], got {top_fraction}"
        )
    clients = resolve_roles(roles)
    by_id = {item.id: item for item in items}
    for record in records:
        if record.id not in by_id:
            raise InvariantViolation(f"record {record.id!r} has no dataset item")
    ok_rows = [r for r in records if r.status == "ok"]
    budget = math.ceil(top_fraction * len(ok_rows))
    ranked = sorted(ok_rows, key=lambda r: (-r.uncertainty, r.id))
    chosen = {r.id for r in ranked[:budget]}
    outcomes = []
    for record in records:
        if record.status != "ok":
            outcomes.append(
                MitigationOutcome(
                    id=record.id,
                    initial_answer=record.initial_answer,
                    uncertainty=record.uncertainty,
                    selected=False,
                    final_answer=record.initial_answer,
                    status="failed",
                    error=record.error,
                )
            )
            continue
        selected = record.id in chosen
        final = record.initial_answer
        status, error = "ok", None
        if selected:
            item = by_id[record.id]
            prompt = item.prompt.with_text(
                revision_prompt(
                    item.prompt.text.text, record.initial_answer, record.uncertainty
                )
            )
            try:
                reply = clients.responder.respond(prompt)
                text = reply.text
                if text is None:
                    raise InvariantViolation("revision reply contains no text")
                final = text.text
            except ToolkitError as e:
                status, error = "failed", f"{type(e).__name__}: {e}"
        outcomes.append(
            MitigationOutcome(
                id=record.id,
                initial_answer=record.initial_answer,
                uncertainty=record.uncertainty,
                selected=selected,
                final_answer=final,
                status=status,
                error=error,
            )
        )
    return outcomes


@dataclass(frozen=True)
class CoTStep:
    """One reasoning step: the model's answer and its uncertainty."""

    index: int
    answer: str
    uncertainty: float


@dataclass(frozen=True)
class CoTResult:
    """Trace of an uncertainty-aware reasoning run."""

    id: str
    steps: tuple[CoTStep, ...]
    final_answer: str
    finished: bool
    status: str  # "finished" or "max_steps"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "steps": [
                {"index": s.index, "answer": s.answer, "uncertainty": s.uncertainty}
                for s in self.steps
            ],
            "final_answer": self.final_answer,
            "finished": self.finished,
            "status": self.status,
        }


def cot_prompt(question: str, steps: Sequence[CoTStep]) -> str:
    """Prompt for the next reasoning step given the trace so far.

    The first round carries only the step-by-step instruction. Later
    rounds append every previous answer with its uncertainty score and
    end with the finish instruction.
    """
    lines = [question, COT_FIRST_STEP]
    if steps:
        for s in steps:
            lines.append(
                COT_STEP_LINE.format(
                    index=s.index,
                    answer=s.answer,
                    uncertainty=UNCERTAINTY_FORMAT.format(s.uncertainty),
                )
            )
        lines.append(COT_FINISH_INSTRUCTION)
    return "\n".join(lines)


def cot(
    item: DatasetItem,
    roles: BackendRoleSet | RoleClients,
    plan: PerturbationPlan,
    *,
    max_steps: int = 5,
    clustering: str = "semantic",
) -> CoTResult:
    """Run stepwise reasoning with per-step uncertainty feedback.

    Each round prompts for the next step, estimates that step's
    uncertainty through the full perturb-sample-cluster pipeline, and
    appends the (answer, uncertainty) pair to the context. The loop exits
    when an answer contains the finish token or after ``max_steps``
    rounds; the context grows by exactly one pair per round either way.
    """
    if max_steps < 1:
        raise InvariantViolation(f"max_steps must be at least 1, got {max_steps}")
    clients = resolve_roles(roles)
    question = item.prompt.text.text
    steps: list[CoTStep] = []
    finished = False
    for index in range(1, max_steps + 1):
        bundle = item.prompt.with_text(cot_prompt(question, steps))
        reply = clients.responder.respond(bundle)
        text = reply.text
        if text is None:
            raise InvariantViolation(f"item {item.id}: reasoning reply has no text")
        answer = text.text
        est = estimate_item(bundle, clients, plan, question, clustering)
        steps.append(CoTStep(index=index, answer=answer, uncertainty=est.merged))
        if FINISH_TOKEN in answer:
            finished = True
            break
    return CoTResult(
        id=item.id,
        steps=tuple(steps),
        final_answer=steps[-1].answer,
        finished=finished,
        status="finished" if finished else "max_steps",
    )
