"""Release acceptance gate.

One test per release criterion. Each criterion re-derives its expected
values through an independent oracle (arbitrary-precision arithmetic,
brute-force pairwise counting, closed-form statistics, or hand-traced
fixtures), checks the library against it at the contractual tolerance,
and enforces its runtime budget. Every test prints one ``PASS criterion
N`` line; a failure here blocks release.

Run with ``pytest -v tests/test_acceptance.py`` (add ``-s`` to see the
PASS lines on success).
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from pathlib import Path

import mpmath
import numpy as np
import pytest

from helpers import mock_roles, uncertainties_in_prompt, scripted_clients
from mmuq.backends import ModelResponse
from mmuq.cli import main as cli_main
from mmuq.config import load_config
from mmuq.media import (
    AudioContent,
    ImageContent,
    Modality,
    PointCloudContent,
    PromptBundle,
    TextContent,
    VideoContent,
    decode_pcm16,
    load_content,
    save_content,
)
from mmuq.metrics import DetectionRecord, aurac, auroc, ece, reliability_bins
from mmuq.perturb import (
    RULE_BASED_KINDS,
    AudioKind,
    ImageKind,
    PairingOrder,
    PerturbationPlan,
    PointCloudKind,
    TextKind,
    VideoKind,
    build_samples,
    perturb_content,
)
from mmuq.proplab import SyntheticModel, fit_proportionality, simulate_distance
from mmuq.tasks import FINISH_TOKEN, cot, detect, load_manifest, mitigate
from mmuq.uncertainty import ClusterDistribution, SemanticCluster, entropy, estimate

FIXTURES = Path(__file__).parent / "fixtures" / "detect"

mpmath.mp.dps = 50


def report(criterion: int, label: str, started: float, budget: float) -> None:
    elapsed = time.perf_counter() - started
    print(f"PASS criterion {criterion}: {label} ({elapsed:.2f}s, budget {budget:.0f}s)")
    assert elapsed < budget, f"criterion {criterion} overran its {budget}s budget"


# ---------------------------------------------------------------------------
# Criterion 1: normalized entropy against a 50-digit oracle.

@lru_cache(maxsize=None)
def _ln(n: int):
    return mpmath.log(n)


def entropy_oracle(counts) -> float:
    """-(1/ln C) sum (c/C) ln(c/C) evaluated at 50 decimal digits."""
    total = sum(counts)
    if total <= 1:
        return 0.0
    h = mpmath.mpf(0)
    for c in counts:
        h += mpmath.mpf(c) / total * (_ln(total) - _ln(c))
    return float(h / _ln(total))


def make_distribution(counts) -> ClusterDistribution:
    clusters = []
    start = 0
    for c in counts:
        clusters.append(
            SemanticCluster(
                representative=TextContent(f"rep{start}"),
                members=tuple(range(start, start + c)),
            )
        )
        start += c
    return ClusterDistribution(clusters=tuple(clusters), total=start)


def random_counts(rng: np.random.Generator, max_total: int = 50) -> tuple[int, ...]:
    total = int(rng.integers(1, max_total + 1))
    if total == 1:
        return (1,)
    k = int(rng.integers(1, total + 1))
    if k == 1:
        return (total,)
    cuts = np.sort(rng.choice(np.arange(1, total), size=k - 1, replace=False))
    edges = np.concatenate(([0], cuts, [total]))
    return tuple(int(d) for d in np.diff(edges))


def test_criterion_1_entropy_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    for _ in range(1000):
        counts = random_counts(rng)
        got = entropy(make_distribution(counts))
        assert got == pytest.approx(entropy_oracle(counts), abs=1e-9), counts

    # Hand cases, frozen from the 50-digit evaluation above.
    hand = [
        ((5,), 0.0),
        ((1, 1, 1, 1, 1), 1.0),
        ((3, 2), 0.4181656600790517),
        ((2, 2, 1), 0.6554587535412857),
    ]
    for counts, expected in hand:
        assert entropy(make_distribution(counts)) == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(entropy_oracle(counts), abs=1e-12)

    report(1, "entropy matches high-precision oracle", started, 1.0)


# ---------------------------------------------------------------------------
# Criterion 2: detection metrics against brute-force oracles.

def auroc_pairwise_oracle(scores: np.ndarray, labels: np.ndarray) -> float:
    """O(n^2) pairwise win counting, ties worth half."""
    pos = scores[labels]
    neg = scores[~labels]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (
        pos[:, None] == neg[None, :]
    ).sum()
    return float(wins) / (len(pos) * len(neg))


def aurac_enumerate_oracle(trips) -> float:
    """Enumerate every rejection count with integer suffix bookkeeping."""
    order = sorted(trips, key=lambda t: (-t[1], t[0]))
    n = len(order)
    suffix = [0] * (n + 1)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] + (0 if order[k][2] else 1)
    accs = np.array([suffix[k] / (n - k) for k in range(n)])
    return float(accs.mean())


def aurac_slice_oracle(trips) -> float:
    """Quadratic re-count from scratch at every rejection level."""
    order = sorted(trips, key=lambda t: (-t[1], t[0]))
    n = len(order)
    accs = np.array(
        [sum(1 for t in order[k:] if not t[2]) / (n - k) for k in range(n)]
    )
    return float(accs.mean())


def ece_direct_oracle(scores, labels, bin_count: int) -> float:
    """Straight transcription of the binning definition, no vector tricks."""
    edges = [k / bin_count for k in range(bin_count + 1)]
    conf = [1.0 - s for s in scores]
    total = len(scores)
    gap = 0.0
    for b in range(bin_count):
        members = [
            i
            for i, c in enumerate(conf)
            if (edges[b] <= c < edges[b + 1])
            or (b == bin_count - 1 and c == edges[b + 1])
        ]
        if not members:
            continue
        mean_conf = float(np.array([conf[i] for i in members]).mean())
        accuracy = float(np.array([0.0 if labels[i] else 1.0 for i in members]).mean())
        gap += (len(members) / total) * abs(accuracy - mean_conf)
    return gap


def random_record_set(rng: np.random.Generator):
    n = int(rng.integers(2, 201))
    scores = rng.integers(0, 41, size=n) / 40.0
    labels = rng.integers(0, 2, size=n).astype(bool)
    if labels.all() or not labels.any():
        labels[0] = not labels[0]
    records = [
        DetectionRecord(
            id=f"r{i:04d}", uncertainty=float(scores[i]), hallucination=bool(labels[i])
        )
        for i in range(n)
    ]
    return scores, labels, records


def test_criterion_2_metric_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(202)
    for round_index in range(500):
        scores, labels, records = random_record_set(rng)
        n = len(records)

        got_auroc = auroc(records)
        assert abs(got_auroc - auroc_pairwise_oracle(scores, labels)) <= 1e-12

        trips = [(r.id, r.uncertainty, r.hallucination) for r in records]
        got_aurac = aurac(records)
        assert got_aurac == aurac_enumerate_oracle(trips)
        if n <= 60:
            assert got_aurac == aurac_slice_oracle(trips)

        bin_count = int(rng.choice([1, 5, 10, 17]))
        got_ece = ece(records, bin_count=bin_count)
        assert abs(got_ece - ece_direct_oracle(scores, labels, bin_count)) <= 1e-12

    # Monotone transforms cannot change the ranking, hence the AUROC.
    for _ in range(100):
        scores, labels, records = random_record_set(rng)
        base = auroc(records)
        exponent = float(rng.uniform(0.25, 4.0))
        transformed = [
            DetectionRecord(
                id=r.id,
                uncertainty=float(r.uncertainty**exponent),
                hallucination=r.hallucination,
            )
            for r in records
        ]
        assert auroc(transformed) == base

    report(2, "metrics match pairwise and direct oracles", started, 10.0)


# ---------------------------------------------------------------------------
# Criterion 3: distance scales as sqrt of the parameter variance.

def test_criterion_3_proportionality_law():
    started = time.perf_counter()
    model = SyntheticModel(
        sensitivity=(0.8, -1.2, 0.5, 2.0), mean=(0.0, 0.0, 0.0, 0.0), variance=1.0
    )
    fit = fit_proportionality(
        model, (0.01, 0.1, 1.0, 10.0), trials=100_000, seed=303
    )
    assert fit.slope == pytest.approx(1.0, abs=0.05)
    assert fit.intercept == pytest.approx(fit.expected_intercept, rel=0.03)
    assert fit.expected_intercept == pytest.approx(
        math.log(math.sqrt(2.0) * float(np.linalg.norm(model.sensitivity))), abs=1e-12
    )

    frozen = simulate_distance(model.with_variance(0.0), trials=10_000, seed=303)
    assert frozen.rms == 0.0

    report(3, "log-log slope 1 and exact zero at sigma 0", started, 30.0)


# ---------------------------------------------------------------------------
# Criterion 4: perturbation operator invariants, 100 contents per kind.

def content_for_kind(kind, rng: np.random.Generator):
    if isinstance(kind, TextKind):
        n = int(rng.integers(1, 25))
        words = [f"w{int(i)}" for i in rng.integers(0, 40, n)]
        return TextContent(" ".join(words))
    if isinstance(kind, ImageKind):
        h, w = (int(x) for x in rng.integers(1, 21, 2))
        return ImageContent.from_array(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    if isinstance(kind, AudioKind):
        n = int(rng.integers(1, 1200))
        return AudioContent.from_array(8000, rng.uniform(-1.0, 1.0, n))
    if isinstance(kind, VideoKind):
        f = int(rng.integers(2, 6))
        h, w = (int(x) for x in rng.integers(2, 11, 2))
        frames = tuple(
            ImageContent.from_array(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
            for _ in range(f)
        )
        return VideoContent(fps=12.0, frames=frames)
    if isinstance(kind, PointCloudKind):
        p = int(rng.integers(2, 61))
        colors = rng.integers(0, 256, (p, 3)) if rng.integers(0, 2) else None
        return PointCloudContent.from_arrays(rng.normal(0.0, 3.0, (p, 3)), colors)
    raise AssertionError(kind)


def pairwise_distances(points) -> np.ndarray:
    arr = np.asarray(points)
    return np.linalg.norm(arr[:, None, :] - arr[None, :, :], axis=-1)


def is_subsequence(candidate, original) -> bool:
    it = iter(original)
    return all(any(x == y for y in it) for x in candidate)


def check_invariants(kind, content, out) -> None:
    if isinstance(kind, TextKind):
        assert sorted(out.text.split()) == sorted(content.text.split())
    elif isinstance(kind, ImageKind):
        assert (out.width, out.height) == (content.width, content.height)
        arr = out.to_array()
        assert arr.dtype == np.uint8
    elif isinstance(kind, AudioKind):
        samples = out.to_array()
        assert np.all(samples >= -1.0) and np.all(samples <= 1.0)
        if kind is AudioKind.PITCH_SHIFT:
            assert len(samples) >= 1
        else:
            assert len(samples) == len(content.samples)
    elif isinstance(kind, VideoKind):
        assert len(out.frames) >= 1
        if kind is VideoKind.FRAME_DROP:
            assert is_subsequence(out.frames, content.frames)
        if kind is VideoKind.TEMPORAL_CROP:
            assert is_subsequence(out.frames, content.frames)
        for frame in out.frames:
            assert frame.to_array().dtype == np.uint8
    elif isinstance(kind, PointCloudKind):
        if kind is PointCloudKind.SUBSAMPLE:
            assert is_subsequence(out.points, content.points)
        else:
            assert len(out.points) == len(content.points)
        if kind is PointCloudKind.ROTATE3D:
            got = pairwise_distances(out.points)
            want = pairwise_distances(content.points)
            assert np.max(np.abs(got - want)) <= 1e-9
        if content.colors is not None:
            assert out.colors is not None
    else:
        raise AssertionError(kind)


def test_criterion_4_perturbation_invariants():
    started = time.perf_counter()
    assert len(RULE_BASED_KINDS) == 18
    for kind_index, (_, kind) in enumerate(RULE_BASED_KINDS):
        rng = np.random.default_rng([404, kind_index])
        cases = []
        for case_index in range(100):
            content = content_for_kind(kind, rng)
            degree = float(rng.uniform(0.01, 1.0))
            cases.append((content, degree, case_index))

        def apply(case):
            content, degree, case_index = case
            op_rng = np.random.default_rng([404, kind_index, case_index])
            return perturb_content(content, kind, degree, op_rng)

        serial = [apply(case) for case in cases]
        for (content, degree, _), out in zip(cases, serial):
            check_invariants(kind, content, out)
            identity_rng = np.random.default_rng([404, kind_index, 0])
            assert perturb_content(content, kind, 0.0, identity_rng) == content

        with ThreadPoolExecutor(max_workers=8) as pool:
            parallel = list(pool.map(apply, cases))
        assert parallel == serial

    report(4, "operator invariants and 8-way reproducibility", started, 60.0)


# ---------------------------------------------------------------------------
# Criterion 5: deterministic end-to-end detection on the bundled fixture.

def test_criterion_5_end_to_end_determinism(tmp_path):
    started = time.perf_counter()
    args = [
        "detect", "--config", str(FIXTURES / "config.json"),
        "--manifest", str(FIXTURES / "manifest.jsonl"),
    ]
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert cli_main(args + ["--out", str(first)]) == 0
    assert cli_main(args + ["--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()

    rows = [json.loads(line) for line in first.read_text().splitlines()[1:]]
    # Scripted response patterns: six unanimous items, four split 3/2.
    expected = {f"q{k:02d}": entropy_oracle((5,)) for k in range(1, 7)}
    expected.update({f"q{k:02d}": entropy_oracle((3, 2)) for k in range(7, 11)})
    for row in rows:
        assert row["uncertainty"] == pytest.approx(expected[row["id"]], abs=1e-9)

    records = [DetectionRecord.from_dict(row) for row in rows]
    assert auroc(records) == 1.0

    report(5, "byte-identical detect runs with oracle u values", started, 5.0)


# ---------------------------------------------------------------------------
# Criterion 6: ablation directions for pairing order and clustering.

def pairing_fixture_auroc(order: PairingOrder) -> float:
    """AUROC of a synthetic model that only answers consistently when the
    degrees of one sample line up across modalities."""
    plan = PerturbationPlan(
        sample_count=5,
        kinds={Modality.TEXT: TextKind.WORD_SWAP, Modality.IMAGE: ImageKind.ROTATE},
        pairing_order=order,
        seed=13,
    )
    roles = mock_roles()
    records = []
    rng = np.random.default_rng(606)
    for item_index in range(12):
        certain = item_index < 6
        image = ImageContent.from_array(
            rng.integers(0, 256, (6, 6, 3), dtype=np.uint8)
        )
        bundle = PromptBundle(
            text=TextContent(f"synthetic question number {item_index}"),
            attachments={Modality.IMAGE: image},
        )
        responses = []
        for sample in build_samples(bundle, plan):
            d_text = sample.degree_of(Modality.TEXT)
            d_image = sample.degree_of(Modality.IMAGE)
            if abs(d_text - d_image) < 1e-12:
                answer = "steady" if certain else ("low" if d_text < 0.5 else "high")
            else:
                answer = f"noise {item_index} {sample.sample_index}"
            responses.append(
                ModelResponse(outputs={Modality.TEXT: TextContent(answer)})
            )
        est = estimate(responses, roles, question=bundle.text.text)
        records.append(
            DetectionRecord(
                id=f"i{item_index:02d}",
                uncertainty=est.merged,
                hallucination=not certain,
            )
        )
    return auroc(records)


def test_criterion_6_ablation_directions():
    started = time.perf_counter()
    progressive = pairing_fixture_auroc(PairingOrder.PROGRESSIVE)
    random_order = pairing_fixture_auroc(PairingOrder.RANDOM)
    shifted = pairing_fixture_auroc(PairingOrder.SHIFTED)
    assert progressive == 1.0
    assert progressive >= random_order
    assert progressive >= shifted

    responses = [
        ModelResponse(outputs={Modality.TEXT: TextContent(t)})
        for t in ("yes", "Yes.", "yes")
    ]
    semantic = estimate(responses, mock_roles(), clustering="semantic").merged
    lexical = estimate(responses, mock_roles(), clustering="lexical").merged
    assert semantic == 0.0
    assert lexical == pytest.approx(entropy_oracle((2, 1)), abs=1e-12)
    assert semantic < lexical

    report(6, "pairing and clustering ablations point the right way", started, 30.0)


# ---------------------------------------------------------------------------
# Criterion 7: mitigation budget and reasoning-loop contracts.

def test_criterion_7_mitigation_and_reasoning(tmp_path):
    started = time.perf_counter()
    cfg = load_config(FIXTURES / "config.json")
    items = load_manifest(FIXTURES / "manifest.jsonl")
    records = detect(
        items, cfg.roles, cfg.plan, clustering=cfg.clustering, grader=cfg.grader
    )
    outcomes = mitigate(items, records, cfg.roles, top_fraction=cfg.top_fraction)

    selected = [o for o in outcomes if o.selected]
    assert len(selected) == math.ceil(cfg.top_fraction * len(records))
    truths = {i.id: i.ground_truth for i in items}
    initial_accuracy = sum(r.initial_answer == truths[r.id] for r in records) / 10
    final_accuracy = sum(o.final_answer == truths[o.id] for o in outcomes) / 10
    assert initial_accuracy == 0.6
    assert final_accuracy == 1.0

    # Reasoning loop: per-index draws disagree, so every step scores 1.0;
    # seeing any score above 0.5 in the context makes the model finish.
    # Hand trace: step 1 explores, step 2 finishes.
    def fn(bundle, sample_index, temperature):
        if sample_index is not None:
            return f"draw-{sample_index}"
        seen = uncertainties_in_prompt(bundle.text.text)
        return FINISH_TOKEN if any(u > 0.5 for u in seen) else "thinking"

    clients, responder = scripted_clients(fn)
    plan = PerturbationPlan(
        sample_count=5, kinds={Modality.TEXT: TextKind.WORD_SWAP}, seed=7
    )
    from mmuq.tasks import DatasetItem

    item = DatasetItem(
        id="trace",
        prompt=PromptBundle(text=TextContent("a genuinely hard question")),
        ground_truth="unknown",
    )
    result = cot(item, clients, plan, max_steps=5)
    assert result.status == "finished"
    assert len(result.steps) == 2
    assert result.steps[0].uncertainty == pytest.approx(1.0, abs=1e-12)

    draws = [c[0] for c in responder.calls if c[1] is None]
    for round_index, prompt in enumerate(draws):
        assert len(uncertainties_in_prompt(prompt)) == round_index

    capped = cot(item, scripted_clients(
        lambda b, s, t: f"draw-{s}" if s is not None else "never done"
    )[0], plan, max_steps=3)
    assert capped.status == "max_steps"
    assert len(capped.steps) == 3

    report(7, "mitigation budget and reasoning trace match hand counts", started, 30.0)


# ---------------------------------------------------------------------------
# Criterion 8: content round trips, 1000 per modality.

def test_criterion_8_round_trip_io(tmp_path):
    started = time.perf_counter()
    rng = np.random.default_rng(808)

    text_path = tmp_path / "t.txt"
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        text = TextContent(" ".join(f"tok{int(i)}" for i in rng.integers(0, 99, n)))
        save_content(text, text_path)
        assert load_content(text_path, Modality.TEXT) == text

    ppm_a, ppm_b = tmp_path / "i.ppm", tmp_path / "i2.ppm"
    png_path = tmp_path / "i.png"
    for _ in range(1000):
        h, w = (int(x) for x in rng.integers(1, 13, 2))
        image = ImageContent.from_array(
            rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        )
        save_content(image, ppm_a)
        loaded = load_content(ppm_a, Modality.IMAGE)
        assert loaded == image
        save_content(loaded, ppm_b)
        assert ppm_a.read_bytes() == ppm_b.read_bytes()
        save_content(image, png_path)
        assert load_content(png_path, Modality.IMAGE) == image

    wav_a, wav_b = tmp_path / "a.wav", tmp_path / "a2.wav"
    for _ in range(1000):
        n = int(rng.integers(1, 400))
        # Start on the PCM-16 grid so quantization is the identity.
        samples = decode_pcm16(
            rng.integers(-32768, 32768, n, dtype=np.int16).astype("<i2").tobytes()
        )
        audio = AudioContent(sample_rate=8000, samples=samples)
        save_content(audio, wav_a)
        loaded = load_content(wav_a, Modality.AUDIO)
        assert loaded == audio
        save_content(loaded, wav_b)
        assert wav_a.read_bytes() == wav_b.read_bytes()

    xyz_a, xyz_b = tmp_path / "p.xyz", tmp_path / "p2.xyz"
    for _ in range(1000):
        p = int(rng.integers(1, 40))
        colors = rng.integers(0, 256, (p, 3)) if rng.integers(0, 2) else None
        cloud = PointCloudContent.from_arrays(rng.normal(0.0, 100.0, (p, 3)), colors)
        save_content(cloud, xyz_a)
        loaded = load_content(xyz_a, Modality.POINT_CLOUD)
        assert loaded == cloud
        save_content(loaded, xyz_b)
        assert xyz_a.read_bytes() == xyz_b.read_bytes()

    video_path = tmp_path / "v.json"
    for _ in range(1000):
        f = int(rng.integers(1, 4))
        h, w = (int(x) for x in rng.integers(1, 7, 2))
        frames = tuple(
            ImageContent.from_array(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
            for _ in range(f)
        )
        video = VideoContent(fps=float(rng.integers(1, 61)), frames=frames)
        save_content(video, video_path)
        assert load_content(video_path, Modality.VIDEO) == video

    report(8, "1000 per-modality round trips are exact", started, 30.0)
