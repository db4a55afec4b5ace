"""Discrimination and calibration metrics over detection records."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmuq.errors import DegenerateLabelsError, InvariantViolation
from mmuq.metrics import (
    DetectionRecord,
    MetricReport,
    aurac,
    auroc,
    compute_report,
    ece,
    records_from_jsonl,
    records_to_jsonl,
    reliability_bins,
)


def rec(id, u, halluc, **kw) -> DetectionRecord:
    return DetectionRecord(id=id, uncertainty=u, hallucination=halluc, **kw)


def records_from(pairs) -> list[DetectionRecord]:
    return [rec(f"r{i:03d}", u, h) for i, (u, h) in enumerate(pairs)]


def pairwise_auroc(pairs) -> float:
    """Independent AUROC oracle: count pairwise wins, ties half, exactly.

    Uncertainties are turned into Fractions so the comparison arithmetic is
    exact; the float division at the end matches the rank-sum route bit for
    bit because both compute the same rational with the same denominator.
    """
    pos = [Fraction(u).limit_denominator(10**12) for u, h in pairs if h]
    neg = [Fraction(u).limit_denominator(10**12) for u, h in pairs if not h]
    wins = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                wins += Fraction(1, 2)
    return float(wins) / (len(pos) * len(neg))


def slice_aurac(pairs_with_ids) -> float:
    """Independent AURAC oracle: re-sort and re-count for every k."""
    rows = sorted(pairs_with_ids, key=lambda t: (-t[1], t[0]))
    n = len(rows)
    total = 0.0
    for k in range(n):
        kept = rows[k:]
        total += sum(1 for _, _, h in kept if not h) / len(kept)
    return total / n


class TestRecordValidation:
    def test_ok_record_needs_score_and_label(self):
        with pytest.raises(InvariantViolation, match="need"):
            DetectionRecord(id="a", uncertainty=None, hallucination=False)
        with pytest.raises(InvariantViolation, match="need"):
            DetectionRecord(id="a", uncertainty=0.5, hallucination=None)

    def test_failed_record_may_omit_both(self):
        r = DetectionRecord(
            id="a", uncertainty=None, hallucination=None, status="failed", error="boom"
        )
        assert r.status == "failed"

    def test_score_bounds(self):
        with pytest.raises(InvariantViolation, match="outside"):
            rec("a", 1.5, True)
        with pytest.raises(InvariantViolation, match="outside"):
            rec("a", -0.1, False)

    def test_empty_id_rejected(self):
        with pytest.raises(InvariantViolation):
            rec("", 0.5, True)

    def test_unknown_status_rejected(self):
        with pytest.raises(InvariantViolation):
            DetectionRecord(id="a", uncertainty=0.5, hallucination=True, status="maybe")

    def test_duplicate_ids_rejected_by_metrics(self):
        rows = [rec("same", 0.1, False), rec("same", 0.9, True)]
        with pytest.raises(InvariantViolation, match="duplicate"):
            auroc(rows)

    def test_no_scorable_records(self):
        failed = DetectionRecord(
            id="a", uncertainty=None, hallucination=None, status="failed"
        )
        with pytest.raises(InvariantViolation, match="scorable"):
            auroc([failed])


class TestAuroc:
    def test_perfect_separation(self):
        rows = records_from([(0.9, True), (0.8, True), (0.2, False), (0.1, False)])
        assert auroc(rows) == 1.0

    def test_reversed_separation(self):
        rows = records_from([(0.1, True), (0.2, True), (0.8, False), (0.9, False)])
        assert auroc(rows) == 0.0

    def test_all_tied_is_half(self):
        rows = records_from([(0.5, True), (0.5, False), (0.5, True), (0.5, False)])
        assert auroc(rows) == 0.5

    def test_hand_case_with_tie(self):
        # Positives {0.9, 0.5}, negatives {0.5, 0.1}: wins 1+1+0.5+1 of 4.
        rows = records_from([(0.9, True), (0.5, True), (0.5, False), (0.1, False)])
        assert auroc(rows) == 0.875

    def test_single_label_rejected(self):
        with pytest.raises(DegenerateLabelsError):
            auroc(records_from([(0.2, True), (0.9, True)]))
        with pytest.raises(DegenerateLabelsError):
            auroc(records_from([(0.2, False), (0.9, False)]))

    def test_matches_pairwise_oracle_exactly(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            scores = rng.integers(0, 10, size=n) / 10.0
            labels = rng.integers(0, 2, size=n).astype(bool)
            if labels.all() or not labels.any():
                labels[0] = not labels[0]
            pairs = list(zip(scores.tolist(), labels.tolist()))
            assert auroc(records_from(pairs)) == pairwise_auroc(pairs)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(22)
        pairs = [(0.9, True), (0.3, False), (0.7, True), (0.2, False), (0.5, False)]
        rows = records_from(pairs)
        base = auroc(rows)
        for _ in range(5):
            perm = list(rows)
            rng.shuffle(perm)
            assert auroc(perm) == base

    def test_monotone_transform_invariance(self):
        pairs = [(0.9, True), (0.3, False), (0.7, True), (0.2, False)]
        squashed = [(u**2, h) for u, h in pairs]
        assert auroc(records_from(pairs)) == auroc(records_from(squashed))

    @given(
        st.lists(
            st.tuples(st.integers(0, 20), st.booleans()), min_size=2, max_size=25
        ).filter(lambda ps: any(h for _, h in ps) and any(not h for _, h in ps))
    )
    def test_complement_symmetry(self, int_pairs):
        pairs = [(u / 20.0, h) for u, h in int_pairs]
        flipped = [(1.0 - u, not h) for u, h in pairs]
        assert auroc(records_from(pairs)) == pytest.approx(
            auroc(records_from(flipped)), abs=1e-12
        )


class TestAurac:
    def test_hand_case(self):
        # Rejection order: 0.9 (wrong), 0.5 (right), 0.1 (right).
        # Accuracies: 2/3, 1, 1. Mean = 8/9.
        rows = records_from([(0.9, True), (0.5, False), (0.1, False)])
        assert aurac(rows) == pytest.approx(8.0 / 9.0, abs=1e-12)

    def test_perfect_ordering_beats_reversed(self):
        good = records_from([(0.9, True), (0.8, True), (0.2, False), (0.1, False)])
        bad = records_from([(0.1, True), (0.2, True), (0.8, False), (0.9, False)])
        assert aurac(good) > aurac(bad)

    def test_all_correct_scores_one(self):
        rows = records_from([(0.3, False), (0.6, False), (0.9, False)])
        assert aurac(rows) == 1.0

    def test_ties_break_by_id_ascending(self):
        # Equal uncertainty: "a" must be rejected before "b".
        rows = [rec("b", 0.5, False), rec("a", 0.5, True)]
        # k=0: acc 1/2. k=1: a rejected first, b retained, acc 1.
        assert aurac(rows) == pytest.approx(0.75, abs=1e-12)
        flipped = [rec("b", 0.5, True), rec("a", 0.5, False)]
        # Now the rejected-first item is the correct one: k=1 leaves acc 0.
        assert aurac(flipped) == pytest.approx(0.25, abs=1e-12)

    def test_matches_slice_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            n = int(rng.integers(1, 30))
            trips = [
                (f"id{i:03d}", float(rng.integers(0, 5)) / 4.0, bool(rng.integers(0, 2)))
                for i in range(n)
            ]
            rows = [rec(i, u, h) for i, u, h in trips]
            assert aurac(rows) == pytest.approx(slice_aurac(trips), abs=1e-12)

    @given(
        st.lists(
            st.tuples(st.integers(0, 10), st.booleans()), min_size=1, max_size=20
        )
    )
    def test_bounded(self, int_pairs):
        pairs = [(u / 10.0, h) for u, h in int_pairs]
        assert 0.0 <= aurac(records_from(pairs)) <= 1.0


class TestReliabilityAndEce:
    def test_bin_structure(self):
        rows = records_from([(0.05, False), (0.45, True), (0.8, True)])
        bins = reliability_bins(rows, bin_count=10)
        assert len(bins) == 10
        assert bins[0].lo == 0.0 and bins[-1].hi == 1.0
        assert sum(b.count for b in bins) == 3

    def test_empty_bins_have_no_stats(self):
        rows = records_from([(0.05, False)])
        bins = reliability_bins(rows, bin_count=10)
        # u = 0.05 puts confidence 0.95 in the last bin.
        assert bins[-1].count == 1
        for b in bins[:-1]:
            assert b.count == 0
            assert b.mean_confidence is None
            assert b.accuracy is None

    def test_confidence_one_lands_in_last_bin(self):
        bins = reliability_bins(records_from([(0.0, False)]), bin_count=10)
        assert bins[-1].count == 1

    def test_left_closed_edges(self):
        # With 4 bins the edges are exact binary floats. Confidence exactly
        # 0.25 sits on an edge and belongs to [0.25, 0.5), bin index 1.
        bins = reliability_bins(records_from([(0.75, False)]), bin_count=4)
        assert bins[1].count == 1
        assert bins[1].lo == 0.25

    def test_ece_hand_case(self):
        # One bin: conf {0.95, 0.95}, acc 0.5, gap 0.45.
        rows = records_from([(0.05, False), (0.05, True)])
        assert ece(rows, bin_count=10) == pytest.approx(0.45, abs=1e-12)

    def test_ece_two_bins_weighted(self):
        # Bin [0.75, 1.0]: conf 1.0, acc 1, gap 0, weight 1/3.
        # Bin [0.25, 0.5): conf 0.25, acc 0.5, gap 0.25, weight 2/3.
        rows = records_from([(0.0, False), (0.75, False), (0.75, True)])
        expected = (2 / 3) * 0.25
        assert ece(rows, bin_count=4) == pytest.approx(expected, abs=1e-12)

    def test_perfectly_calibrated_bins(self):
        # conf 0.75 with 3 of 4 correct: gap 0 in its bin.
        rows = records_from([(0.25, False), (0.25, False), (0.25, False), (0.25, True)])
        assert ece(rows, bin_count=10) == pytest.approx(0.0, abs=1e-12)

    def test_bin_count_validation(self):
        with pytest.raises(InvariantViolation):
            reliability_bins(records_from([(0.5, False)]), bin_count=0)

    @given(
        st.lists(
            st.tuples(st.integers(0, 10), st.booleans()), min_size=1, max_size=30
        ),
        st.integers(min_value=1, max_value=15),
    )
    def test_ece_bounded(self, int_pairs, bins):
        pairs = [(u / 10.0, h) for u, h in int_pairs]
        assert 0.0 <= ece(records_from(pairs), bin_count=bins) <= 1.0


class TestReport:
    def test_report_fields_consistent(self):
        rows = records_from([(0.9, True), (0.5, False), (0.1, False)])
        report = compute_report(rows, bin_count=5)
        assert report.auroc == auroc(rows)
        assert report.aurac == aurac(rows)
        assert report.ece == ece(rows, bin_count=5)
        assert report.n == 3
        assert len(report.bins) == 5

    def test_report_skips_failed_rows(self):
        rows = records_from([(0.9, True), (0.1, False)])
        rows.append(
            DetectionRecord(
                id="broken", uncertainty=None, hallucination=None, status="failed"
            )
        )
        assert compute_report(rows).n == 2

    def test_to_dict_carries_definition(self):
        rows = records_from([(0.9, True), (0.1, False)])
        doc = compute_report(rows).to_dict()
        assert "rejecting the k highest-uncertainty" in doc["aurac_definition"]
        assert isinstance(doc["bins"], list)

    def test_report_is_dataclass_value(self):
        rows = records_from([(0.9, True), (0.1, False)])
        assert compute_report(rows) == compute_report(rows)
        assert isinstance(compute_report(rows), MetricReport)


class TestRecordsJsonl:
    def test_round_trip(self):
        rows = [
            rec("a", 0.25, True, initial_answer="x", final_answer="y"),
            rec("b", 0.0, False, per_modality={"text": 0.0}),
            DetectionRecord(
                id="c", uncertainty=None, hallucination=None, status="failed",
                error="judge unavailable",
            ),
        ]
        text = records_to_jsonl(rows)
        assert records_from_jsonl(text) == rows

    def test_canonical_form(self):
        text = records_to_jsonl([rec("a", 0.5, True)])
        line = text.strip()
        assert ": " not in line and ", " not in line
        keys = list(__import__("json").loads(line))
        assert keys == sorted(keys)
        assert text.endswith("\n")

    def test_empty_list(self):
        assert records_to_jsonl([]) == ""
        assert records_from_jsonl("") == []

    def test_bad_json_line_numbered(self):
        good = records_to_jsonl([rec("a", 0.5, True)])
        with pytest.raises(InvariantViolation, match="line 2"):
            records_from_jsonl(good + "{nope\n")

    def test_blank_lines_skipped(self):
        text = "\n" + records_to_jsonl([rec("a", 0.5, True)]) + "\n\n"
        assert len(records_from_jsonl(text)) == 1
