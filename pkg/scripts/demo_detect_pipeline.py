#!/usr/bin/env python3
"""End-to-end walkthrough on a generated mock benchmark.

Builds a small question set where some items are scripted to answer
consistently and the rest split between two answers, then drives the
command-line pipeline in-process: detect scores every item, report turns
the scores into ranking and calibration metrics, and mitigate re-asks the
most uncertain items. Everything runs against the deterministic mock
backend, so the output is reproducible and needs no network access.

Usage:
    python3 scripts/demo_detect_pipeline.py --workdir demo_out
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from mmuq.cli import main as mmuq


RELIABLE = [
    ("what color is a ripe banana", "yellow"),
    ("how many days are in one week", "seven"),
    ("name the planet we live on", "earth"),
    ("what is frozen water called", "ice"),
    ("which animal says moo", "cow"),
    ("what season follows winter", "spring"),
]

# (question, wrong majority answer, minority answer, truth)
SHAKY = [
    ("who painted the mona lisa", "raphael", "titian", "da vinci"),
    ("what is the tallest mountain on earth", "k2", "denali", "everest"),
    ("how many sides does a hexagon have", "five", "eight", "six"),
    ("which ocean borders california", "atlantic", "arctic", "pacific"),
]


def build_benchmark(workdir: Path, seed: int) -> tuple[Path, Path]:
    responses = {}
    items = []
    for index, (question, truth) in enumerate(RELIABLE):
        responses[question] = {"initial": truth, "samples": [truth] * 5}
        items.append({"id": f"d{index:02d}", "text": question, "attachments": [],
                      "ground_truth": truth, "task_kind": "comprehension"})
    for offset, (question, wrong, minority, truth) in enumerate(SHAKY):
        responses[question] = {
            "initial": wrong,
            "samples": [wrong, wrong, wrong, minority, minority],
            "revised": truth,
        }
        items.append({"id": f"d{len(RELIABLE) + offset:02d}", "text": question,
                      "attachments": [], "ground_truth": truth,
                      "task_kind": "comprehension"})

    backend = {"kind": "mock", "seed": seed, "fixtures": {"responses": responses}}
    config = {
        "seed": seed,
        "roles": {"responder": backend, "captioner": backend,
                  "equivalence_judge": backend, "grader": backend},
        "plan": {"sample_count": 5, "kinds": {"text": "word_swap"},
                 "pairing_order": "progressive"},
        "clustering": "semantic",
        "grader": "exact",
        "top_fraction": 0.4,
    }

    config_path = workdir / "config.json"
    manifest_path = workdir / "manifest.jsonl"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    manifest_path.write_text(
        "".join(json.dumps(item) + "\n" for item in items), encoding="utf-8"
    )
    return config_path, manifest_path


def read_rows(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines[1:]]  # line 0 is the meta stamp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="demo_out")
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args(argv)

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    config_path, manifest_path = build_benchmark(workdir, args.seed)
    truths = {
        json.loads(line)["id"]: json.loads(line)["ground_truth"]
        for line in manifest_path.read_text(encoding="utf-8").splitlines()
    }

    records_path = workdir / "records.jsonl"
    report_path = workdir / "report.json"
    bins_path = workdir / "bins.csv"
    mitigated_path = workdir / "mitigated.jsonl"

    steps = [
        ["detect", "--config", str(config_path), "--manifest", str(manifest_path),
         "--out", str(records_path)],
        ["report", "--records", str(records_path), "--bins-csv", str(bins_path),
         "--out", str(report_path)],
        ["mitigate", "--config", str(config_path), "--manifest", str(manifest_path),
         "--records", str(records_path), "--out", str(mitigated_path)],
    ]
    for step in steps:
        print("$ mmuq " + " ".join(step))
        status = mmuq(step)
        if status != 0:
            print(f"step failed with exit status {status}")
            return status

    records = read_rows(records_path)
    print("\nper-item uncertainty:")
    for row in sorted(records, key=lambda r: (-r["uncertainty"], r["id"])):
        flag = "hallucinated" if row["hallucination"] else "ok"
        print(f"  {row['id']}  u={row['uncertainty']:.4f}  {flag:<12}"
              f" answer={row['initial_answer']}")

    report = json.loads(report_path.read_text(encoding="utf-8"))
    print("\nranking and calibration:")
    for key in ("auroc", "aurac", "ece", "n"):
        print(f"  {key} = {report[key]}")

    outcomes = read_rows(mitigated_path)
    revised = [row for row in outcomes if row["selected"]]
    before = sum(r["initial_answer"] == truths[r["id"]] for r in records) / len(records)
    after = sum(o["final_answer"] == truths[o["id"]] for o in outcomes) / len(outcomes)
    print(f"\nmitigation re-asked {len(revised)} of {len(outcomes)} items:")
    for row in revised:
        print(f"  {row['id']}  {row['initial_answer']!r} -> {row['final_answer']!r}")
    print(f"accuracy before {before:.2f}, after {after:.2f}")
    print(f"\nartifacts in {workdir}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
