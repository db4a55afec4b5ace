#!/usr/bin/env python3
"""Sweep the synthetic lab over several readout models.

For a linear readout with sensitivity vector a, the root-mean-square
output distance under parameter noise of scale sigma is sqrt(2)*|a|*sigma
exactly, so log(rms) against log(sigma) is a line with slope 1 and
intercept log(sqrt(2)*|a|). This experiment fits that line for a range of
sensitivity vectors, then adds a cubic term to the readout to show the
law bending once the response stops being linear.

Usage:
    python3 scripts/prop_check_experiment.py --trials 200000 --out sweep.json
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from mmuq.proplab import SyntheticModel, fit_proportionality


MODELS = {
    "scalar": SyntheticModel(sensitivity=(1.0,), mean=(0.0,), variance=1.0),
    "small-4d": SyntheticModel(
        sensitivity=(0.8, -1.2, 0.5, 2.0), mean=(0.0, 0.0, 0.0, 0.0), variance=1.0
    ),
    "wide-16d": SyntheticModel(
        sensitivity=tuple(((-1.0) ** k) * (0.25 + 0.1 * k) for k in range(16)),
        mean=(0.0,) * 16,
        variance=1.0,
    ),
}


def run_sweep(sigmas, trials: int, seed: int, cubic: float) -> dict:
    rows = {}
    for name, base in MODELS.items():
        model = SyntheticModel(
            sensitivity=base.sensitivity,
            mean=base.mean,
            variance=base.variance,
            cubic=cubic,
        )
        fit = fit_proportionality(model, sigmas, trials=trials, seed=seed)
        rows[name] = {
            "norm": float(np.linalg.norm(model.sensitivity)),
            "fit": fit.to_dict(),
        }
    return rows


def print_table(rows: dict, cubic: float) -> None:
    tag = f"cubic={cubic:g}" if cubic else "linear"
    print(f"\n== {tag} readout ==")
    header = f"{'model':<10} {'|a|':>8} {'slope':>8} {'intercept':>10} {'expected':>10}"
    print(header)
    print("-" * len(header))
    for name, row in rows.items():
        fit = row["fit"]
        print(
            f"{name:<10} {row['norm']:>8.4f} {fit['slope']:>8.4f}"
            f" {fit['intercept']:>10.4f} {fit['expected_intercept']:>10.4f}"
        )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--sigmas",
        default="0.01,0.0464,0.2154,1.0",
        help="comma-separated noise scales",
    )
    parser.add_argument("--trials", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument(
        "--cubic", type=float, default=1.0, help="cubic coefficient for the bent sweep"
    )
    parser.add_argument("--out", help="write all fits to this JSON file")
    args = parser.parse_args(argv)

    sigmas = tuple(float(s) for s in args.sigmas.split(","))
    linear = run_sweep(sigmas, args.trials, args.seed, cubic=0.0)
    bent = run_sweep(sigmas, args.trials, args.seed, cubic=args.cubic)

    print_table(linear, cubic=0.0)
    print_table(bent, cubic=args.cubic)

    worst = max(abs(row["fit"]["slope"] - 1.0) for row in linear.values())
    print(f"\nworst linear slope deviation from 1: {worst:.4f}")
    drift = {
        name: bent[name]["fit"]["slope"] - linear[name]["fit"]["slope"]
        for name in MODELS
    }
    print(
        "cubic slope drift: "
        + ", ".join(f"{name} {delta:+.3f}" for name, delta in drift.items())
    )

    if args.out:
        payload = {
            "sigmas": list(sigmas),
            "trials": args.trials,
            "seed": args.seed,
            "linear": linear,
            "cubic": {"coefficient": args.cubic, "fits": bent},
        }
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
        print(f"wrote {args.out}")

    if worst > 0.05 or not math.isfinite(worst):
        print("linear sweep drifted outside tolerance", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
