"""Command line interface.

Subcommands mirror the pipeline stages: ``perturb`` one content file,
``estimate`` uncertainty for one prompt, ``detect`` hallucinations over a
manifest, ``mitigate`` with revision prompts, ``cot`` for uncertainty-aware
reasoning, ``prop-check`` for the scaling-law simulation, and ``report``
for metrics over saved records.

Exit codes: 0 on success, 1 on a fatal error (bad config, missing
credentials, unreadable input), 2 when a batch completed but some items
failed.

Every output file carries a reproducibility stamp ``{config_hash, seed,
version}``: JSON outputs embed it under ``"meta"``, JSONL outputs start
with a ``{"meta": ...}`` line, and media outputs written by ``perturb``
get a ``<name>.meta.json`` sidecar since raster and waveform formats have
nowhere to put it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._version import VERSION
from .backends import RoleClients
from .config import RunConfig, config_hash, load_config
from .errors import ConfigError, ToolkitError
from .media import Modality, TextContent, PromptBundle, load_content, save_content
from .metrics import DetectionRecord, compute_report
from .perturb import kind_for, perturb_content, sample_rng, TextKind
from .proplab import SyntheticModel, fit_proportionality
from .tasks import cot, detect, estimate_item, load_manifest, mitigate

_JSONL_SEP = (",", ":")


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _dump_jsonl_line(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=_JSONL_SEP)


def _write_jsonl(path: Path, meta: dict, rows: list[dict]) -> None:
    lines = [_dump_jsonl_line({"meta": meta})]
    lines.extend(_dump_jsonl_line(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_records(path: Path) -> tuple[list[DetectionRecord], dict | None]:
    """Read a records JSONL file, separating the leading meta line."""
    meta = None
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{lineno}: bad JSON: {e}") from e
        if set(doc) == {"meta"}:
            meta = doc["meta"]
            continue
        records.append(DetectionRecord.from_dict(doc))
    return records, meta


def _load_run_config(ns) -> RunConfig:
    cfg = load_config(ns.config)
    if getattr(ns, "seed", None) is not None:
        cfg = cfg.with_seed(ns.seed)
    return cfg


def _parse_attachments(specs: list[str] | None) -> dict[Modality, object]:
    attachments = {}
    for spec in specs or []:
        name, sep, path = spec.partition("=")
        if not sep:
            raise ConfigError(f"attachment spec must be modality=path, got {spec!r}")
        try:
            modality = Modality(name)
        except ValueError as e:
            raise ConfigError(f"unknown modality {name!r} in {spec!r}") from e
        attachments[modality] = load_content(path, modality)
    return attachments


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_perturb(ns) -> int:
    modality = Modality(ns.modality)
    kind = kind_for(modality, ns.kind)
    content = load_content(ns.infile, modality)
    rephraser = None
    if kind is TextKind.LLM_REPHRASE:
        if ns.config is None:
            raise ConfigError(
                "llm_rephrase needs --config to supply the rephrasing backend"
            )
        rephraser = RoleClients.from_roles(_load_run_config(ns).roles).responder
    rng = sample_rng(ns.seed, 0, modality)
    out = perturb_content(content, kind, ns.degree, rng, rephraser=rephraser)
    out_path = Path(ns.out)
    save_content(out, out_path)
    stamp = {
        "config_hash": config_hash(
            {"kind": ns.kind, "modality": ns.modality, "degree": ns.degree}
        ),
        "seed": ns.seed,
        "version": VERSION,
    }
    Path(f"{out_path}.meta.json").write_text(_dump_json(stamp), encoding="utf-8")
    return 0


def _cmd_estimate(ns) -> int:
    cfg = _load_run_config(ns)
    clients = RoleClients.from_roles(cfg.roles)
    bundle = PromptBundle(
        text=TextContent(ns.text), attachments=_parse_attachments(ns.attach)
    )
    est = estimate_item(bundle, clients, cfg.plan, ns.text, cfg.clustering)
    doc = est.to_dict()
    doc["meta"] = cfg.metadata()
    payload = _dump_json(doc)
    if ns.out:
        Path(ns.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_detect(ns) -> int:
    cfg = _load_run_config(ns)
    items = load_manifest(ns.manifest)
    parallelism = ns.parallelism if ns.parallelism else cfg.parallelism
    records = detect(
        items,
        cfg.roles,
        cfg.plan,
        clustering=cfg.clustering,
        grader=cfg.grader,
        parallelism=parallelism,
    )
    _write_jsonl(Path(ns.out), cfg.metadata(), [r.to_dict() for r in records])
    failed = sum(1 for r in records if r.status != "ok")
    if failed:
        print(f"{failed} of {len(records)} items failed", file=sys.stderr)
        return 2
    return 0


def _cmd_mitigate(ns) -> int:
    cfg = _load_run_config(ns)
    items = load_manifest(ns.manifest)
    records, _ = _read_records(Path(ns.records))
    outcomes = mitigate(items, records, cfg.roles, top_fraction=cfg.top_fraction)
    _write_jsonl(Path(ns.out), cfg.metadata(), [o.to_dict() for o in outcomes])
    failed = sum(1 for o in outcomes if o.status != "ok")
    if failed:
        print(f"{failed} of {len(outcomes)} items failed", file=sys.stderr)
        return 2
    return 0


def _cmd_cot(ns) -> int:
    cfg = _load_run_config(ns)
    items = load_manifest(ns.manifest)
    clients = RoleClients.from_roles(cfg.roles)
    rows = []
    failed = 0
    for item in items:
        try:
            trace = cot(
                item,
                clients,
                cfg.plan,
                max_steps=cfg.max_steps,
                clustering=cfg.clustering,
            )
            rows.append(trace.to_dict())
        except ToolkitError as e:
            failed += 1
            rows.append(
                {"id": item.id, "status": "failed", "error": f"{type(e).__name__}: {e}"}
            )
    _write_jsonl(Path(ns.out), cfg.metadata(), rows)
    if failed:
        print(f"{failed} of {len(items)} items failed", file=sys.stderr)
        return 2
    return 0


def _cmd_prop_check(ns) -> int:
    sigmas = [float(s) for s in ns.sigmas.split(",") if s.strip()]
    sensitivity = [float(s) for s in ns.sensitivity.split(",") if s.strip()]
    model = SyntheticModel(
        sensitivity=tuple(sensitivity),
        mean=tuple(0.0 for _ in sensitivity),
        variance=1.0,
        cubic=ns.cubic,
    )
    fit = fit_proportionality(
        model, sigmas, ns.trials, seed=ns.seed, max_workers=ns.workers
    )
    doc = fit.to_dict()
    doc["expected_slope"] = 1.0
    doc["meta"] = {
        "config_hash": config_hash(
            {
                "sigmas": sigmas,
                "trials": ns.trials,
                "sensitivity": sensitivity,
                "cubic": ns.cubic,
            }
        ),
        "seed": ns.seed,
        "version": VERSION,
    }
    payload = _dump_json(doc)
    if ns.out:
        Path(ns.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_report(ns) -> int:
    records, meta = _read_records(Path(ns.records))
    report = compute_report(records, bin_count=ns.bin_count)
    doc = report.to_dict()
    doc["meta"] = meta if meta is not None else {
        "config_hash": config_hash({"records": str(ns.records)}),
        "seed": None,
        "version": VERSION,
    }
    Path(ns.out).write_text(_dump_json(doc), encoding="utf-8")
    if ns.bins_csv:
        lines = ["lo,hi,count,mean_confidence,accuracy"]
        for b in report.bins:
            conf = "" if b.mean_confidence is None else repr(b.mean_confidence)
            acc = "" if b.accuracy is None else repr(b.accuracy)
            lines.append(f"{b.lo!r},{b.hi!r},{b.count},{conf},{acc}")
        Path(ns.bins_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmuq",
        description=(
            "Uncertainty estimation for multimodal models via "
            "semantic-preserving prompt perturbation"
        ),
    )
    parser.add_argument("--version", action="version", version=f"mmuq {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="apply one perturbation to one content file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument(
        "--modality", required=True, choices=[m.value for m in Modality]
    )
    p.add_argument("--kind", required=True)
    p.add_argument("--degree", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="needed only for llm_rephrase")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("estimate", help="estimate uncertainty for one prompt")
    p.add_argument("--config", required=True)
    p.add_argument("--text", required=True)
    p.add_argument(
        "--attach",
        action="append",
        metavar="MODALITY=PATH",
        help="attach a content file; repeatable",
    )
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("detect", help="run hallucination detection over a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("mitigate", help="revise the most uncertain answers")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mitigate)

    p = sub.add_parser("cot", help="uncertainty-aware stepwise reasoning")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cot)

    p = sub.add_parser(
        "prop-check", help="verify the distance-vs-noise scaling law by simulation"
    )
    p.add_argument("--sigmas", default="0.01,0.0464,0.2154,1.0")
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sensitivity", default="0.8,-1.2,0.5,2.0")
    p.add_argument("--cubic", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_prop_check)

    p = sub.add_parser("report", help="compute metrics over saved detection records")
    p.add_argument("--records", required=True)
    p.add_argument("--bin-count", type=int, default=10)
    p.add_argument("--bins-csv", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except ToolkitError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
