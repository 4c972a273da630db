"""Command-line entry point: run matrices or single cases, then summarize the records."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from . import aggregate as agg
from .accounting import load_pricing_table
from .controller import MODES, ControllerConfig
from .corpus import write_corpus
from .gateway import ModelEndpoint, RESPONSES_STYLE
from .matrix import (
    MANIFEST_FILE,
    RunMatrixSpec,
    cell_dir,
    discover_cases,
    load_records,
    run_matrix,
    validate_matrix,
)
from .runner import FixtureError, load_case, run_trajectory


def _split(values: Sequence[str] | None) -> list[str]:
    out: list[str] = []
    for v in values or []:
        out.extend(x for x in v.split(",") if x)
    return out


def _matrix_spec(args: argparse.Namespace) -> RunMatrixSpec:
    pricing = load_pricing_table(args.pricing) if args.pricing else None
    if args.config:
        path = Path(args.config)
        obj = json.loads(path.read_text())
        spec = RunMatrixSpec.from_json(obj, base_dir=path.parent, pricing_table=pricing)
    else:
        spec = RunMatrixSpec(endpoints=[], modes=list(MODES), cases=[])
    if args.fixtures:
        spec.cases = discover_cases(args.fixtures)
    if args.out:
        spec.output_dir = Path(args.out)
    if args.seed is not None:
        spec.seed = args.seed
    if args.parallelism is not None:
        spec.parallelism = args.parallelism
    modes = _split(args.mode)
    if modes:
        spec.modes = modes
    models = _split(args.model)
    if models:
        spec.endpoints = [e for e in spec.endpoints if e.model_id in models]
        missing = sorted(set(models) - {e.model_id for e in spec.endpoints})
        if missing:
            raise SystemExit(f"unknown model id(s): {', '.join(missing)}")
    if not spec.endpoints:
        raise SystemExit("no endpoints configured; pass --config with an endpoints list")
    if not spec.cases:
        raise SystemExit("no cases found; pass --fixtures or list cases in the config")
    spec.__post_init__()
    return spec


def cmd_run(args: argparse.Namespace) -> int:
    spec = _matrix_spec(args)
    try:
        result = run_matrix(spec)
    except FixtureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = validate_matrix(result.records, [e.model_id for e in spec.endpoints], spec.modes, result.manifest["cases"])
    print(f"executed {result.executed} trajectories, skipped {result.skipped} completed, {len(result.records)} records")
    print(f"matrix complete: {'yes' if report.passed else 'no'}")
    return 0 if report.passed else 1


def cmd_case(args: argparse.Namespace) -> int:
    pricing = load_pricing_table(args.pricing) if args.pricing else {}
    if args.config:
        spec = _matrix_spec(args)
        endpoint = spec.endpoints[0]
        config = spec.controller.with_seed(spec.seed)
    else:
        if not args.script:
            raise SystemExit("pass --config or --script to choose a model endpoint")
        model = (_split(args.model) or ["scripted"])[0]
        endpoint = ModelEndpoint.from_json(
            {"model_id": model, "request_style": RESPONSES_STYLE, "transport": {"kind": "scripted", "fixture_path": args.script}},
            pricing,
        )
        config = ControllerConfig().with_seed(args.seed or 0)
    modes = _split(args.mode) or ["heuristic"]
    try:
        case = load_case(args.case_dir)
    except FixtureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_root = Path(args.out) if args.out else None
    for mode in modes:
        out = cell_dir(out_root, endpoint.model_id, mode, case.case_id) if out_root else None
        record = run_trajectory(case, endpoint, config.with_mode(mode), out_dir=out)
        outcomes = " -> ".join(f"{a.plan_id}:{a.outcome}" for a in record.attempts)
        print(
            f"{case.case_id} [{mode}] gen={record.generation_success} strict={record.strict_success} "
            f"cost=${record.total_cost_usd} images={record.images_sent_total} {outcomes}"
        )
    return 0


def _records(args: argparse.Namespace) -> list[dict[str, Any]]:
    out = Path(args.out or "out")
    records = load_records(out)
    models = _split(args.model)
    if models:
        records = [r for r in records if r["model_id"] in models]
    modes = _split(args.mode)
    if modes:
        records = [r for r in records if r["mode"] in modes]
    if not records:
        raise SystemExit(f"no record.json files under {out}")
    return records


def cmd_aggregate(args: argparse.Namespace) -> int:
    records = _records(args)
    out = Path(args.out or "out")
    summary = agg.build_summary(records)
    summaries = agg.aggregate_modes(records)
    audits = agg.image_audit(records)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    (out / "summary.csv").write_text(agg.summary_csv(summaries, audits))
    tables = [agg.mode_table(summaries)]
    deltas = {b: agg.pairwise_deltas(records, "heuristic", b) for b in ("always_on", "fixed") if _has_pair(records, b)}
    if deltas:
        tables.append(agg.delta_table(deltas))
    tables.append(agg.audit_table(audits))
    text = "\n\n".join(tables) + "\n"
    (out / "tables.txt").write_text(text)
    print(text, end="")
    return 0


def _has_pair(records: list[dict[str, Any]], baseline: str) -> bool:
    modes = {r["mode"] for r in records}
    return "heuristic" in modes and baseline in modes


def cmd_audit(args: argparse.Namespace) -> int:
    records = _records(args)
    print(agg.audit_table(agg.image_audit(records)))
    print()
    print(agg.layer_table(agg.failure_layers(records, stop_view=True)))
    return 0


def cmd_deltas(args: argparse.Namespace) -> int:
    records = _records_all_modes(args)
    try:
        groups = {b: agg.pairwise_deltas(records, args.treatment, b) for b in _split(args.baseline)}
        overall = {b: agg.overall_deltas(records, args.treatment, b) for b in groups}
    except agg.MissingCell as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(agg.delta_table(groups))
    for b, d in overall.items():
        shown = d.display()
        print(
            f"\nall models, {args.treatment} vs {b}: gen {shown['gen_gain']} pp, "
            f"cost -{shown['cost_red']}%, energy -{shown['energy_red']}%"
        )
    return 0


def _records_all_modes(args: argparse.Namespace) -> list[dict[str, Any]]:
    saved, args.mode = args.mode, None
    try:
        return _records(args)
    finally:
        args.mode = saved


def cmd_validate(args: argparse.Namespace) -> int:
    out = Path(args.out or "out")
    manifest_path = out / MANIFEST_FILE
    if not manifest_path.exists():
        raise SystemExit(f"no {MANIFEST_FILE} under {out}")
    manifest = json.loads(manifest_path.read_text())
    records = load_records(out)
    models = [e["model_id"] for e in manifest["endpoints"]]
    report = validate_matrix(records, models, manifest["modes"], manifest["cases"])
    for cell in report.to_json()["cell_counts"]:
        print(f"{cell['model_id']:<24} {cell['mode']:<12} {cell['count']}")
    for label, items in (("missing", report.missing), ("duplicate", report.duplicates), ("unexpected", report.unexpected)):
        for t in items:
            print(f"{label}: {' / '.join(t)}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_corpus(args: argparse.Namespace) -> int:
    path = write_corpus(args.directory)
    print(f"wrote synthetic corpus; run it with: sb3repair run --config {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sb3repair", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="matrix config JSON (endpoints, modes, controller, energy)")
    common.add_argument("--pricing", help="pricing table JSON keyed by model id")
    common.add_argument("--fixtures", help="directory of case fixtures (one subdirectory per case)")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="64-bit base seed for probe and verifier reruns")
    common.add_argument("--parallelism", type=int, help="concurrent trajectories")
    common.add_argument("--mode", action="append", help="controller mode(s), comma separated or repeated")
    common.add_argument("--model", action="append", help="model id(s), comma separated or repeated")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run the (model x mode x case) matrix").set_defaults(func=cmd_run)
    p = sub.add_parser("case", parents=[common], help="run one case")
    p.add_argument("case_dir")
    p.add_argument("--script", help="scripted response fixture (when no --config is given)")
    p.set_defaults(func=cmd_case)
    sub.add_parser("aggregate", parents=[common], help="write summary.json, summary.csv and tables").set_defaults(
        func=cmd_aggregate
    )
    sub.add_parser("audit", parents=[common], help="image-use audit and failure layers").set_defaults(func=cmd_audit)
    p = sub.add_parser("deltas", parents=[common], help="per-model deltas of one mode against baselines")
    p.add_argument("--treatment", default="heuristic")
    p.add_argument("--baseline", action="append", default=None, help="baseline mode(s); default always_on,fixed")
    p.set_defaults(func=cmd_deltas)
    sub.add_parser("validate", parents=[common], help="check matrix completeness").set_defaults(func=cmd_validate)
    p = sub.add_parser("corpus", help="write the synthetic case corpus and scripted fixtures")
    p.add_argument("directory")
    p.set_defaults(func=cmd_corpus)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING)
    if getattr(args, "baseline", "unset") is None:
        args.baseline = ["always_on,fixed"]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
