"""Command line: ``contaski run | experiment | trace``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ScenarioError, load_json, validate_scenario
from .experiment import ExperimentPlan, apply_point, run_plan, write_outputs
from .metrics import compute_run_metrics, records_to_csv
from .sim import run
from .trace import TraceError, audit, filter_events, format_event, read_trace, write_trace

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get("CONTASKI_OUT") or "contaski-out")


def _load(path: str) -> dict:
    try:
        return load_json(path)
    except FileNotFoundError:
        raise ScenarioError([f"cannot read {path}: no such file"]) from None
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None


def _report(errors: list[str]) -> None:
    for e in errors:
        print(f"error: {e}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        raw = _load(args.config)
        if args.seed is not None:
            raw = {**raw, "seed": args.seed}
        config = validate_scenario(raw)
    except ScenarioError as exc:
        _report(exc.errors)
        return EXIT_INVALID
    try:
        result = run(config)
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(result.trace_lines(), out / "trace.jsonl")
    metrics = compute_run_metrics(result)
    payload = {
        "scenario": config.name,
        "seed": config.seed,
        "trace_sha256": result.digest(),
        "metrics": metrics.to_dict(),
        "leaders": sorted(result.ap.leaders),
        "node_leaders": {str(n): s.leader for n, s in result.nodes.items()},
        "dispatch_log": [rec.to_dict() for rec in result.ap.dispatch_log.values()],
        "task_status": {str(s.task.task_id): s.status.value for s in result.ap.task_list},
    }
    (out / "metrics.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    (out / "metrics.csv").write_text(records_to_csv([metrics]), encoding="utf-8")
    print(
        f"{config.name}: seed={config.seed} events={result.events_processed} NC={metrics.nc} "
        f"NAT={metrics.nat}/{metrics.dispatched} leaders={sorted(result.ap.leaders)} -> {out}"
    )
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        plan = ExperimentPlan.from_dict(_load(args.plan))
        for point in plan.points():
            # surface configuration errors before spending time on runs
            validate_scenario(apply_point(plan.base, point, plan.master_seed))
    except ScenarioError as exc:
        _report(exc.errors)
        return EXIT_INVALID
    out = _out_dir(args.out)
    results = run_plan(plan, jobs=args.jobs)
    failures = write_outputs(plan, results, out)
    for p, point in enumerate(plan.points()):
        summary = json.loads((out / f"point_{p:03d}" / "summary.json").read_text("utf-8"))["summary"]
        cells = " ".join(
            f"{m}={summary[m]['mean']:.3f}" for m in ("nc", "nat", "cpt", "cit", "lat_ms") if summary.get(m, {}).get("mean") is not None
        )
        print(f"point {p} {point}: {cells}")
    if failures:
        print(f"{failures} replication(s) failed; see summary.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_trace(args) -> int:
    try:
        events = read_trace(args.path)
    except (TraceError, OSError) as exc:
        print(f"error: {args.path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.audit:
        violations = audit(events)
        for v in violations:
            print(f"violation: {v}")
        print(f"{len(events)} events audited, {len(violations)} violation(s)")
        return EXIT_OK if not violations else EXIT_INVALID
    for ev in filter_events(events, args.kind, args.node, args.t_from, args.t_to):
        print(format_event(ev))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contaski", description="Similarity clustering and consensus task allocation simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log protocol warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--config", required=True, help="scenario JSON (or bundled preset name, e.g. fig2.json)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", help="output directory (default $CONTASKI_OUT or ./contaski-out)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("experiment", help="run a replicated sweep plan")
    p.add_argument("--plan", required=True, help="plan JSON (or bundled paper.plan)")
    p.add_argument("--jobs", type=int, default=1, help="parallel replications")
    p.add_argument("--out", help="output directory (default $CONTASKI_OUT or ./contaski-out)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("trace", help="list or audit a trace.jsonl")
    p.add_argument("path")
    p.add_argument("--kind")
    p.add_argument("--node")
    p.add_argument("--from", dest="t_from", type=float)
    p.add_argument("--to", dest="t_to", type=float)
    p.add_argument("--audit", action="store_true", help="replay protocol invariants and report violations")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
