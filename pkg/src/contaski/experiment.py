"""Replicated parameter sweeps over a base scenario."""

from __future__ import annotations

import copy
import csv
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .config import ScenarioError, load_json, validate_scenario
from .metrics import MetricsRecord, SUMMARY_METRICS, aggregate_replications, compute_run_metrics, records_to_csv
from .sim import run

AXES = ("nodes", "threshold", "quorum", "loss_prob", "range_m")
_SEED_FIELD = 1 << 16


def derive_seed(master: int, point: int, rep: int) -> int:
    """Seed of replication ``rep`` at sweep point ``point``.

    Bit-packs ``(master, point, rep)`` so distinct pairs never collide; the
    generator's seed hashing takes care of decorrelating neighbouring seeds.
    """
    if not (0 <= point < _SEED_FIELD and 0 <= rep < _SEED_FIELD):
        raise ValueError("point and replication indices must be below 65536")
    return (master * _SEED_FIELD + point) * _SEED_FIELD + rep


@dataclass
class ExperimentPlan:
    base: dict[str, Any]
    sweep: dict[str, list] = field(default_factory=dict)
    replications: int = 35
    master_seed: int = 0
    name: str = "experiment"

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ExperimentPlan:
        base = raw.get("base")
        if isinstance(base, str):
            base = load_json(base)
        if not isinstance(base, dict):
            raise ScenarioError(["plan: base must be a scenario object or a preset name"])
        sweep = raw.get("sweep", {}) or {}
        bad = sorted(set(sweep) - set(AXES))
        errors = [f"plan: unknown sweep axis {a!r}" for a in bad]
        reps = raw.get("replications", 35)
        if not isinstance(reps, int) or reps < 1:
            errors.append("plan: replications must be a positive integer")
        if errors:
            raise ScenarioError(errors)
        return cls(base, {a: list(sweep[a]) for a in AXES if a in sweep}, reps, raw.get("master_seed", 0), raw.get("name", "experiment"))

    def points(self) -> list[dict[str, Any]]:
        axes = list(self.sweep)
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.sweep[a] for a in axes))]


def apply_point(base: dict[str, Any], point: dict[str, Any], seed: int) -> dict[str, Any]:
    raw = copy.deepcopy(base)
    raw["seed"] = seed
    for axis, value in point.items():
        if axis == "nodes":
            if not isinstance(raw.get("nodes"), dict):
                raise ScenarioError(["sweep axis 'nodes' needs generated nodes in the base scenario"])
            raw["nodes"]["count"] = value
        elif axis == "threshold":
            raw.setdefault("protocol", {})["similarity_threshold"] = value
        elif axis == "quorum":
            tasks = raw.setdefault("tasks", {"count": 10})
            if isinstance(tasks, list):
                for t in tasks:
                    t["quorum"] = value
            else:
                tasks.setdefault("generator", {})["quorum"] = value
        elif axis in ("loss_prob", "range_m"):
            raw.setdefault("radio", {})[axis] = value
    return raw


def run_replication(job: tuple[int, int, int, dict[str, Any]]) -> tuple[int, int, int, MetricsRecord | None, str]:
    p, r, seed, raw = job
    try:
        result = run(validate_scenario(raw))
        return p, r, seed, compute_run_metrics(result), "ok"
    except Exception as exc:  # recorded per replication, reported by the caller
        return p, r, seed, None, f"error: {type(exc).__name__}: {exc}"


def run_plan(plan: ExperimentPlan, jobs: int = 1) -> list[tuple[int, int, int, MetricsRecord | None, str]]:
    work = []
    for p, point in enumerate(plan.points()):
        for r in range(plan.replications):
            seed = derive_seed(plan.master_seed, p, r)
            work.append((p, r, seed, apply_point(plan.base, point, seed)))
    if jobs <= 1:
        results = [run_replication(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_replication, work, chunksize=4))
    return sorted(results, key=lambda x: (x[0], x[1]))


def _fmt(v) -> str:
    return "" if v is None else repr(v)


def write_outputs(plan: ExperimentPlan, results, out: Path) -> int:
    """Write per-point and combined outputs; returns the number of failed replications."""
    out.mkdir(parents=True, exist_ok=True)
    points = plan.points()
    axes = list(plan.sweep)
    failures = sum(1 for *_, status in results if status != "ok")

    by_point: dict[int, list] = {p: [] for p in range(len(points))}
    for item in results:
        by_point[item[0]].append(item)

    summary_rows = io.StringIO()
    sw = csv.writer(summary_rows, lineterminator="\n")
    sw.writerow(["point", *axes, "rep", "seed", "status", *SUMMARY_METRICS])
    fig4 = io.StringIO()
    f4 = csv.writer(fig4, lineterminator="\n")
    f4.writerow(["point", *axes, "rep", "nc", "cpt"])
    fig5 = io.StringIO()
    f5 = csv.writer(fig5, lineterminator="\n")
    f5.writerow(["point", *axes, "dispatch", "dispatch_time", "cpt_mean", "cit_mean"])
    fig7 = io.StringIO()
    f7 = csv.writer(fig7, lineterminator="\n")
    f7.writerow(["point", *axes, "nat_mean", "nat_ci", "lat_ms_mean", "lat_ms_ci", "nc_mean", "cpt_mean"])

    summary_json = {"name": plan.name, "replications": plan.replications, "master_seed": plan.master_seed, "points": []}
    for p, point in enumerate(points):
        vals = [point[a] for a in axes]
        items = by_point[p]
        records = [rec for _, _, _, rec, status in items if status == "ok"]
        for _, r, seed, rec, status in items:
            sv = rec.summary_values() if rec else dict.fromkeys(SUMMARY_METRICS)
            sw.writerow([p, *vals, r, seed, status, *(_fmt(sv[m]) for m in SUMMARY_METRICS)])
            if rec:
                f4.writerow([p, *vals, r, rec.nc, _fmt(rec.cpt_mean)])
        n_dispatch = max((len(rec.per_dispatch) for rec in records), default=0)
        for k in range(n_dispatch):
            rows = [rec.per_dispatch[k] for rec in records if len(rec.per_dispatch) > k]
            f5.writerow([
                p, *vals, k + 1, _fmt(rows[0].dispatch_time),
                _fmt(sum(d.cpt for d in rows) / len(rows)), _fmt(sum(d.cit for d in rows) / len(rows)),
            ])
        agg = aggregate_replications(records) if records else {}
        if agg:
            f7.writerow([
                p, *vals, _fmt(agg["nat"].mean), _fmt(agg["nat"].ci_half), _fmt(agg["lat_ms"].mean),
                _fmt(agg["lat_ms"].ci_half), _fmt(agg["nc"].mean), _fmt(agg["cpt"].mean),
            ])
        point_dir = out / f"point_{p:03d}"
        point_dir.mkdir(exist_ok=True)
        ok_reps = [r for _, r, _, _, status in items if status == "ok"]
        (point_dir / "metrics.csv").write_text(records_to_csv(records, ok_reps), encoding="utf-8")
        point_summary = {
            "point": p,
            "params": point,
            "ok": len(records),
            "failed": [{"rep": r, "seed": seed, "error": status} for _, r, seed, _, status in items if status != "ok"],
            "summary": {m: vars(s) for m, s in agg.items()},
            "all_allocated_fraction": (
                sum(1 for rec in records if rec.dispatched and rec.nat == rec.dispatched) / len(records)
            ) if records else None,
        }
        (point_dir / "summary.json").write_text(json.dumps(point_summary, indent=2) + "\n", encoding="utf-8")
        summary_json["points"].append(point_summary)

    (out / "summary.csv").write_text(summary_rows.getvalue(), encoding="utf-8")
    (out / "fig4_nc_cpt.csv").write_text(fig4.getvalue(), encoding="utf-8")
    (out / "fig5_dispatch.csv").write_text(fig5.getvalue(), encoding="utf-8")
    (out / "fig7_nat_lat.csv").write_text(fig7.getvalue(), encoding="utf-8")
    (out / "summary.json").write_text(json.dumps(summary_json, indent=2) + "\n", encoding="utf-8")
    return failures
