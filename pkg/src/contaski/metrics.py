"""Run metrics (NC, NAT, CPT, CIT, LAT) and replication aggregates.

Metrics can be extracted two ways: from the AP's final ledger
(:func:`compute_run_metrics`) or by replaying the event trace
(:func:`metrics_from_trace`). The two paths share no code and must agree.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .model import AP_ID

CSV_COLUMNS = ("rep", "nc", "nat", "task_id", "cpt", "cit", "lat_ms")
SUMMARY_METRICS = ("nc", "nat", "cpt", "cit", "lat_ms")


@dataclass(frozen=True)
class DispatchMetrics:
    task_id: int
    dispatch_time: float
    leaders_at_dispatch: int
    cpt: int
    cit: int
    lat: float | None  # seconds


@dataclass
class MetricsRecord:
    nc: int
    nat: int
    per_dispatch: list[DispatchMetrics] = field(default_factory=list)

    @property
    def dispatched(self) -> int:
        return len(self.per_dispatch)

    @property
    def cpt_mean(self) -> float | None:
        return _mean([d.cpt for d in self.per_dispatch])

    @property
    def cit_mean(self) -> float | None:
        return _mean([d.cit for d in self.per_dispatch])

    @property
    def lat_mean(self) -> float | None:
        # unallocated dispatches have no LAT sample
        return _mean([d.lat for d in self.per_dispatch if d.lat is not None])

    def summary_values(self) -> dict[str, float | None]:
        lat = self.lat_mean
        return {
            "nc": float(self.nc),
            "nat": float(self.nat),
            "cpt": self.cpt_mean,
            "cit": self.cit_mean,
            "lat_ms": None if lat is None else lat * 1000.0,
        }

    def to_dict(self) -> dict:
        return {
            "nc": self.nc,
            "nat": self.nat,
            "dispatched": self.dispatched,
            "cpt_mean": self.cpt_mean,
            "cit_mean": self.cit_mean,
            "lat_mean_ms": None if self.lat_mean is None else self.lat_mean * 1000.0,
            "per_dispatch": [asdict(d) for d in self.per_dispatch],
        }

    def csv_rows(self, rep: int) -> list[dict]:
        if not self.per_dispatch:
            return [{"rep": rep, "nc": self.nc, "nat": self.nat, "task_id": "", "cpt": "", "cit": "", "lat_ms": ""}]
        return [
            {
                "rep": rep,
                "nc": self.nc,
                "nat": self.nat,
                "task_id": d.task_id,
                "cpt": d.cpt,
                "cit": d.cit,
                "lat_ms": "" if d.lat is None else repr(d.lat * 1000.0),
            }
            for d in self.per_dispatch
        ]


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def compute_run_metrics(result) -> MetricsRecord:
    """Metrics from the AP ledger of a finished :class:`~contaski.sim.RunResult`."""
    per = []
    for rec in sorted(result.ap.dispatch_log.values(), key=lambda r: r.dispatch_time):
        cpt = len({n for n, _ in rec.accepts})
        per.append(
            DispatchMetrics(rec.task_id, rec.dispatch_time, len(rec.leaders), cpt, len(rec.leaders) - cpt, rec.lat)
        )
    return MetricsRecord(nc=len(result.ap.leaders), nat=sum(1 for d in per if d.cpt >= 1), per_dispatch=per)


def metrics_from_trace(events: Iterable[dict], confirmation_window: float) -> MetricsRecord:
    """Rebuild the metrics by replaying trace events in order."""
    registered: set = set()
    dispatches: dict[int, dict] = {}
    open_windows: set[int] = set()
    order: list[int] = []
    for ev in events:
        kind = ev["kind"]
        if kind == "deliver" and ev["to"] == AP_ID:
            msg = ev["detail"]["msg"]
            if msg["type"] == "LeaderRegister":
                registered.add(msg["leader"])
            elif msg["type"] == "TaskAccept":
                tid = msg["task_id"]
                d = dispatches.get(tid)
                if (
                    d is not None
                    and tid in open_windows
                    and ev["t"] <= d["t"] + confirmation_window
                    and msg["leader"] in d["leaders"]
                    and msg["leader"] not in d["accepts"]
                ):
                    d["accepts"][msg["leader"]] = ev["t"]
        elif kind == "task_dispatch":
            tid = ev["detail"]["task"]["task_id"]
            dispatches[tid] = {"t": ev["t"], "leaders": set(ev["detail"]["leaders"]), "accepts": {}}
            open_windows.add(tid)
            order.append(tid)
        elif kind == "window_close":
            open_windows.discard(ev["detail"]["task_id"])
    per = []
    for tid in order:
        d = dispatches[tid]
        cpt = len(d["accepts"])
        lat = max(d["accepts"].values()) - d["t"] if d["accepts"] else None
        per.append(DispatchMetrics(tid, d["t"], len(d["leaders"]), cpt, len(d["leaders"]) - cpt, lat))
    return MetricsRecord(nc=len(registered), nat=sum(1 for d in per if d.cpt >= 1), per_dispatch=per)


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float | None
    sd: float | None
    ci_half: float | None
    min: float | None
    max: float | None


def t_interval(values: Sequence[float], confidence: float = 0.95) -> Summary:
    """Mean, sample SD and Student-t half-width with ``n - 1`` degrees of freedom.

    With fewer than two values the SD and interval are undefined (``None``).
    """
    x = np.asarray([v for v in values if v is not None], dtype=float)
    n = len(x)
    if n == 0:
        return Summary(0, None, None, None, None, None)
    mean = float(x.mean())
    if n < 2:
        return Summary(1, mean, None, None, float(x.min()), float(x.max()))
    sd = float(x.std(ddof=1))
    half = float(stats.t.ppf(0.5 + confidence / 2, n - 1) * sd / math.sqrt(n))
    return Summary(n, mean, sd, half, float(x.min()), float(x.max()))


def aggregate_replications(records: Sequence[MetricsRecord], confidence: float = 0.95) -> dict[str, Summary]:
    values = [r.summary_values() for r in records]
    return {m: t_interval([v[m] for v in values], confidence) for m in SUMMARY_METRICS}


def records_to_csv(records: Sequence[MetricsRecord], reps: Sequence[int] | None = None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for rep, rec in zip(reps if reps is not None else range(len(records)), records):
        w.writerows(rec.csv_rows(rep))
    return buf.getvalue()
