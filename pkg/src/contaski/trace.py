"""Line-delimited JSON trace I/O, filtering and invariant audit."""

from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable
from pathlib import Path
from typing import Any

KINDS = (
    "send",
    "deliver",
    "drop",
    "cluster_update",
    "leader_elected",
    "leader_register",
    "task_dispatch",
    "task_accept",
    "task_start",
    "task_complete",
    "window_close",
)


class TraceError(ValueError):
    pass


def write_trace(lines: Iterable[str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def read_trace(path: str | Path) -> list[dict[str, Any]]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"line {lineno}: not valid JSON ({exc.msg})") from None
            if not isinstance(ev, dict) or not {"t", "kind", "from", "to", "detail"} <= ev.keys():
                raise TraceError(f"line {lineno}: missing trace fields")
            if ev["kind"] not in KINDS:
                raise TraceError(f"line {lineno}: unknown event kind {ev['kind']!r}")
            events.append(ev)
    return events


def _node_matches(ev: dict, node: str) -> bool:
    return str(ev["from"]) == node or str(ev["to"]) == node


def filter_events(
    events: Iterable[dict],
    kind: str | None = None,
    node: str | int | None = None,
    t_from: float | None = None,
    t_to: float | None = None,
) -> list[dict]:
    node_s = None if node is None else str(node)
    out = []
    for ev in events:
        if kind is not None and ev["kind"] != kind:
            continue
        if node_s is not None and not _node_matches(ev, node_s):
            continue
        if t_from is not None and ev["t"] < t_from:
            continue
        if t_to is not None and ev["t"] > t_to:
            continue
        out.append(ev)
    return out


def format_event(ev: dict) -> str:
    src = "-" if ev["from"] is None else ev["from"]
    dst = "-" if ev["to"] is None else ev["to"]
    detail = json.dumps(ev["detail"], separators=(",", ":"), sort_keys=True)
    return f"{ev['t']:12.6f}  {ev['kind']:<15} {src!s:>4} -> {dst!s:<4} {detail}"


def audit(events: list[dict]) -> list[str]:
    """Replay protocol invariants over a trace; returns violation messages."""
    violations: list[str] = []
    last_t = float("-inf")
    leader_of: dict[Any, Any] = {}
    vetted_accepts: set[tuple[Any, int]] = set()
    sends: dict[int, tuple[float, int]] = {}
    outcomes: dict[int, int] = defaultdict(int)
    dispatched: dict[int, float] = {}
    closed: set[int] = set()
    end_t = events[-1]["t"] if events else 0.0

    for i, ev in enumerate(events, start=1):
        t, kind, d = ev["t"], ev["kind"], ev["detail"]
        if t < last_t:
            violations.append(f"event {i}: time {t} goes backwards (previous {last_t})")
        last_t = max(last_t, t)

        if kind == "leader_elected":
            leader_of[d["node"]] = d["leader"]
        elif kind == "leader_register":
            if leader_of.get(ev["from"]) != ev["from"]:
                violations.append(f"event {i}: node {ev['from']} registered without electing itself")
        elif kind == "task_accept":
            if not set(d["required"]) <= set(d["capabilities"]):
                violations.append(f"event {i}: leader {d['leader']} accepted task {d['task_id']} without capabilities")
            if d["cluster_size"] < d["quorum"]:
                violations.append(f"event {i}: leader {d['leader']} accepted task {d['task_id']} below quorum")
            if leader_of.get(d["leader"]) != d["leader"]:
                violations.append(f"event {i}: non-leader {d['leader']} accepted task {d['task_id']}")
            vetted_accepts.add((d["leader"], d["task_id"]))
        elif kind == "send":
            sends[d["mid"]] = (t, d["in_range"])
            msg = d["msg"]
            if msg["type"] == "TaskAccept" and (msg["leader"], msg["task_id"]) not in vetted_accepts:
                violations.append(f"event {i}: TaskAccept from {msg['leader']} without a guarded accept")
        elif kind in ("deliver", "drop"):
            mid = d["mid"]
            if mid not in sends:
                violations.append(f"event {i}: {kind} of unknown message {mid}")
                continue
            if kind == "deliver" and t < sends[mid][0]:
                violations.append(f"event {i}: message {mid} delivered before it was sent")
            outcomes[mid] += 1
        elif kind == "task_dispatch":
            tid = d["task"]["task_id"]
            if tid in dispatched:
                violations.append(f"event {i}: task {tid} dispatched twice")
            dispatched[tid] = t
        elif kind == "window_close":
            tid = d["task_id"]
            if tid not in dispatched:
                violations.append(f"event {i}: window closed for undispatched task {tid}")
            if tid in closed:
                violations.append(f"event {i}: window for task {tid} closed twice")
            closed.add(tid)
            expected = "completed" if d["accepts"] else "unallocated"
            if d["status"] != expected:
                violations.append(f"event {i}: task {tid} closed as {d['status']}, expected {expected}")

    for mid, (t, in_range) in sends.items():
        n = outcomes.get(mid, 0)
        # copies still in flight at the horizon cannot be accounted for
        if n > in_range or (n < in_range and t < end_t - 1.0):
            violations.append(f"message {mid}: {n} outcomes for {in_range} copies")
    return violations
