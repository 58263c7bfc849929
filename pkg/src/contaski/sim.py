"""Seeded discrete-event simulator for the clustering and task-allocation protocol.

The radio is a unit disk with a fixed per-hop delay and independent Bernoulli
loss. The access point reaches every node regardless of range. All randomness
comes from named sub-streams of one seed, so the trace is a pure function of
the scenario.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .ap import ApState, ScheduledTask, explicit_tasks, generate_tasks
from .model import (
    AP_ID,
    CapabilityDissemination,
    GeneratedNodes,
    LeaderRegister,
    LeaderToCluster,
    Message,
    NodeId,
    Position,
    ScenarioConfig,
    TaskAccept,
    TaskDispatch,
    encode_message,
)
from .node import Broadcast, Ignored, NodeState, Note, SendToAP, StartTask

STREAMS = ("placement", "capabilities", "jitter", "loss", "backoff", "tasks")


class SimulationOverflow(RuntimeError):
    """The event queue processed more events than the configured cap."""


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """One generator per named purpose, each keyed on ``(seed, crc32(name))``."""
    return {
        name: np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, zlib.crc32(name.encode())])))
        for name in STREAMS
    }


def place_nodes(
    strategy: str,
    count: int,
    width: float,
    height: float,
    rng: np.random.Generator | None = None,
    explicit: list[Position] | None = None,
) -> list[Position]:
    if count < 1:
        raise ValueError("count must be >= 1")
    if strategy == "explicit":
        if explicit is None or len(explicit) != count:
            raise ValueError("explicit position list length does not match count")
        return list(explicit)
    if strategy == "uniform":
        xy = rng.uniform(0.0, 1.0, size=(count, 2))
        return [Position(float(x * width), float(y * height)) for x, y in xy]
    if strategy == "grid":
        k = math.ceil(math.sqrt(count))
        dx, dy = width / k, height / k
        return [Position((i % k + 0.5) * dx, (i // k + 0.5) * dy) for i in range(count)]
    raise ValueError(f"unknown placement strategy {strategy!r}")


def adjacency(positions: dict[NodeId, Position], range_m: float) -> dict[NodeId, set[NodeId]]:
    """Ground-truth unit-disk neighbourhoods (distance <= range)."""
    ids = sorted(positions)
    adj: dict[NodeId, set[NodeId]] = {i: set() for i in ids}
    for a in ids:
        for b in ids:
            if a < b and positions[a].distance(positions[b]) <= range_m:
                adj[a].add(b)
                adj[b].add(a)
    return adj


@dataclass
class RunResult:
    config: ScenarioConfig
    nodes: dict[NodeId, NodeState]
    ap: ApState
    trace: list[dict[str, Any]]
    positions: dict[NodeId, Position]
    events_processed: int = 0

    def trace_lines(self) -> list[str]:
        return [json.dumps(ev, separators=(",", ":")) for ev in self.trace]

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.trace_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass(order=True)
class _Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    args: tuple = field(compare=False, default=())


class Simulator:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.rng = rng_streams(config.seed)
        self.delay = config.radio.delay_ms / 1000.0
        self.now = 0.0
        self._queue: list[_Event] = []
        self._seq = 0
        self._mid = 0
        self.trace: list[dict[str, Any]] = []
        self.events_processed = 0

        proto = config.protocol
        self.round_period = proto.warmup_s / (proto.capability_rounds + 1)
        self.jitter_max = proto.jitter_max_ms / 1000.0
        self.positions, caps = self._build_network()
        self.nodes = {
            nid: NodeState(nid, caps[nid], self.positions[nid], threshold=proto.similarity_threshold)
            for nid in sorted(self.positions)
        }
        self.neighbors_of = adjacency(self.positions, config.radio.range_m)

        if isinstance(config.tasks, tuple):
            schedule = explicit_tasks(config.tasks, proto.warmup_s)
        else:
            schedule = generate_tasks(config.tasks, self.rng["tasks"])
        self.ap = ApState(
            confirmation_window=proto.confirmation_window_ms / 1000.0,
            task_list=[ScheduledTask(t, at) for t, at in schedule],
        )

    # -- setup ----------------------------------------------------------------

    def _build_network(self) -> tuple[dict[NodeId, Position], dict[NodeId, frozenset[str]]]:
        cfg = self.config
        if isinstance(cfg.nodes, GeneratedNodes):
            spec = cfg.nodes
            pos = place_nodes(spec.placement, spec.count, cfg.width, cfg.height, self.rng["placement"])
            rng = self.rng["capabilities"]
            caps = {}
            for nid in range(spec.count):
                chosen: list[str] = []
                while not chosen:
                    draw = rng.random(len(cfg.universe))
                    chosen = [
                        c
                        for c, u in zip(cfg.universe, draw)
                        if c in spec.base_capabilities or u < spec.capability_prob
                    ]
                caps[nid] = frozenset(chosen)
            return dict(enumerate(pos)), caps
        positions = {}
        missing = [n.id for n in cfg.nodes if n.pos is None]
        if missing:
            drawn = place_nodes("uniform", len(missing), cfg.width, cfg.height, self.rng["placement"])
            positions.update(zip(missing, drawn))
        for n in cfg.nodes:
            if n.pos is not None:
                positions[n.id] = n.pos
        return positions, {n.id: n.capabilities for n in cfg.nodes}

    # -- queue and trace ------------------------------------------------------

    def schedule(self, time: float, kind: str, *args) -> None:
        if time < self.now:
            raise RuntimeError("attempt to schedule an event in the past")
        self._seq += 1
        heapq.heappush(self._queue, _Event(time, self._seq, kind, args))

    def record(self, kind: str, src, dst, detail: dict[str, Any]) -> dict[str, Any]:
        ev = {"t": self.now, "kind": kind, "from": src, "to": dst, "detail": detail}
        self.trace.append(ev)
        return ev

    # -- channel --------------------------------------------------------------

    def _lost(self, prob: float) -> bool:
        # always draw so the loss stream advances identically whatever prob is
        return bool(self.rng["loss"].random() < prob)

    def deliver_broadcast(self, sender: NodeId, msg: Message) -> list[NodeId]:
        """Send ``msg`` to every node within range of ``sender``.

        Returns the recipients whose copy survived the loss draw; each is
        delivered ``delay`` seconds from now.
        """
        self._mid += 1
        mid = self._mid
        in_range = sorted(self.neighbors_of[sender])
        self.record(
            "send",
            sender,
            "*",
            {
                "mid": mid,
                "msg": encode_message(msg),
                "in_range": len(in_range),
                "out_of_range": len(self.nodes) - 1 - len(in_range),
            },
        )
        survivors = []
        for r in in_range:
            if self._lost(self.config.radio.loss_prob):
                self.record("drop", sender, r, {"mid": mid, "reason": "loss"})
            else:
                survivors.append(r)
                self.schedule(self.now + self.delay, "deliver", sender, r, msg, mid)
        return survivors

    def deliver_unicast(self, sender, recipient, msg: Message) -> bool:
        """Directed message; links touching the AP ignore range."""
        self._mid += 1
        mid = self._mid
        self.record("send", sender, recipient, {"mid": mid, "msg": encode_message(msg), "in_range": 1, "out_of_range": 0})
        if AP_ID in (sender, recipient):
            prob = self.config.radio.ap_loss_prob
        else:
            prob = self.config.radio.loss_prob
            if recipient not in self.neighbors_of[sender]:
                self.record("drop", sender, recipient, {"mid": mid, "reason": "out_of_range"})
                return False
        if self._lost(prob):
            self.record("drop", sender, recipient, {"mid": mid, "reason": "loss"})
            return False
        self.schedule(self.now + self.delay, "deliver", sender, recipient, msg, mid)
        return True

    # -- action plumbing ------------------------------------------------------

    def _apply(self, node: NodeState, actions, deliver_ev: dict | None = None) -> None:
        for a in actions:
            if isinstance(a, Note):
                self.record(a.kind, node.id, AP_ID if a.kind == "task_accept" else None, a.detail)
            elif isinstance(a, Broadcast):
                self.deliver_broadcast(node.id, a.message)
            elif isinstance(a, SendToAP):
                if a.after > 0:
                    self.schedule(self.now + a.after, "send_ap", node.id, a.message)
                else:
                    self._send_to_ap(node.id, a.message)
            elif isinstance(a, StartTask):
                self.record("task_start", node.id, None, {"task_id": a.task_id, "until": a.until})
                self.schedule(a.until, "complete", node.id, a.task_id)
            elif isinstance(a, Ignored) and deliver_ev is not None:
                deliver_ev["detail"]["ignored"] = a.reason

    def _send_to_ap(self, nid: NodeId, msg: Message) -> None:
        if isinstance(msg, LeaderRegister):
            self.record("leader_register", nid, AP_ID, {"leader": msg.leader})
        self.deliver_unicast(nid, AP_ID, msg)

    # -- event handlers -------------------------------------------------------

    def _on_cap_round(self, nid: NodeId) -> None:
        node = self.nodes[nid]
        msg, next_time = node.send_capability_message(self.now, self.round_period, self.jitter_max, self.rng["jitter"])
        self.deliver_broadcast(nid, msg)
        # the node's own round counts for the "one round completed" precondition
        if node.rounds_sent == 1 and node.leader is None:
            self._apply(node, node.select_leader())
        if node.rounds_sent < self.config.protocol.capability_rounds:
            self.schedule(next_time, "cap_round", nid)
        else:
            self.schedule(next_time, "open_registration", nid)

    def _on_deliver(self, sender, recipient, msg: Message, mid: int) -> None:
        ev = self.record("deliver", sender, recipient, {"mid": mid, "msg": encode_message(msg)})
        if recipient == AP_ID:
            if isinstance(msg, LeaderRegister):
                self.ap.handle_leader_register(msg)
            elif isinstance(msg, TaskAccept):
                ev["detail"]["counted"] = self.ap.handle_task_accept(msg, self.now)
            return
        node = self.nodes[recipient]
        if isinstance(msg, CapabilityDissemination):
            self._apply(node, node.handle_capability_message(msg), ev)
        elif isinstance(msg, TaskDispatch):
            backoff = float(self.rng["backoff"].uniform(0.0, self.config.radio.accept_backoff_max_ms / 1000.0))
            self._apply(node, node.handle_task_dispatch(msg.task, self.now, backoff), ev)
        elif isinstance(msg, LeaderToCluster):
            self._apply(node, node.handle_leader_to_cluster(sender, msg, self.now), ev)

    def _on_dispatch(self) -> None:
        out = self.ap.dispatch_task(self.now)
        if out is None:
            return
        task, leaders = out
        self.record("task_dispatch", AP_ID, None, {"task": task.to_dict(), "leaders": list(leaders)})
        if not leaders:
            self._record_window(task.task_id)
            return
        for leader in leaders:
            self.deliver_unicast(AP_ID, leader, TaskDispatch(task))
        self.schedule(self.now + self.ap.confirmation_window, "window", task.task_id)

    def _record_window(self, task_id: int) -> None:
        rec = self.ap.dispatch_log[task_id]
        self.record(
            "window_close",
            AP_ID,
            None,
            {
                "task_id": task_id,
                "status": rec.final_status.value,
                "accepts": [[n, t] for n, t in rec.accepts],
                "lat": rec.lat,
            },
        )

    def _on_window(self, task_id: int) -> None:
        self.ap.close_confirmation_window(task_id, self.now)
        self._record_window(task_id)

    def _on_complete(self, nid: NodeId, task_id: int) -> None:
        self.nodes[nid].complete_task(task_id)
        self.record("task_complete", nid, None, {"task_id": task_id})

    # -- main loop ------------------------------------------------------------

    def run(self) -> RunResult:
        jitter = self.rng["jitter"]
        for nid in self.nodes:
            self.schedule(float(jitter.uniform(0.0, self.jitter_max)), "cap_round", nid)
        for entry in self.ap.task_list:
            self.schedule(entry.at, "dispatch")

        handlers = {
            "cap_round": self._on_cap_round,
            "open_registration": lambda nid: self._apply(self.nodes[nid], self.nodes[nid].open_registration()),
            "deliver": self._on_deliver,
            "send_ap": self._send_to_ap,
            "dispatch": self._on_dispatch,
            "window": self._on_window,
            "complete": self._on_complete,
        }
        horizon = self.config.horizon_s
        while self._queue and self._queue[0].time < horizon:
            ev = heapq.heappop(self._queue)
            self.now = ev.time
            self.events_processed += 1
            if self.events_processed > self.config.max_events:
                raise SimulationOverflow(f"more than {self.config.max_events} events processed")
            handlers[ev.kind](*ev.args)
        return RunResult(self.config, self.nodes, self.ap, self.trace, self.positions, self.events_processed)


def run(config: ScenarioConfig) -> RunResult:
    return Simulator(config).run()
