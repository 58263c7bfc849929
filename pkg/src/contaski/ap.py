"""Access point: leader registry, sequential task dispatch and the accept ledger."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import (
    LeaderRegister,
    NodeId,
    Task,
    TaskAccept,
    TaskGenerator,
    TaskSpec,
    TaskStatus,
    transition,
)

log = logging.getLogger(__name__)


@dataclass
class DispatchRecord:
    task_id: int
    dispatch_time: float
    leaders: tuple[NodeId, ...]
    accepts: list[tuple[NodeId, float]] = field(default_factory=list)
    window_close: float | None = None
    final_status: TaskStatus = TaskStatus.DISPATCHED

    @property
    def lat(self) -> float | None:
        """Dispatch-to-last-accept latency in seconds, ``None`` without accepts."""
        if not self.accepts:
            return None
        return max(t for _, t in self.accepts) - self.dispatch_time

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "dispatch_time": self.dispatch_time,
            "leaders": list(self.leaders),
            "accepts": [[n, t] for n, t in self.accepts],
            "window_close": self.window_close,
            "final_status": self.final_status.value,
            "lat": self.lat,
        }


@dataclass
class ScheduledTask:
    task: Task
    at: float
    status: TaskStatus = TaskStatus.PENDING


@dataclass
class ApState:
    confirmation_window: float = 5.0
    leaders: set[NodeId] = field(default_factory=set)
    task_list: list[ScheduledTask] = field(default_factory=list)
    dispatch_log: dict[int, DispatchRecord] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.task.task_id for s in self.task_list]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate task id in task list")

    def status(self, task_id: int) -> TaskStatus:
        for s in self.task_list:
            if s.task.task_id == task_id:
                return s.status
        raise KeyError(task_id)

    def _set_status(self, task_id: int, new: TaskStatus) -> None:
        for s in self.task_list:
            if s.task.task_id == task_id:
                s.status = transition(s.status, new)
                return
        raise KeyError(task_id)

    @property
    def pending(self) -> list[ScheduledTask]:
        return [s for s in self.task_list if s.status is TaskStatus.PENDING]

    def handle_leader_register(self, msg: LeaderRegister) -> None:
        self.leaders.add(msg.leader)

    def dispatch_task(self, now: float) -> tuple[Task, tuple[NodeId, ...]] | None:
        """Dispatch the first pending task to a snapshot of the registered leaders.

        Returns the task and the leaders that get a TaskDispatch copy, or
        ``None`` if nothing is pending. With no leaders registered the task is
        closed as unallocated on the spot.
        """
        pending = self.pending
        if not pending:
            return None
        entry = pending[0]
        task = entry.task
        leaders = tuple(sorted(self.leaders))
        self._set_status(task.task_id, TaskStatus.DISPATCHED)
        self.dispatch_log[task.task_id] = DispatchRecord(task.task_id, now, leaders)
        if not leaders:
            log.info("task %s dispatched with no registered leader", task.task_id)
            self.close_confirmation_window(task.task_id, now)
        return task, leaders

    def handle_task_accept(self, msg: TaskAccept, now: float) -> bool:
        """Record an accept; returns whether it was counted."""
        rec = self.dispatch_log.get(msg.task_id)
        if rec is None:
            self.violations.append(f"accept for unknown task {msg.task_id} from {msg.leader}")
            log.warning(self.violations[-1])
            return False
        if rec.window_close is not None or now > rec.dispatch_time + self.confirmation_window:
            log.info("late accept for task %s from %s ignored", msg.task_id, msg.leader)
            return False
        if msg.leader not in rec.leaders:
            self.violations.append(f"accept for task {msg.task_id} from unregistered {msg.leader}")
            log.warning(self.violations[-1])
            return False
        if any(n == msg.leader for n, _ in rec.accepts):
            return False
        rec.accepts.append((msg.leader, now))
        return True

    def close_confirmation_window(self, task_id: int, now: float) -> DispatchRecord:
        rec = self.dispatch_log[task_id]
        rec.window_close = now
        rec.final_status = TaskStatus.COMPLETED if rec.accepts else TaskStatus.UNALLOCATED
        self._set_status(task_id, rec.final_status)
        return rec


def generate_tasks(spec: TaskGenerator, rng: np.random.Generator) -> list[tuple[Task, float]]:
    """Draw ``spec.count`` tasks: the base set plus a subset of the extra pool
    chosen uniformly among subsets of at most ``max_extra`` elements."""
    out = []
    pool = list(spec.extra_pool)
    for i in range(spec.count):
        while True:
            mask = rng.random(len(pool)) < 0.5
            if mask.sum() <= spec.max_extra and (spec.base_required or mask.any()):
                break
        extra = [c for c, keep in zip(pool, mask) if keep]
        task = Task(i + 1, frozenset(spec.base_required) | frozenset(extra), spec.duration_s, spec.quorum)
        out.append((task, spec.start_s + i * spec.interval_s))
    return out


def explicit_tasks(specs: tuple[TaskSpec, ...], start_s: float, interval_s: float = 60.0):
    out = []
    for i, s in enumerate(specs):
        at = s.dispatch_s if s.dispatch_s is not None else start_s + i * interval_s
        out.append((Task(s.id, s.required, s.duration_s, s.quorum), at))
    return sorted(out, key=lambda pair: pair[1])
