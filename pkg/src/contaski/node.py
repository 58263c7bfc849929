"""Per-node protocol: capability dissemination, clustering, leader election and
the leader/member side of task allocation.

Handlers mutate the :class:`NodeState` they are called on and return a list of
*actions* for the event loop to carry out. They never touch the clock, the
channel or the random stream directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import (
    CapabilityDissemination,
    LeaderRegister,
    LeaderToCluster,
    Message,
    NeighborRecord,
    NodeId,
    Position,
    Task,
    TaskAccept,
)
from .similarity import DEFAULT_THRESHOLD, capability_similarity, required_subset

log = logging.getLogger(__name__)


# --- actions returned to the event loop ---------------------------------------


@dataclass(frozen=True)
class Broadcast:
    """Radio broadcast to every node in range."""

    message: Message


@dataclass(frozen=True)
class SendToAP:
    message: Message
    after: float = 0.0  # local backoff before the frame goes on air


@dataclass(frozen=True)
class StartTask:
    task_id: int
    until: float


@dataclass(frozen=True)
class Note:
    """A trace event the node wants recorded (cluster/leader changes, accepts)."""

    kind: str
    detail: dict[str, Any]


@dataclass(frozen=True)
class Ignored:
    reason: str


Action = Broadcast | SendToAP | StartTask | Note | Ignored


@dataclass
class NodeState:
    id: NodeId
    capabilities: frozenset[str]
    position: Position
    threshold: float = DEFAULT_THRESHOLD
    neighbors: dict[NodeId, NeighborRecord] = field(default_factory=dict)
    cluster: set[NodeId] = field(default_factory=set)
    leader: NodeId | None = None
    registered: bool = False
    running_tasks: dict[int, float] = field(default_factory=dict)
    rounds_sent: int = 0
    registration_open: bool = False

    def __post_init__(self):
        if not self.capabilities:
            raise ValueError(f"node {self.id} has no capability")
        self.cluster.add(self.id)

    # -- cluster configuration ------------------------------------------------

    def send_capability_message(
        self, now: float, round_period: float, jitter_max: float, rng: np.random.Generator
    ) -> tuple[CapabilityDissemination, float]:
        """Announce id, capabilities and neighbourhood size.

        Returns the message and the time of the next round, which is
        ``now + round_period + U(0, jitter_max)`` drawn from ``rng``.
        """
        msg = CapabilityDissemination(self.id, self.capabilities, len(self.neighbors))
        self.rounds_sent += 1
        return msg, now + round_period + float(rng.uniform(0.0, jitter_max))

    def handle_capability_message(self, msg: CapabilityDissemination) -> list[Action]:
        if msg.sender == self.id:
            return [Ignored("own message")]
        sim = capability_similarity(self.capabilities, msg.capabilities)
        self.neighbors[msg.sender] = NeighborRecord(msg.sender, msg.capabilities, msg.neigh_count, sim)
        actions: list[Action] = []
        was_member = msg.sender in self.cluster
        if sim >= self.threshold:
            self.cluster.add(msg.sender)
        else:
            self.cluster.discard(msg.sender)
        if was_member != (msg.sender in self.cluster):
            actions.append(
                Note(
                    "cluster_update",
                    {
                        "node": self.id,
                        "member": msg.sender,
                        "joined": not was_member,
                        "similarity": sim,
                        "cluster": sorted(self.cluster),
                    },
                )
            )
        if self.rounds_sent >= 1:
            actions.extend(self.select_leader())
        return actions

    def neigh_count_of(self, node: NodeId) -> int:
        if node == self.id:
            return len(self.neighbors)
        return self.neighbors[node].neigh_count

    def elect(self) -> NodeId:
        # candidates are self plus similar neighbours; ties go to the lowest id
        return min(self.cluster, key=lambda n: (-self.neigh_count_of(n), n))

    def select_leader(self) -> list[Action]:
        actions: list[Action] = []
        leader = self.elect()
        if leader != self.leader:
            self.leader = leader
            actions.append(Note("leader_elected", {"node": self.id, "leader": leader}))
        if self.registration_open and leader == self.id and not self.registered:
            self.registered = True
            actions.append(SendToAP(LeaderRegister(self.id)))
        return actions

    def open_registration(self) -> list[Action]:
        """Called once the node's dissemination rounds are over."""
        self.registration_open = True
        return self.select_leader()

    # -- task allocation ------------------------------------------------------

    def handle_task_dispatch(self, task: Task, now: float, backoff: float = 0.0) -> list[Action]:
        """Leader-side guard: accept only if capable and the cluster meets quorum.

        A leader that fails either guard stays silent.
        """
        if self.leader != self.id:
            log.warning("node %s got TaskDispatch %s but is not a leader", self.id, task.task_id)
            return [Ignored("dispatch to non-leader")]
        capable = required_subset(task.required, self.capabilities)
        size = len(self.cluster)
        if not (capable and size >= task.quorum):
            return [Ignored("guards failed")]
        accept = Note(
            "task_accept",
            {
                "leader": self.id,
                "task_id": task.task_id,
                "required": sorted(task.required),
                "capabilities": sorted(self.capabilities),
                "cluster_size": size,
                "quorum": task.quorum,
            },
        )
        actions: list[Action] = [
            accept,
            SendToAP(TaskAccept(self.id, task.task_id), after=backoff),
            Broadcast(LeaderToCluster(task.task_id, task.duration)),
        ]
        actions.extend(self._start(task.task_id, now + task.duration))
        return actions

    def handle_leader_to_cluster(self, sender: NodeId, msg: LeaderToCluster, now: float) -> list[Action]:
        if sender != self.leader or sender == self.id:
            return [Ignored("not from this node's leader")]
        return self._start(msg.task_id, now + msg.duration)

    def _start(self, task_id: int, until: float) -> list[Action]:
        if task_id in self.running_tasks:
            return [Ignored("task already running")]
        self.running_tasks[task_id] = until
        return [StartTask(task_id, until)]

    def complete_task(self, task_id: int) -> None:
        self.running_tasks.pop(task_id, None)
