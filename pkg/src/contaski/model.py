"""Domain types shared by the protocol state machines, the simulator and metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Union

DEFAULT_UNIVERSE: tuple[str, ...] = (
    "temperature",
    "humidity",
    "presence",
    "light",
    "machine-status",
    "pressure",
    "reservoir-level",
)

CapabilitySet = frozenset  # frozenset[str]; names drawn from the scenario universe
NodeId = int
AP_ID = "AP"


def capset(names) -> frozenset[str]:
    return frozenset(names)


def _caps_out(caps: frozenset[str]) -> list[str]:
    return sorted(caps)


class ModelError(ValueError):
    pass


class IllegalTransition(ModelError):
    pass


class TaskStatus(str, Enum):
    PENDING = "pending"
    DISPATCHED = "dispatched"
    COMPLETED = "completed"
    UNALLOCATED = "unallocated"


_LEGAL = {
    (TaskStatus.PENDING, TaskStatus.DISPATCHED),
    (TaskStatus.DISPATCHED, TaskStatus.COMPLETED),
    (TaskStatus.DISPATCHED, TaskStatus.UNALLOCATED),
}


def transition(current: TaskStatus, new: TaskStatus) -> TaskStatus:
    """Return ``new`` if ``current -> new`` is a legal task lifecycle step."""
    if (current, new) not in _LEGAL:
        raise IllegalTransition(f"illegal task transition {current.value} -> {new.value}")
    return new


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance(self, other: Position) -> float:
        return ((self.x - other.x) ** 2 + (self.y - other.y) ** 2) ** 0.5


@dataclass(frozen=True)
class Task:
    task_id: int
    required: frozenset[str]
    duration: float
    quorum: int = 1

    def __post_init__(self):
        if not self.required:
            raise ModelError("task requires at least one capability")
        if not self.duration > 0:
            raise ModelError("non-positive duration")
        if self.quorum < 1:
            raise ModelError("quorum must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "required": _caps_out(self.required),
            "duration": self.duration,
            "quorum": self.quorum,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Task:
        return cls(d["task_id"], frozenset(d["required"]), d["duration"], d["quorum"])


# --- the five protocol messages ---------------------------------------------


@dataclass(frozen=True)
class CapabilityDissemination:
    sender: NodeId
    capabilities: frozenset[str]
    neigh_count: int


@dataclass(frozen=True)
class LeaderRegister:
    leader: NodeId


@dataclass(frozen=True)
class TaskDispatch:
    task: Task


@dataclass(frozen=True)
class TaskAccept:
    leader: NodeId
    task_id: int


@dataclass(frozen=True)
class LeaderToCluster:
    task_id: int
    duration: float


Message = Union[CapabilityDissemination, LeaderRegister, TaskDispatch, TaskAccept, LeaderToCluster]
MESSAGE_TYPES = (CapabilityDissemination, LeaderRegister, TaskDispatch, TaskAccept, LeaderToCluster)
_BY_NAME = {t.__name__: t for t in MESSAGE_TYPES}


def encode_message(msg: Message) -> dict[str, Any]:
    name = type(msg).__name__
    if isinstance(msg, CapabilityDissemination):
        body = {
            "sender": msg.sender,
            "capabilities": _caps_out(msg.capabilities),
            "neigh_count": msg.neigh_count,
        }
    elif isinstance(msg, LeaderRegister):
        body = {"leader": msg.leader}
    elif isinstance(msg, TaskDispatch):
        body = {"task": msg.task.to_dict()}
    elif isinstance(msg, TaskAccept):
        body = {"leader": msg.leader, "task_id": msg.task_id}
    elif isinstance(msg, LeaderToCluster):
        body = {"task_id": msg.task_id, "duration": msg.duration}
    else:
        raise ModelError(f"not a protocol message: {msg!r}")
    return {"type": name, **body}


def decode_message(d: dict[str, Any]) -> Message:
    d = dict(d)
    try:
        cls = _BY_NAME[d.pop("type")]
    except KeyError as exc:
        raise ModelError(f"unknown message type in {d!r}") from exc
    if cls is CapabilityDissemination:
        return cls(d["sender"], frozenset(d["capabilities"]), d["neigh_count"])
    if cls is TaskDispatch:
        return cls(Task.from_dict(d["task"]))
    return cls(**d)


@dataclass
class NeighborRecord:
    id: NodeId
    capabilities: frozenset[str]
    neigh_count: int
    similarity: float = field(default=0.0)


# --- scenario configuration ---------------------------------------------------


@dataclass(frozen=True)
class RadioConfig:
    range_m: float = 50.0
    delay_ms: float = 2.0
    loss_prob: float = 0.0
    ap_loss_prob: float = 0.0
    # uniform [0, max] contention backoff a leader waits before sending TaskAccept
    accept_backoff_max_ms: float = 40.0


@dataclass(frozen=True)
class ProtocolConfig:
    similarity_threshold: float = 0.65
    capability_rounds: int = 3
    jitter_max_ms: float = 1000.0
    confirmation_window_ms: float = 5000.0
    warmup_s: float = 150.0


@dataclass(frozen=True)
class NodeSpec:
    id: NodeId
    capabilities: frozenset[str]
    pos: Position | None = None


@dataclass(frozen=True)
class GeneratedNodes:
    count: int
    placement: str = "uniform"
    capability_prob: float = 0.5
    base_capabilities: tuple[str, ...] = ()


@dataclass(frozen=True)
class TaskSpec:
    id: int
    required: frozenset[str]
    duration_s: float
    quorum: int = 1
    dispatch_s: float | None = None


@dataclass(frozen=True)
class TaskGenerator:
    count: int = 10
    start_s: float = 150.0
    interval_s: float = 60.0
    base_required: tuple[str, ...] = ("temperature", "humidity", "presence")
    extra_pool: tuple[str, ...] = ("light", "machine-status", "pressure", "reservoir-level")
    max_extra: int = 4
    duration_s: float = 60.0
    quorum: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    width: float
    height: float
    universe: tuple[str, ...]
    nodes: tuple[NodeSpec, ...] | GeneratedNodes
    tasks: tuple[TaskSpec, ...] | TaskGenerator
    radio: RadioConfig = RadioConfig()
    protocol: ProtocolConfig = ProtocolConfig()
    horizon_s: float = 800.0
    max_events: int = 5_000_000
    name: str = "scenario"

    def replace(self, **changes) -> ScenarioConfig:
        from dataclasses import replace

        return replace(self, **changes)
