"""Scenario file parsing and validation.

A scenario is a JSON document; :func:`validate_scenario` turns the parsed
mapping into a :class:`~contaski.model.ScenarioConfig` with every default
filled in, or raises :class:`ScenarioError` listing *all* violations found.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

from .model import (
    DEFAULT_UNIVERSE,
    GeneratedNodes,
    NodeSpec,
    Position,
    ProtocolConfig,
    RadioConfig,
    ScenarioConfig,
    TaskGenerator,
    TaskSpec,
)

PRESETS = ("fig2.json", "fig3.json", "paper.plan")


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def load_json(path: str | Path) -> dict[str, Any]:
    """Load a JSON file, falling back to a bundled preset of the same name."""
    p = Path(path)
    if not p.exists() and p.name in PRESETS and str(path) == p.name:
        return json.loads(resources.files("contaski.presets").joinpath(p.name).read_text("utf-8"))
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


def _section(raw: dict, key: str, cls, errors: list[str]):
    data = raw.get(key, {}) or {}
    if not isinstance(data, dict):
        errors.append(f"{key}: expected an object")
        return cls()
    known = cls.__dataclass_fields__
    for k in data:
        if k not in known:
            errors.append(f"{key}: unknown field {k!r}")
    try:
        return cls(**{k: v for k, v in data.items() if k in known})
    except TypeError as exc:
        errors.append(f"{key}: {exc}")
        return cls()


def _check_caps(names, universe: set[str], where: str, errors: list[str]) -> frozenset[str]:
    if isinstance(names, str) or not isinstance(names, (list, tuple)):
        errors.append(f"{where}: capabilities must be a list")
        return frozenset()
    caps = frozenset(names)
    if len(caps) != len(names):
        errors.append(f"{where}: duplicate capability")
    for c in sorted(caps - universe):
        errors.append(f"{where}: capability outside universe: {c!r}")
    return caps


def _parse_pos(raw, where: str, errors: list[str]) -> Position | None:
    if raw is None:
        return None
    if isinstance(raw, dict):
        raw = [raw.get("x"), raw.get("y")]
    try:
        x, y = (float(v) for v in raw)
    except (TypeError, ValueError):
        errors.append(f"{where}: pos must be [x, y]")
        return None
    return Position(x, y)


def _parse_nodes(raw, universe: set[str], width: float, height: float, errors: list[str]):
    if isinstance(raw, dict):
        count = raw.get("count", 0)
        assignment = raw.get("capability_assignment", "random")
        prob = GeneratedNodes.capability_prob
        base: tuple[str, ...] = ()
        if isinstance(assignment, dict):
            if assignment.get("mode", "random") != "random":
                errors.append("nodes: capability_assignment mode must be 'random'")
            prob = assignment.get("prob", prob)
            base = tuple(sorted(_check_caps(assignment.get("base", []), universe, "nodes.capability_assignment.base", errors)))
        elif assignment != "random":
            errors.append("nodes: capability_assignment must be 'random'")
        placement = raw.get("placement", "uniform")
        if placement not in ("uniform", "grid"):
            errors.append(f"nodes: unknown placement {placement!r}")
        if not isinstance(count, int) or count < 1:
            errors.append("empty network")
        if not 0 < prob <= 1:
            errors.append("nodes: capability prob must be in (0, 1]")
        return GeneratedNodes(count=count, placement=placement, capability_prob=prob, base_capabilities=base)

    if not isinstance(raw, list) or not raw:
        errors.append("empty network")
        return ()
    specs = []
    seen: set[int] = set()
    for i, n in enumerate(raw):
        where = f"nodes[{i}]"
        nid = n.get("id")
        if not isinstance(nid, int) or isinstance(nid, bool) or nid < 0:
            errors.append(f"{where}: id must be a non-negative integer")
            continue
        if nid in seen:
            errors.append(f"duplicate NodeId {nid}")
        seen.add(nid)
        caps = _check_caps(n.get("capabilities", []), universe, where, errors)
        if not caps:
            errors.append(f"{where}: node has no capability")
        pos = _parse_pos(n.get("pos"), where, errors)
        if pos is not None and not (0 <= pos.x <= width and 0 <= pos.y <= height):
            errors.append(f"{where}: position outside area")
        specs.append(NodeSpec(nid, caps, pos))
    return tuple(specs)


def _parse_tasks(raw, universe: set[str], errors: list[str]):
    if raw is None:
        raw = {"count": 10}
    if isinstance(raw, dict):
        sched = raw.get("schedule", {}) or {}
        gen = dict(raw.get("generator", {}) or {})
        for key in ("base_required", "extra_pool"):
            if key in gen:
                gen[key] = tuple(sorted(_check_caps(gen[key], universe, f"tasks.generator.{key}", errors)))
        unknown = set(gen) - set(TaskGenerator.__dataclass_fields__)
        for k in sorted(unknown):
            errors.append(f"tasks.generator: unknown field {k!r}")
        spec = TaskGenerator(
            count=raw.get("count", 10),
            start_s=float(sched.get("start_s", 150.0)),
            interval_s=float(sched.get("interval_s", 60.0)),
            **{k: v for k, v in gen.items() if k not in unknown},
        )
        if spec.count < 0:
            errors.append("tasks: negative count")
        if not spec.duration_s > 0:
            errors.append("non-positive duration")
        if spec.quorum < 1:
            errors.append("tasks: quorum must be >= 1")
        if spec.max_extra < 0 or spec.max_extra > len(spec.extra_pool):
            errors.append("tasks: max_extra must be within 0..len(extra_pool)")
        if not spec.base_required and spec.max_extra == 0:
            errors.append("tasks: generated tasks would require no capability")
        for k in sorted(set(spec.base_required) - universe) + sorted(set(spec.extra_pool) - universe):
            errors.append(f"tasks.generator: capability outside universe: {k!r}")
        return spec

    specs = []
    seen: set[int] = set()
    for i, t in enumerate(raw):
        where = f"tasks[{i}]"
        tid = t.get("id")
        if not isinstance(tid, int) or isinstance(tid, bool):
            errors.append(f"{where}: id must be an integer")
            continue
        if tid in seen:
            errors.append(f"duplicate task id {tid}")
        seen.add(tid)
        req = _check_caps(t.get("required", []), universe, where, errors)
        if not req:
            errors.append(f"{where}: empty required set")
        duration = t.get("duration_s", 60.0)
        if not isinstance(duration, (int, float)) or not duration > 0:
            errors.append(f"{where}: non-positive duration")
        quorum = t.get("quorum", 1)
        if not isinstance(quorum, int) or quorum < 1:
            errors.append(f"{where}: quorum must be >= 1")
        at = t.get("dispatch_s")
        specs.append(TaskSpec(tid, req, float(duration) if isinstance(duration, (int, float)) else 0.0, quorum, None if at is None else float(at)))
    return tuple(specs)


def validate_scenario(raw: dict[str, Any]) -> ScenarioConfig:
    """Validate a parsed scenario mapping and fill defaults.

    Raises :class:`ScenarioError` carrying every violation, not only the first.
    """
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ScenarioError(["scenario must be a JSON object"])
    allowed = {
        "name", "seed", "area", "universe", "nodes", "radio", "protocol",
        "tasks", "horizon_s", "max_events", "description",
    }
    for k in sorted(set(raw) - allowed):
        errors.append(f"unknown top-level field {k!r}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        errors.append("seed must be a non-negative integer")
        seed = 0
    area = raw.get("area", {}) or {}
    width = float(area.get("width", 200.0))
    height = float(area.get("height", 200.0))
    if width <= 0 or height <= 0:
        errors.append("area dimensions must be positive")

    universe_list = raw.get("universe", list(DEFAULT_UNIVERSE))
    universe = set(universe_list)
    if len(universe) != len(universe_list) or not universe:
        errors.append("universe must be a non-empty list of distinct names")

    radio = _section(raw, "radio", RadioConfig, errors)
    if not radio.range_m > 0:
        errors.append("radio.range_m must be > 0")
    if not radio.delay_ms > 0:
        errors.append("radio.delay_ms must be > 0")
    for name in ("loss_prob", "ap_loss_prob"):
        if not 0 <= getattr(radio, name) <= 1:
            errors.append(f"radio.{name} must be in [0, 1]")
    if radio.accept_backoff_max_ms < 0:
        errors.append("radio.accept_backoff_max_ms must be >= 0")

    protocol = _section(raw, "protocol", ProtocolConfig, errors)
    if not 0 <= protocol.similarity_threshold <= 1:
        errors.append("protocol.similarity_threshold must be in [0, 1]")
    if protocol.capability_rounds < 1:
        errors.append("protocol.capability_rounds must be >= 1")
    if protocol.confirmation_window_ms <= 0:
        errors.append("protocol.confirmation_window_ms must be > 0")
    if protocol.warmup_s <= 0:
        errors.append("protocol.warmup_s must be > 0")
    period = protocol.warmup_s / (protocol.capability_rounds + 1)
    if not 0 <= protocol.jitter_max_ms / 1000.0 < period / 2:
        errors.append("protocol.jitter_max_ms must be below half the capability round period")

    nodes = _parse_nodes(raw.get("nodes"), universe, width, height, errors)
    tasks = _parse_tasks(raw.get("tasks"), universe, errors)

    horizon = raw.get("horizon_s", 800.0)
    if not isinstance(horizon, (int, float)) or horizon < 0:
        errors.append("horizon_s must be >= 0")
    max_events = raw.get("max_events", 5_000_000)

    if errors:
        raise ScenarioError(errors)
    return ScenarioConfig(
        seed=seed,
        width=width,
        height=height,
        universe=tuple(universe_list),
        nodes=nodes,
        tasks=tasks,
        radio=radio,
        protocol=protocol,
        horizon_s=float(horizon),
        max_events=max_events,
        name=raw.get("name", "scenario"),
    )
