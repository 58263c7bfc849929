import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contaski.config import validate_scenario
from contaski.model import AP_ID, LeaderRegister, Position, TaskDispatch, Task
from contaski.similarity import capability_similarity
from contaski.sim import Simulator, SimulationOverflow, adjacency, place_nodes, run
from contaski.trace import audit


def star(offsets, loss=0.0, ap_loss=0.0, width=200):
    """Node 0 at the centre, node i at (100 + dx, 100)."""
    nodes = [{"id": 0, "pos": [100, 100], "capabilities": ["C1"]}]
    nodes += [{"id": i + 1, "pos": [100 + dx, 100], "capabilities": ["C1"]} for i, dx in enumerate(offsets)]
    return validate_scenario({
        "seed": 5,
        "area": {"width": width, "height": 200},
        "universe": ["C1"],
        "nodes": nodes,
        "radio": {"range_m": 50, "delay_ms": 2, "loss_prob": loss, "ap_loss_prob": ap_loss},
        "tasks": [],
    })


def queued(sim):
    return sorted((ev.time, ev.args[1]) for ev in sim._queue if ev.kind == "deliver")


def test_broadcast_lossless():
    sim = Simulator(star([10, -20, 30]))
    sim.now = 12.0
    assert sim.deliver_broadcast(0, LeaderRegister(0)) == [1, 2, 3]
    assert queued(sim) == [(12.002, 1), (12.002, 2), (12.002, 3)]


def test_broadcast_total_loss():
    sim = Simulator(star([10, -20, 30], loss=1.0))
    assert sim.deliver_broadcast(0, LeaderRegister(0)) == []
    assert queued(sim) == []
    assert [ev["kind"] for ev in sim.trace] == ["send", "drop", "drop", "drop"]


def test_disk_boundary():
    sim = Simulator(star([50.0, 50.01]))
    assert sim.deliver_broadcast(0, LeaderRegister(0)) == [1]
    assert sim.trace[0]["detail"]["out_of_range"] == 1


def test_unicast_to_ap():
    sim = Simulator(star([10]))
    sim.now = 40.0
    assert sim.deliver_unicast(1, AP_ID, LeaderRegister(1))
    assert queued(sim) == [(40.002, AP_ID)]


def test_unicast_loss_is_traced():
    sim = Simulator(star([10], ap_loss=1.0))
    assert not sim.deliver_unicast(1, AP_ID, LeaderRegister(1))
    assert sim.trace[-1]["kind"] == "drop" and sim.trace[-1]["detail"]["reason"] == "loss"


def test_ap_reaches_far_nodes():
    sim = Simulator(star([10, 2000], width=2200))
    assert sim.deliver_unicast(AP_ID, 2, TaskDispatch(Task(1, frozenset({"C1"}), 60.0)))
    assert queued(sim) == [(0.002, 2)]


def test_grid_four():
    assert place_nodes("grid", 4, 200, 200) == [
        Position(50, 50), Position(150, 50), Position(50, 150), Position(150, 150)
    ]


def test_grid_single_centered():
    assert place_nodes("grid", 1, 200, 200) == [Position(100, 100)]


def test_explicit_length_mismatch():
    with pytest.raises(ValueError):
        place_nodes("explicit", 3, 200, 200, explicit=[Position(0, 0)])


def test_uniform_within_area():
    pts = place_nodes("uniform", 500, 200, 100, np.random.default_rng(0))
    assert all(0 <= p.x <= 200 and 0 <= p.y <= 100 for p in pts)


def test_fig2_adjacency_matches_dashed_edges(fig2):
    sim = Simulator(fig2)
    assert sim.neighbors_of == {0: {1}, 1: {0, 2, 3}, 2: {1, 3}, 3: {1, 2}}


def test_fig2_run(fig2):
    result = run(fig2)
    assert {n: s.leader for n, s in result.nodes.items()} == {0: 1, 1: 1, 2: 1, 3: 1}
    assert result.ap.leaders == {1}
    regs = [ev for ev in result.trace if ev["kind"] == "leader_register"]
    assert [ev["from"] for ev in regs] == [1]
    assert audit(result.trace) == []


def test_zero_horizon(fig3):
    result = run(dataclasses.replace(fig3, horizon_s=0.0))
    assert result.trace == []
    assert all(s.status.value == "pending" for s in result.ap.task_list)


def test_same_seed_same_digest(fig3):
    assert run(fig3).digest() == run(fig3).digest()


def test_seed_changes_trace(fig3):
    assert run(fig3).digest() != run(dataclasses.replace(fig3, seed=fig3.seed + 1)).digest()


def test_causality_and_conservation(fig3):
    result = run(dataclasses.replace(fig3, radio=dataclasses.replace(fig3.radio, loss_prob=0.3)))
    times = [ev["t"] for ev in result.trace]
    assert times == sorted(times)
    assert audit(result.trace) == []


def test_overflow_guard(fig2):
    with pytest.raises(SimulationOverflow):
        run(dataclasses.replace(fig2, max_events=10))


def random_scenario(seed, count=30):
    return validate_scenario({
        "seed": seed,
        "nodes": {"count": count, "placement": "uniform"},
        "tasks": {"count": 2},
        "horizon_s": 300,
    })


def test_adjacency_brute_force():
    rng = np.random.default_rng(11)
    pts = {i: Position(*rng.uniform(0, 200, 2)) for i in range(60)}
    adj = adjacency(pts, 50)
    for a in pts:
        expect = {b for b in pts if b != a and math.hypot(pts[a].x - pts[b].x, pts[a].y - pts[b].y) <= 50}
        assert adj[a] == expect


@pytest.mark.parametrize("seed", range(5))
def test_cluster_soundness(seed):
    result = run(random_scenario(seed))
    th = result.config.protocol.similarity_threshold
    for nid, node in result.nodes.items():
        assert set(node.neighbors) <= set(result.nodes) - {nid}
        for other, rec in node.neighbors.items():
            assert rec.similarity == capability_similarity(node.capabilities, rec.capabilities)
            assert (other in node.cluster) == (rec.similarity >= th)
        assert nid in node.cluster


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_lossless_neighbour_tables_match_geometry(seed):
    result = run(random_scenario(seed, count=25))
    adj = adjacency(result.positions, result.config.radio.range_m)
    assert {n: set(s.neighbors) for n, s in result.nodes.items()} == adj
