import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contaski.model import CapabilityDissemination, LeaderRegister, LeaderToCluster, Position, Task, TaskAccept
from contaski.node import Broadcast, Ignored, NodeState, Note, SendToAP, StartTask

A, B, C, D = 0, 1, 2, 3
CAPS = {A: {"C1", "C2"}, B: {"C1", "C2", "C3"}, C: {"C1", "C2"}, D: {"C1", "C2"}}
# four-node radio graph: B hears everybody, C and D hear each other
EDGES = {A: [B], B: [A, C, D], C: [B, D], D: [B, C]}


def node(nid, caps, threshold=0.65):
    return NodeState(nid, frozenset(caps), Position(0, 0), threshold=threshold)


def announce(sender, count):
    return CapabilityDissemination(sender, frozenset(CAPS[sender]), count)


def fig2_states():
    states = {n: node(n, CAPS[n]) for n in CAPS}
    for s in states.values():
        s.rounds_sent = 1
    for _ in range(2):  # two rounds: the second carries complete neighbour counts
        msgs = [(s, announce(s, len(states[s].neighbors))) for s in CAPS]
        for sender, msg in msgs:
            for r in EDGES[sender]:
                states[r].handle_capability_message(msg)
    return states


def test_fresh_node_announces_zero_neighbours():
    a = node(A, CAPS[A])
    msg, _ = a.send_capability_message(0.0, 37.5, 1.0, np.random.default_rng(0))
    assert msg == CapabilityDissemination(A, frozenset({"C1", "C2"}), 0)


def test_b_announces_three_after_hearing_everyone():
    b = node(B, CAPS[B])
    for s in (A, C, D):
        b.handle_capability_message(announce(s, 1))
    msg, _ = b.send_capability_message(10.0, 37.5, 1.0, np.random.default_rng(0))
    assert msg == CapabilityDissemination(B, frozenset({"C1", "C2", "C3"}), 3)


def test_jitter_reproducible():
    draws = []
    for _ in range(2):
        a = node(A, CAPS[A])
        _, t = a.send_capability_message(5.0, 37.5, 1.0, np.random.default_rng(42))
        draws.append(t)
    assert draws[0] == draws[1]
    assert 42.5 <= draws[0] <= 43.5


def test_similar_sender_joins_cluster():
    a = node(A, CAPS[A])
    a.handle_capability_message(announce(B, 0))
    assert B in a.cluster
    assert a.neighbors[B].similarity == pytest.approx(0.8164965809277261)


def test_dissimilar_sender_is_neighbour_only():
    a = node(A, CAPS[A])
    a.handle_capability_message(CapabilityDissemination(9, frozenset({"C4"}), 0))
    assert 9 in a.neighbors and 9 not in a.cluster
    assert a.neighbors[9].similarity == 0.0


def test_membership_follows_latest_announcement():
    a = node(A, CAPS[A])
    a.handle_capability_message(announce(B, 0))
    a.handle_capability_message(CapabilityDissemination(B, frozenset({"C4"}), 0))
    assert B not in a.cluster


def test_duplicate_message_is_idempotent():
    a = node(A, CAPS[A])
    a.rounds_sent = 1
    a.handle_capability_message(announce(B, 3))
    before = (dict(a.neighbors), set(a.cluster), a.leader)
    actions = a.handle_capability_message(announce(B, 3))
    assert (dict(a.neighbors), set(a.cluster), a.leader) == before
    assert not any(isinstance(x, Note) for x in actions)


def test_fig2_leader_is_b_everywhere():
    states = fig2_states()
    assert {n: len(s.neighbors) for n, s in states.items()} == {A: 1, B: 3, C: 2, D: 2}
    assert all(s.leader == B for s in states.values())
    assert states[B].cluster == {A, B, C, D}


def test_only_b_registers():
    states = fig2_states()
    sent = {n: [a for a in s.open_registration() if isinstance(a, SendToAP)] for n, s in states.items()}
    assert sent[B] == [SendToAP(LeaderRegister(B))]
    assert all(not v for n, v in sent.items() if n != B)
    # registering is one-shot
    assert not [a for a in states[B].open_registration() if isinstance(a, SendToAP)]


def test_isolated_node_leads_itself():
    n = node(5, {"C1"})
    actions = n.open_registration()
    assert n.leader == 5
    assert SendToAP(LeaderRegister(5)) in actions


def test_tie_goes_to_lowest_id():
    n = node(7, {"C1", "C2"})
    n.rounds_sent = 1
    n.handle_capability_message(CapabilityDissemination(3, frozenset({"C1", "C2"}), 1))
    assert len(n.neighbors) == 1
    n.handle_capability_message(CapabilityDissemination(3, frozenset({"C1", "C2"}), 1))
    # self announces |neighbors| = 1, node 3 announced 1 -> tie -> 3
    assert n.leader == 3
    m = node(7, {"C1", "C2"})
    m.rounds_sent = 1
    m.handle_capability_message(CapabilityDissemination(3, frozenset({"C1", "C2"}), 2))
    m.handle_capability_message(CapabilityDissemination(9, frozenset({"C1", "C2"}), 2))
    assert m.leader == 3  # 3, 7 and 9 all at count 2


def test_tie_break_exhaustive_over_arrival_orders():
    msgs = [
        CapabilityDissemination(7, frozenset({"C1", "C2"}), 5),
        CapabilityDissemination(3, frozenset({"C1", "C2"}), 5),
        CapabilityDissemination(5, frozenset({"C1", "C2"}), 1),
    ]
    # the receiver counts 3 neighbours itself, so 3 and 7 tie at 5 above it
    leaders = set()
    for order in itertools.permutations(msgs):
        n = node(10, {"C1", "C2"})
        n.rounds_sent = 1
        for m in order:
            n.handle_capability_message(m)
        leaders.add(n.leader)
    assert leaders == {3}


def test_dissimilar_neighbour_never_leads():
    n = node(1, {"C1", "C2"})
    n.rounds_sent = 1
    n.handle_capability_message(CapabilityDissemination(2, frozenset({"C5"}), 40))
    assert n.leader == 1


@settings(max_examples=1000, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.frozensets(st.sampled_from(["C1", "C2", "C3", "C4"]), min_size=1),
            st.integers(0, 6),
        ),
        min_size=1,
        max_size=8,
    ),
    st.randoms(use_true_random=False),
)
def test_leader_invariant_under_reordering(neighbours, rnd):
    msgs = [CapabilityDissemination(i + 1, caps, cnt) for i, (caps, cnt) in enumerate(neighbours)]
    shuffled = msgs[:]
    rnd.shuffle(shuffled)
    finals = []
    for order in (msgs, shuffled):
        n = node(0, {"C1", "C2"})
        n.rounds_sent = 1
        for m in order:
            n.handle_capability_message(m)
        finals.append((n.leader, frozenset(n.cluster)))
    assert finals[0] == finals[1]
    leader, cluster = finals[0]
    counts = {0: len(msgs), **{m.sender: m.neigh_count for m in msgs}}
    best = max(counts[c] for c in cluster)
    assert counts[leader] == best and leader == min(c for c in cluster if counts[c] == best)


# --- task handling ------------------------------------------------------------


def leader_with_cluster(size=4):
    n = node(1, {"temperature", "humidity", "presence"})
    n.rounds_sent = 1
    for i in range(size - 1):
        n.handle_capability_message(
            CapabilityDissemination(10 + i, frozenset({"temperature", "humidity", "presence"}), 0)
        )
    n.open_registration()
    assert n.leader == 1 and len(n.cluster) == size
    return n


def test_accept_when_capable_and_quorate():
    n = leader_with_cluster(4)
    task = Task(7, frozenset({"temperature", "humidity"}), 60.0, 3)
    actions = n.handle_task_dispatch(task, 150.002, backoff=0.01)
    assert SendToAP(TaskAccept(1, 7), after=0.01) in actions
    assert Broadcast(LeaderToCluster(7, 60.0)) in actions
    assert StartTask(7, 210.002) in actions
    assert n.running_tasks == {7: 210.002}


@pytest.mark.parametrize(
    "required, quorum",
    [({"temperature", "light"}, 1), ({"temperature", "humidity"}, 5)],
)
def test_silent_when_a_guard_fails(required, quorum):
    n = leader_with_cluster(4)
    actions = n.handle_task_dispatch(Task(7, frozenset(required), 60.0, quorum), 150.0)
    assert all(isinstance(a, Ignored) for a in actions)


def test_quorum_counts_the_leader():
    n = leader_with_cluster(3)
    actions = n.handle_task_dispatch(Task(7, frozenset({"temperature"}), 60.0, 3), 150.0)
    assert any(isinstance(a, SendToAP) for a in actions)


def test_dispatch_to_non_leader_is_ignored():
    n = node(2, {"temperature"})
    n.rounds_sent = 1
    n.handle_capability_message(CapabilityDissemination(1, frozenset({"temperature"}), 5))
    assert n.leader == 1
    assert n.handle_task_dispatch(Task(1, frozenset({"temperature"}), 60.0, 1), 150.0) == [
        Ignored("dispatch to non-leader")
    ]


def test_member_runs_task_from_its_leader():
    n = node(2, {"temperature"})
    n.rounds_sent = 1
    n.handle_capability_message(CapabilityDissemination(1, frozenset({"temperature"}), 5))
    assert n.handle_leader_to_cluster(1, LeaderToCluster(3, 60.0), 210.0) == [StartTask(3, 270.0)]
    assert n.handle_leader_to_cluster(1, LeaderToCluster(3, 60.0), 210.1) == [Ignored("task already running")]
    assert n.handle_leader_to_cluster(4, LeaderToCluster(5, 60.0), 210.0) == [Ignored("not from this node's leader")]
    n.complete_task(3)
    assert n.running_tasks == {}
