import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import T0, log_of
from gdtspn_knn.discovery import inductive_miner, leaf, node, tree_to_petri
from gdtspn_knn.eventlog import make_trace
from gdtspn_knn.petri import (PetriNet, PetriNetError, ReplayError, Transition, WorkflowNetError,
                              enabled, fire, from_pnml, replay, to_dot, to_pnml,
                              validate_workflow_net)
from gdtspn_knn.synthetic import random_tree


def seq_net():
    return PetriNet(["i", "p", "o"], [Transition("tA", "A"), Transition("tB", "B")],
                    [("i", "tA"), ("tA", "p"), ("p", "tB"), ("tB", "o")])


def xor_net():
    """A, then B or C, sharing entry and exit places."""
    return PetriNet(["i", "p", "o"],
                    [Transition("tA", "A"), Transition("tB", "B"), Transition("tC", "C")],
                    [("i", "tA"), ("tA", "p"), ("p", "tB"), ("tB", "o"), ("p", "tC"), ("tC", "o")])


def and_net():
    return PetriNet(["i", "a1", "b1", "a2", "b2", "o"],
                    [Transition("split"), Transition("tA", "A"), Transition("tB", "B"),
                     Transition("join")],
                    [("i", "split"), ("split", "a1"), ("split", "b1"), ("a1", "tA"), ("tA", "a2"),
                     ("b1", "tB"), ("tB", "b2"), ("a2", "join"), ("b2", "join"), ("join", "o")])


def firing_sequences(net, max_len=12):
    """Every firing sequence from the initial to the final marking (plain semantics)."""
    out = []

    def walk(m, path):
        if m == net.final_marking:
            out.append(tuple(path))
            return
        if len(path) >= max_len:
            return
        for t in range(len(net.transitions)):
            if net.is_enabled(m, t):
                walk(fire(net, m, t), path + [t])

    walk(net.initial_marking, [])
    return out


def visible(net, seq):
    return tuple(net.transitions[t].label for t in seq if not net.transitions[t].silent)


def test_enabled_examples():
    net = seq_net()
    assert enabled(net, net.initial_marking) == [0]
    assert enabled(net, (0, 0, 0)) == []
    mixed = PetriNet(["i", "o"], [Transition("tA", "A"), Transition("s")],
                     [("i", "tA"), ("tA", "o"), ("i", "s"), ("s", "o")])
    assert enabled(mixed, mixed.initial_marking) == [1]


def test_fire_examples():
    single = PetriNet(["i", "o"], [Transition("t", "A")], [("i", "t"), ("t", "o")])
    assert fire(single, single.initial_marking, 0) == single.final_marking
    net = and_net()
    m = fire(net, net.initial_marking, 0)
    assert m == (0, 1, 1, 0, 0, 0)
    with pytest.raises(PetriNetError):
        fire(net, net.initial_marking, 1)


def test_construction_errors():
    with pytest.raises(PetriNetError, match="bipartite"):
        PetriNet(["i", "o"], [Transition("t", "A")], [("i", "o"), ("i", "t"), ("t", "o")])
    with pytest.raises(PetriNetError, match="unique"):
        PetriNet(["i", "o"], [Transition("t1", "A"), Transition("t2", "A")],
                 [("i", "t1"), ("t1", "o"), ("i", "t2"), ("t2", "o")])


def test_validate_workflow_net():
    assert validate_workflow_net(seq_net()) is not None
    with pytest.raises(WorkflowNetError, match="source"):
        PetriNet(["i1", "i2", "o"], [Transition("t", "A")], [("i1", "t"), ("i2", "t"), ("t", "o")])
    two_src = PetriNet(["i1", "i2", "o"], [Transition("t", "A")],
                       [("i1", "t"), ("i2", "t"), ("t", "o")],
                       initial_marking={"i1": 1}, final_marking={"o": 1})
    with pytest.raises(WorkflowNetError, match="source"):
        validate_workflow_net(two_src)
    # D needs a token on q, which only the (never enabled) self-loop E produces
    dead = PetriNet(["i", "p", "q", "o"],
                    [Transition("tA", "A"), Transition("tB", "B"), Transition("tD", "D"),
                     Transition("tE", "E")],
                    [("i", "tA"), ("tA", "p"), ("p", "tB"), ("tB", "o"), ("p", "tD"),
                     ("q", "tD"), ("tD", "o"), ("q", "tE"), ("tE", "q")])
    with pytest.raises(WorkflowNetError, match="dead"):
        validate_workflow_net(dead)


def test_validate_improper_completion():
    # AND split whose join is missing: one token reaches o while another remains
    net = PetriNet(["i", "a", "b", "o"],
                   [Transition("s"), Transition("tA", "A"), Transition("tB", "B")],
                   [("i", "s"), ("s", "a"), ("s", "b"), ("a", "tA"), ("tA", "o"), ("b", "tB"),
                    ("tB", "o")])
    with pytest.raises(WorkflowNetError, match="unsound"):
        validate_workflow_net(net)


def test_replay_sequence_prefix():
    net = seq_net()
    tr = make_trace("c", [("A", T0 + 5000)])
    st_ = replay(net, tr)
    assert st_.marking == (0, 1, 0)
    assert st_.enabling_time == {1: T0 + 5000}
    assert st_.last_event_time == T0 + 5000


def test_replay_empty_prefix():
    net = seq_net()
    st_ = replay(net, None, start_time=T0)
    assert st_.marking == net.initial_marking
    assert st_.enabling_time == {0: T0}
    with pytest.raises(ReplayError):
        replay(net, None)


def test_replay_xor_matches_unique_brute_force_path():
    net = xor_net()
    paths = [p for p in firing_sequences(net) if visible(net, p) == ("A", "C")]
    assert len(paths) == 1
    st_ = replay(net, log_of([("A", 0), ("C", 5)])[0])
    assert st_.marking == net.final_marking
    assert [t for t, _ in st_.durations] == list(paths[0])
    assert st_.durations == ((0, 0), (2, 5000))


def test_replay_xor_with_silent_entries_matches_brute_force():
    net = tree_to_petri(node("seq", leaf("A"), node("xor", leaf("B"), leaf("C"))))
    validate_workflow_net(net)
    paths = [p for p in firing_sequences(net) if visible(net, p) == ("A", "C")]
    assert len(paths) == 1
    st_ = replay(net, log_of([("A", 0), ("C", 5)])[0], complete=True)
    assert st_.marking == net.final_marking
    fired_silent = [t for t in paths[0] if net.transitions[t].silent]
    assert list(st_.silent_fired) == fired_silent


def test_replay_errors():
    net = seq_net()
    with pytest.raises(ReplayError) as ei:
        replay(net, log_of([("A", 0), ("Z", 1)])[0])
    assert ei.value.event_index == 1
    with pytest.raises(ReplayError) as ei:
        replay(net, log_of([("B", 0)])[0])
    assert ei.value.event_index == 0


def test_token_timestamps_through_and_join():
    net = and_net()
    tr = log_of([("B", 50), ("A", 80)])[0]
    st_ = replay(net, tr, start_time=T0, complete=True)
    assert st_.marking == net.final_marking
    assert dict(st_.durations) == {2: 50_000, 1: 80_000}


def test_place_invariants_on_hand_built_nets():
    for net in (seq_net(), xor_net()):
        for path in firing_sequences(net):
            m = net.initial_marking
            for t in path:
                m = fire(net, m, t)
                assert sum(m) == 1
    net = and_net()
    # branch invariants: i + a1 + a2 + o and i + b1 + b2 + o stay at one token
    for path in firing_sequences(net):
        m = net.initial_marking
        for t in path:
            m = fire(net, m, t)
            i, a1, b1, a2, b2, o = m
            assert i + a1 + a2 + o == 1
            assert i + b1 + b2 + o == 1


def random_firing_trace(net, rng, case_id):
    m = net.initial_marking
    t_ms = T0
    events = []
    for _ in range(200):
        if m == net.final_marking:
            break
        ready = [t for t in range(len(net.transitions)) if net.is_enabled(m, t)]
        t = ready[int(rng.integers(len(ready)))]
        m = fire(net, m, t)
        if not net.transitions[t].silent:
            t_ms += int(rng.integers(0, 10_000))
            events.append((net.transitions[t].label, t_ms))
    return m, events


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generate_and_replay(seed):
    rng = np.random.default_rng(seed)
    net = tree_to_petri(random_tree(rng))
    m, events = random_firing_trace(net, rng, "g")
    if m != net.final_marking or not events:
        return
    st_ = replay(net, make_trace("g", events), complete=True)
    assert st_.marking == net.final_marking
    again = replay(net, make_trace("g", events), complete=True)
    assert again == st_


def test_pnml_roundtrip_and_dot():
    net = tree_to_petri(inductive_miner([("A", "B"), ("B", "A"), ("A", "C")]))
    back = from_pnml(to_pnml(net))
    assert back.places == net.places
    assert back.transitions == net.transitions
    assert back.pre == net.pre and back.post == net.post
    assert back.initial_marking == net.initial_marking
    assert back.final_marking == net.final_marking
    dot = to_dot(net)
    assert dot.startswith("digraph") and "A" in dot
