"""Synthetic event logs and random process trees."""
from __future__ import annotations

import string
from typing import Sequence

import numpy as np

from .discovery import ACTIVITY, AND, LOOP, SEQ, TAU, XOR, ProcessTree, leaf, node, tau
from .eventlog import EventLog, make_trace

HOUR = 3_600_000
EPOCH_2020 = 1_577_836_800_000  # 2020-01-01T00:00:00Z in ms


def playout(tree: ProcessTree, rng: np.random.Generator, redo_prob: float = 0.3,
            max_redo: int = 3) -> tuple[str, ...]:
    """Random trace of ``tree``; parallel branches are interleaved at random."""
    if tree.kind == ACTIVITY:
        return (tree.label,)
    if tree.kind == TAU:
        return ()
    if tree.kind == SEQ:
        return tuple(a for c in tree.children for a in playout(c, rng, redo_prob, max_redo))
    if tree.kind == XOR:
        c = tree.children[int(rng.integers(len(tree.children)))]
        return playout(c, rng, redo_prob, max_redo)
    if tree.kind == AND:
        parts = [list(playout(c, rng, redo_prob, max_redo)) for c in tree.children]
        out = []
        while any(parts):
            live = [p for p in parts if p]
            out.append(live[int(rng.integers(len(live)))].pop(0))
        return tuple(out)
    if tree.kind == LOOP:
        out = list(playout(tree.children[0], rng, redo_prob, max_redo))
        for _ in range(max_redo):
            if rng.random() >= redo_prob:
                break
            redo = tree.children[1 + int(rng.integers(len(tree.children) - 1))]
            out += playout(redo, rng, redo_prob, max_redo)
            out += playout(tree.children[0], rng, redo_prob, max_redo)
        return tuple(out)
    raise ValueError(tree.kind)


def random_tree(rng: np.random.Generator, max_depth: int = 3, max_activities: int = 6) -> ProcessTree:
    """Random block-structured tree with unique labels and at most ``max_depth`` levels."""
    n = int(rng.integers(1, max_activities + 1))
    labels = list(string.ascii_uppercase[:n])

    def build(labs: list[str], depth: int) -> ProcessTree:
        if len(labs) == 1:
            if depth < max_depth and rng.random() < 0.25:
                kind = XOR if rng.random() < 0.5 else LOOP
                return node(kind, leaf(labs[0]), tau())
            return leaf(labs[0])
        op = [SEQ, XOR, AND, LOOP][int(rng.integers(4))]
        if depth >= max_depth - 1:
            kids = [leaf(a) for a in labs]
        else:
            n_parts = int(rng.integers(2, min(3, len(labs)) + 1))
            cuts = sorted(rng.choice(np.arange(1, len(labs)), size=n_parts - 1, replace=False))
            bounds = [0, *cuts, len(labs)]
            kids = [build(labs[a:b], depth + 1) for a, b in zip(bounds, bounds[1:])]
        if op == XOR and rng.random() < 0.2:
            kids.append(tau())
        return node(op, *kids)

    return build(labels, 0)


def log_from_sequences(seqs: Sequence[Sequence[str]], rng: np.random.Generator,
                       start: int = EPOCH_2020, prefix: str = "c") -> EventLog:
    """Attach increasing timestamps (random gaps of 1-60 minutes) to label sequences."""
    traces = []
    t = start
    for i, seq in enumerate(seqs):
        if not seq:
            continue
        ts = t
        evs = []
        for a in seq:
            ts += int(rng.integers(60_000, 3_600_000))
            evs.append((a, ts))
        traces.append(make_trace(f"{prefix}{i}", evs))
        t += HOUR
    return EventLog(tuple(traces))


def deterministic_log(n_traces: int, activities: Sequence[str] = ("A", "B", "C", "D"),
                      durations_s: Sequence[float] = (0, 3600, 7200, 1800),
                      interarrival_s: float = 900, start: int = EPOCH_2020,
                      prefix: str = "d") -> EventLog:
    """Single variant with constant gaps; ``durations_s[i]`` precedes activity ``i``."""
    traces = []
    for i in range(n_traces):
        t = start + int(i * interarrival_s * 1000)
        evs = []
        for a, d in zip(activities, durations_s):
            t += int(d * 1000)
            evs.append((a, t))
        traces.append(make_trace(f"{prefix}{i}", evs))
    return EventLog(tuple(traces))


# (mean h, std h) of the gap before each activity, per variant
VARIANT_FAST = (("Register", (0.0, 0.0)), ("Check", (2.0, 0.3)),
                ("Approve", (4.0, 1.0)), ("Pay", (3.0, 0.5)))
VARIANT_SLOW = (("Register", (0.0, 0.0)), ("Check", (6.0, 0.8)), ("Review", (10.0, 2.0)),
                ("Approve", (16.0, 3.0)), ("Pay", (8.0, 1.5)))


def two_variant_log(n_traces: int, seed: int = 0, start: int = EPOCH_2020,
                    interarrival_h: float = 0.5, p_slow: float = 0.5,
                    prefix: str = "v") -> EventLog:
    """Two control-flow variants over shared labels with variant-specific timing.

    The slow variant also runs ``Review``; its ``Check`` completes later, so the
    first observed time-to-occurrence reveals the variant.
    """
    rng = np.random.default_rng(seed)
    traces = []
    t_start = float(start)
    for i in range(n_traces):
        t_start += rng.exponential(interarrival_h) * HOUR
        variant = VARIANT_SLOW if rng.random() < p_slow else VARIANT_FAST
        t = t_start
        evs = []
        for act, (m, s) in variant:
            gap = m if s == 0 else max(rng.normal(m, s), 0.05)
            t += gap * HOUR
            evs.append((act, int(round(t))))
        traces.append(make_trace(f"{prefix}{i}", evs))
    return EventLog(tuple(traces))


def two_variant_experiment(n_train: int = 2000, n_test: int = 200, seed: int = 0):
    """Training log followed, after all training cases finished, by a test log."""
    train = two_variant_log(n_train, seed=seed, prefix="train")
    boundary = max(tr.end for tr in train.traces) + HOUR
    test = two_variant_log(n_test, seed=seed + 1, start=boundary, prefix="test")
    return train, test
