"""Process discovery with the basic Inductive Miner.

The miner works on activity sequences; :func:`inductive_miner` accepts an
:class:`EventLog` or any iterable of label sequences.  Cuts are tried in the
order exclusive choice, sequence, parallel, loop; when none applies the
sub-log is covered by a flower model.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import count
from typing import Sequence

from .eventlog import EventLog
from .petri import PetriNet, Transition

ACTIVITY = "activity"
TAU = "tau"
SEQ = "seq"
XOR = "xor"
AND = "and"
LOOP = "loop"

_SYMBOL = {SEQ: "->", XOR: "X", AND: "+", LOOP: "*"}


@dataclass(frozen=True)
class ProcessTree:
    kind: str
    label: str | None = None
    children: tuple["ProcessTree", ...] = ()

    def __post_init__(self):
        if self.kind == ACTIVITY and not self.label:
            raise ValueError("activity leaf needs a label")
        if self.kind == LOOP and len(self.children) < 2:
            raise ValueError("loop needs a body and at least one redo child")
        if self.kind in (SEQ, XOR, AND) and len(self.children) < 1:
            raise ValueError(f"{self.kind} node needs children")

    def __str__(self):
        if self.kind == ACTIVITY:
            return self.label
        if self.kind == TAU:
            return "tau"
        return f"{_SYMBOL[self.kind]}({', '.join(str(c) for c in self.children)})"

    def activities(self) -> list[str]:
        if self.kind == ACTIVITY:
            return [self.label]
        return [a for c in self.children for a in c.activities()]


def leaf(label: str) -> ProcessTree:
    return ProcessTree(ACTIVITY, label)


def tau() -> ProcessTree:
    return ProcessTree(TAU)


def node(kind: str, *children: ProcessTree) -> ProcessTree:
    return ProcessTree(kind, None, tuple(children))


@dataclass
class DirectlyFollowsGraph:
    nodes: tuple[str, ...]
    edges: dict[tuple[str, str], int] = field(default_factory=dict)
    start_activities: dict[str, int] = field(default_factory=dict)
    end_activities: dict[str, int] = field(default_factory=dict)


def _sequences(log) -> list[tuple[str, ...]]:
    if isinstance(log, EventLog):
        return [tr.activities for tr in log.traces]
    return [tuple(s) for s in log]


def build_dfg(log) -> DirectlyFollowsGraph:
    edges: Counter = Counter()
    starts: Counter = Counter()
    ends: Counter = Counter()
    nodes = set()
    for seq in _sequences(log):
        if not seq:
            continue
        nodes.update(seq)
        starts[seq[0]] += 1
        ends[seq[-1]] += 1
        for a, b in zip(seq, seq[1:]):
            edges[(a, b)] += 1
    return DirectlyFollowsGraph(tuple(sorted(nodes)), dict(edges), dict(starts), dict(ends))


# ---------------------------------------------------------------------------
# cut detection
# ---------------------------------------------------------------------------


def _components(nodes, adjacent) -> list[list[str]]:
    """Connected components of an undirected relation, lexicographically ordered."""
    seen = set()
    comps = []
    for n in nodes:
        if n in seen:
            continue
        comp = []
        stack = [n]
        seen.add(n)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in nodes:
                if y not in seen and adjacent(x, y):
                    seen.add(y)
                    stack.append(y)
        comps.append(sorted(comp))
    comps.sort()
    return comps


def _reachability(nodes, succ) -> dict[str, set[str]]:
    reach = {}
    for n in nodes:
        seen = set()
        stack = list(succ[n])
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(succ[x])
        reach[n] = seen
    return reach


def xor_cut(dfg: DirectlyFollowsGraph):
    edges = dfg.edges
    comps = _components(dfg.nodes, lambda a, b: (a, b) in edges or (b, a) in edges)
    return comps if len(comps) > 1 else None


def sequence_cut(dfg: DirectlyFollowsGraph):
    nodes = dfg.nodes
    succ = {n: set() for n in nodes}
    for a, b in dfg.edges:
        succ[a].add(b)
    reach = _reachability(nodes, succ)

    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            ab, ba = b in reach[a], a in reach[b]
            if ab == ba:  # mutually reachable or mutually unreachable
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for n in nodes:
        groups.setdefault(find(n), []).append(n)
    groups_l = [sorted(g) for g in groups.values()]
    if len(groups_l) < 2:
        return None

    def before(g, h):
        return all(b in reach[a] and a not in reach[b] for a in g for b in h)

    for i, g in enumerate(groups_l):
        for h in groups_l[i + 1:]:
            if not (before(g, h) or before(h, g)):
                return None
    # order by how many groups precede each group
    rank = {id(g): sum(before(h, g) for h in groups_l if h is not g) for g in groups_l}
    groups_l.sort(key=lambda g: (rank[id(g)], g))
    return groups_l


def parallel_cut(dfg: DirectlyFollowsGraph):
    edges = dfg.edges
    comps = _components(dfg.nodes, lambda a, b: not ((a, b) in edges and (b, a) in edges))
    starts, ends = set(dfg.start_activities), set(dfg.end_activities)
    # every branch must be able to start and to end
    changed = True
    while changed and len(comps) > 1:
        changed = False
        for i, c in enumerate(comps):
            if not (set(c) & starts) or not (set(c) & ends):
                j = 0 if i != 0 else 1
                merged = sorted(comps[j] + c)
                comps = [x for k, x in enumerate(comps) if k not in (i, j)] + [merged]
                comps.sort()
                changed = True
                break
    return comps if len(comps) > 1 else None


def loop_cut(dfg: DirectlyFollowsGraph):
    starts, ends = set(dfg.start_activities), set(dfg.end_activities)
    body = starts | ends
    rest = [n for n in dfg.nodes if n not in body]
    if not rest:
        return None
    edges = dfg.edges
    comps = _components(rest, lambda a, b: (a, b) in edges or (b, a) in edges)
    redo = []
    for comp in comps:
        cs = set(comp)
        ok = True
        for (a, b) in edges:
            if a in body and b in cs and a not in ends:
                ok = False  # body enters the redo part elsewhere than from an end
            if a in cs and b in body and b not in starts:
                ok = False  # redo part returns elsewhere than to a start
        if ok:
            for b in cs:
                if any((e, b) in edges for e in ends) and not all((e, b) in edges for e in ends):
                    ok = False
            for a in cs:
                if any((a, s) in edges for s in starts) and not all((a, s) in edges for s in starts):
                    ok = False
        if ok and not any((e, b) in edges for e in ends for b in cs):
            ok = False
        if ok:
            redo.append(comp)
        else:
            body |= cs
    if not redo:
        return None
    return [sorted(body)] + redo


# ---------------------------------------------------------------------------
# log splitting
# ---------------------------------------------------------------------------


def _split_xor(seqs, groups):
    where = {a: i for i, g in enumerate(groups) for a in g}
    out = [[] for _ in groups]
    for s in seqs:
        out[where[s[0]]].append(s)
    return out


def _split_sequence(seqs, groups):
    where = {a: i for i, g in enumerate(groups) for a in g}
    out = [[] for _ in groups]
    for s in seqs:
        parts = [[] for _ in groups]
        for a in s:
            parts[where[a]].append(a)
        for i, p in enumerate(parts):
            out[i].append(tuple(p))
    return out


def _split_parallel(seqs, groups):
    return _split_sequence(seqs, groups)


def _split_loop(seqs, groups):
    where = {a: i for i, g in enumerate(groups) for a in g}
    out = [[] for _ in groups]
    for s in seqs:
        cur = []
        cur_g = 0
        for a in s:
            g = where[a]
            if g != cur_g and cur:
                out[cur_g].append(tuple(cur))
                cur = []
            cur_g = g
            cur.append(a)
        if cur:
            out[cur_g].append(tuple(cur))
    return out


def _flower(activities) -> ProcessTree:
    acts = sorted(activities)
    body = leaf(acts[0]) if len(acts) == 1 else node(XOR, *(leaf(a) for a in acts))
    return node(LOOP, body, tau())


def _flatten(kind, children):
    flat = []
    for c in children:
        if c.kind == kind and kind in (SEQ, XOR, AND):
            flat.extend(c.children)
        else:
            flat.append(c)
    return node(kind, *flat)


def _mine(seqs: list[tuple[str, ...]]) -> ProcessTree:
    nonempty = [s for s in seqs if s]
    if not nonempty:
        return tau()
    if len(nonempty) < len(seqs):
        return _flatten(XOR, [tau(), _mine(nonempty)])
    acts = {a for s in nonempty for a in s}
    if len(acts) == 1:
        (a,) = acts
        if all(len(s) == 1 for s in nonempty):
            return leaf(a)
        return _flower(acts)

    dfg = build_dfg(nonempty)
    groups = xor_cut(dfg)
    if groups:
        return _flatten(XOR, [_mine(sub) for sub in _split_xor(nonempty, groups)])
    groups = sequence_cut(dfg)
    if groups:
        return _flatten(SEQ, [_mine(sub) for sub in _split_sequence(nonempty, groups)])
    groups = parallel_cut(dfg)
    if groups:
        return _flatten(AND, [_mine(sub) for sub in _split_parallel(nonempty, groups)])
    groups = loop_cut(dfg)
    if groups:
        parts = _split_loop(nonempty, groups)
        return node(LOOP, *(_mine(sub) for sub in parts))
    return _flower(acts)


def inductive_miner(log) -> ProcessTree:
    """Discover a process tree whose language contains every trace of ``log``."""
    seqs = _sequences(log)
    if not seqs:
        raise ValueError("cannot discover a model from an empty log")
    return _mine(seqs)


# ---------------------------------------------------------------------------
# tree -> net
# ---------------------------------------------------------------------------


def tree_to_petri(tree: ProcessTree) -> PetriNet:
    """Build a sound workflow net for ``tree``.

    Choices (exclusive branches and loop exit/redo decisions) are made by silent
    transitions, so that branch frequencies can be learnt as weights.
    """
    places = ["source", "sink"]
    transitions: list[Transition] = []
    arcs: list[tuple[str, str]] = []
    pid = count(1)
    tid = count(1)

    def new_place():
        name = f"p{next(pid)}"
        places.append(name)
        return name

    def new_trans(label=None):
        name = f"t_{label}" if label is not None else f"tau{next(tid)}"
        transitions.append(Transition(name, label))
        return name

    def connect(p_in, t, p_out):
        arcs.append((p_in, t))
        arcs.append((t, p_out))

    def build(n: ProcessTree, p_in: str, p_out: str):
        if n.kind == ACTIVITY:
            connect(p_in, new_trans(n.label), p_out)
        elif n.kind == TAU:
            connect(p_in, new_trans(), p_out)
        elif n.kind == SEQ:
            cur = p_in
            for i, c in enumerate(n.children):
                nxt = p_out if i == len(n.children) - 1 else new_place()
                build(c, cur, nxt)
                cur = nxt
        elif n.kind == XOR:
            for c in n.children:
                if c.kind == TAU:
                    connect(p_in, new_trans(), p_out)
                else:
                    q = new_place()
                    connect(p_in, new_trans(), q)
                    build(c, q, p_out)
        elif n.kind == AND:
            split, join = new_trans(), new_trans()
            arcs.append((p_in, split))
            for c in n.children:
                a, b = new_place(), new_place()
                arcs.append((split, a))
                build(c, a, b)
                arcs.append((b, join))
            arcs.append((join, p_out))
        elif n.kind == LOOP:
            body_in, body_out = new_place(), new_place()
            connect(p_in, new_trans(), body_in)
            build(n.children[0], body_in, body_out)
            connect(body_out, new_trans(), p_out)
            for r in n.children[1:]:
                if r.kind == TAU:
                    connect(body_out, new_trans(), body_in)
                else:
                    q = new_place()
                    connect(body_out, new_trans(), q)
                    build(r, q, body_in)
        else:
            raise ValueError(f"unknown node kind {n.kind!r}")

    build(tree, "source", "sink")
    return PetriNet(places, transitions, arcs)


def discover_net(log) -> PetriNet:
    return tree_to_petri(inductive_miner(log))


def tree_language(tree: ProcessTree, max_len: int) -> frozenset:
    """All traces of ``tree`` with at most ``max_len`` events."""

    def lang(n) -> set:
        if n.kind == ACTIVITY:
            return {(n.label,)}
        if n.kind == TAU:
            return {()}
        if n.kind == XOR:
            return set().union(*(lang(c) for c in n.children))
        if n.kind == SEQ:
            acc = {()}
            for c in n.children:
                lc = lang(c)
                acc = {a + b for a in acc for b in lc if len(a) + len(b) <= max_len}
            return acc
        if n.kind == AND:
            acc = {()}
            for c in n.children:
                lc = lang(c)
                acc = {s for a in acc for b in lc if len(a) + len(b) <= max_len
                       for s in _shuffles(a, b)}
            return acc
        if n.kind == LOOP:
            body = lang(n.children[0])
            redo = set().union(*(lang(c) for c in n.children[1:]))
            acc = set(body)
            frontier = set(body)
            while frontier:
                nxt = set()
                for a in frontier:
                    for r in redo:
                        for b in body:
                            s = a + r + b
                            if len(s) <= max_len and s not in acc:
                                nxt.add(s)
                acc |= nxt
                frontier = nxt
            return acc
        raise ValueError(n.kind)

    return frozenset(s for s in lang(tree) if len(s) <= max_len)


def _shuffles(a: Sequence, b: Sequence):
    if not a:
        yield tuple(b)
        return
    if not b:
        yield tuple(a)
        return
    for s in _shuffles(a[1:], b):
        yield (a[0],) + s
    for s in _shuffles(a, b[1:]):
        yield (b[0],) + s
