"""Workflow Petri nets: structure, firing rule, soundness and token replay.

Transitions are addressed by integer index.  A transition with a label is a
timed (visible) transition, an unlabelled one is an immediate (silent) one.
Markings are tuples of token counts indexed like ``net.places``.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .eventlog import Trace

Marking = tuple

SOUNDNESS_BOUND = 100_000
SILENT_SEARCH_BOUND = 20_000


class PetriNetError(ValueError):
    pass


class WorkflowNetError(PetriNetError):
    pass


class ReplayError(RuntimeError):
    def __init__(self, message, event_index=None, case_id=None):
        super().__init__(message)
        self.event_index = event_index
        self.case_id = case_id


@dataclass(frozen=True)
class Transition:
    name: str
    label: str | None = None

    @property
    def silent(self) -> bool:
        return self.label is None


class PetriNet:
    """Place/transition net with unit arc weights.

    ``arcs`` are ``(source_name, target_name)`` pairs and must alternate between
    places and transitions.  Initial and final markings default to one token on
    the unique source and sink place.
    """

    def __init__(self, places: Sequence[str], transitions: Sequence[Transition],
                 arcs: Iterable[tuple[str, str]],
                 initial_marking: Mapping[str, int] | None = None,
                 final_marking: Mapping[str, int] | None = None):
        self.places = tuple(places)
        self.transitions = tuple(transitions)
        self.place_index = {p: i for i, p in enumerate(self.places)}
        self.transition_index = {t.name: i for i, t in enumerate(self.transitions)}
        if len(self.place_index) != len(self.places):
            raise PetriNetError("duplicate place names")
        if len(self.transition_index) != len(self.transitions):
            raise PetriNetError("duplicate transition names")
        if set(self.place_index) & set(self.transition_index):
            raise PetriNetError("places and transitions share a name")

        labels = [t.label for t in self.transitions if t.label is not None]
        if len(labels) != len(set(labels)):
            raise PetriNetError("visible labels must be unique")
        self.label_index = {t.label: i for i, t in enumerate(self.transitions) if t.label is not None}

        pre = [[] for _ in self.transitions]
        post = [[] for _ in self.transitions]
        arcs = list(arcs)
        for src, dst in arcs:
            if src in self.place_index and dst in self.transition_index:
                pre[self.transition_index[dst]].append(self.place_index[src])
            elif src in self.transition_index and dst in self.place_index:
                post[self.transition_index[src]].append(self.place_index[dst])
            else:
                raise PetriNetError(f"arc {src!r} -> {dst!r} is not place/transition bipartite")
        for lst in pre + post:
            if len(lst) != len(set(lst)):
                raise PetriNetError("parallel arcs (weight > 1) are not supported")
        self.arcs = tuple(arcs)
        self.pre = tuple(tuple(sorted(x)) for x in pre)
        self.post = tuple(tuple(sorted(x)) for x in post)

        P = len(self.places)
        self.place_pre = tuple(tuple(t for t in range(len(self.transitions)) if p in self.post[t]) for p in range(P))
        self.place_post = tuple(tuple(t for t in range(len(self.transitions)) if p in self.pre[t]) for p in range(P))

        if initial_marking is None or final_marking is None:
            sources = [p for p in range(P) if not self.place_pre[p]]
            sinks = [p for p in range(P) if not self.place_post[p]]
        if initial_marking is None:
            if len(sources) != 1:
                raise WorkflowNetError(f"expected exactly one source place, found {len(sources)}")
            self.initial_marking = tuple(1 if p == sources[0] else 0 for p in range(P))
        else:
            self.initial_marking = self.marking(initial_marking)
        if final_marking is None:
            if len(sinks) != 1:
                raise WorkflowNetError(f"expected exactly one sink place, found {len(sinks)}")
            self.final_marking = tuple(1 if p == sinks[0] else 0 for p in range(P))
        else:
            self.final_marking = self.marking(final_marking)

        self._silent_paths: dict = {}

    def __repr__(self):
        return f"PetriNet({len(self.places)} places, {len(self.transitions)} transitions)"

    def marking(self, counts: Mapping[str, int]) -> Marking:
        m = [0] * len(self.places)
        for name, c in counts.items():
            if c < 0:
                raise PetriNetError("negative token count")
            m[self.place_index[name]] = int(c)
        return tuple(m)

    @property
    def timed(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.transitions) if not t.silent)

    @property
    def silent(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.transitions) if t.silent)

    def is_enabled(self, m: Marking, t: int) -> bool:
        return all(m[p] >= 1 for p in self.pre[t])

    def csr(self):
        """Input/output place lists as CSR arrays for the simulation kernels."""
        def pack(lists):
            ptr = np.zeros(len(lists) + 1, dtype=np.int64)
            ptr[1:] = np.cumsum([len(x) for x in lists])
            idx = np.array([p for x in lists for p in x], dtype=np.int64)
            return ptr, idx
        in_ptr, in_idx = pack(self.pre)
        out_ptr, out_idx = pack(self.post)
        return in_ptr, in_idx, out_ptr, out_idx


def enabled(net: PetriNet, m: Marking) -> list[int]:
    """Enabled transitions under priorities: immediates pre-empt timed ones."""
    ready = [t for t in range(len(net.transitions)) if net.is_enabled(m, t)]
    imm = [t for t in ready if net.transitions[t].silent]
    return imm if imm else ready


def fire(net: PetriNet, m: Marking, t: int) -> Marking:
    if not net.is_enabled(m, t):
        raise PetriNetError(f"transition {net.transitions[t].name!r} is not enabled")
    out = list(m)
    for p in net.pre[t]:
        out[p] -= 1
    for p in net.post[t]:
        out[p] += 1
    return tuple(out)


# ---------------------------------------------------------------------------
# workflow-net validation
# ---------------------------------------------------------------------------


def reachability_graph(net: PetriNet, bound: int = SOUNDNESS_BOUND):
    """Explicit state space under the plain firing rule (no priorities)."""
    start = net.initial_marking
    seen = {start: 0}
    edges: list[list[tuple[int, int]]] = [[]]
    states = [start]
    queue = deque([start])
    while queue:
        m = queue.popleft()
        i = seen[m]
        for t in range(len(net.transitions)):
            if net.is_enabled(m, t):
                m2 = fire(net, m, t)
                j = seen.get(m2)
                if j is None:
                    if len(states) >= bound:
                        raise WorkflowNetError(f"state space exceeds {bound} markings")
                    j = len(states)
                    seen[m2] = j
                    states.append(m2)
                    edges.append([])
                    queue.append(m2)
                edges[i].append((t, j))
    return states, edges


def validate_workflow_net(net: PetriNet, check_soundness: bool = True,
                          bound: int = SOUNDNESS_BOUND) -> PetriNet:
    """Check workflow-net shape and, optionally, soundness by bounded search."""
    P = len(net.places)
    sources = [p for p in range(P) if not net.place_pre[p]]
    sinks = [p for p in range(P) if not net.place_post[p]]
    if len(sources) != 1:
        raise WorkflowNetError(f"workflow net needs one source place, found {len(sources)}")
    if len(sinks) != 1:
        raise WorkflowNetError(f"workflow net needs one sink place, found {len(sinks)}")
    src, snk = sources[0], sinks[0]
    if net.initial_marking != tuple(1 if p == src else 0 for p in range(P)):
        raise WorkflowNetError("initial marking must be one token on the source place")
    if net.final_marking != tuple(1 if p == snk else 0 for p in range(P)):
        raise WorkflowNetError("final marking must be one token on the sink place")
    if not check_soundness:
        return net

    states, edges = reachability_graph(net, bound)
    final = net.final_marking
    fired = set()
    for out in edges:
        fired.update(t for t, _ in out)
    dead = [net.transitions[t].name for t in range(len(net.transitions)) if t not in fired]
    if dead:
        raise WorkflowNetError(f"unsound: dead transitions {dead}")
    for m in states:
        if m[snk] >= 1 and m != final:
            raise WorkflowNetError(f"unsound: improper completion in marking {m}")
    # option to complete: every state reaches the final marking
    rev: list[list[int]] = [[] for _ in states]
    for i, out in enumerate(edges):
        for _, j in out:
            rev[j].append(i)
    try:
        f = states.index(final)
    except ValueError:
        raise WorkflowNetError("unsound: final marking unreachable") from None
    good = {f}
    queue = deque([f])
    while queue:
        j = queue.popleft()
        for i in rev[j]:
            if i not in good:
                good.add(i)
                queue.append(i)
    if len(good) != len(states):
        bad = next(states[i] for i in range(len(states)) if i not in good)
        raise WorkflowNetError(f"unsound: marking {bad} cannot reach the final marking")
    return net


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayState:
    marking: Marking
    enabling_time: dict  # timed transition index -> ms
    last_event_time: int
    token_time: tuple  # per place: latest token arrival (ms), None when empty
    silent_fired: tuple = ()  # silent transition indices, in firing order
    durations: tuple = ()  # (transition index, ms) per replayed event


def _silent_path(net: PetriNet, m: Marking, goal) -> tuple[int, ...] | None:
    """Shortest silent firing sequence from ``m`` to a marking satisfying ``goal``.

    Breadth-first over silent transitions in index order, so among shortest
    sequences the lexicographically smallest one is found.
    """
    if goal(m):
        return ()
    silent = net.silent
    parent = {m: None}
    queue = deque([m])
    while queue:
        cur = queue.popleft()
        for t in silent:
            if not net.is_enabled(cur, t):
                continue
            nxt = fire(net, cur, t)
            if nxt in parent:
                continue
            parent[nxt] = (cur, t)
            if goal(nxt):
                path = []
                node = nxt
                while parent[node] is not None:
                    node, tt = parent[node]
                    path.append(tt)
                return tuple(reversed(path))
            if len(parent) > SILENT_SEARCH_BOUND:
                return None
            queue.append(nxt)
    return None


def _cached_path(net: PetriNet, m: Marking, key, goal):
    cache = net._silent_paths
    k = (m, key)
    if k not in cache:
        cache[k] = _silent_path(net, m, goal)
    return cache[k]


def replay(net: PetriNet, trace: Trace | None, *, start_time: int | None = None,
           complete: bool = False) -> ReplayState:
    """Token replay of a (partial) trace, propagating token timestamps.

    Silent transitions fire at the latest timestamp of the tokens they consume;
    a visible transition fires at its event's timestamp.  With ``complete`` the
    replay finishes with the shortest silent sequence to the final marking.
    """
    events = trace.events if trace is not None else ()
    if start_time is None:
        if not events:
            raise ReplayError("empty replay needs an explicit start_time")
        start_time = events[0].timestamp
    case_id = trace.case_id if trace is not None else None

    m = net.initial_marking
    tok = [start_time if c else None for c in m]
    silent_fired = []
    durations = []

    def fire_at(t, when):
        nonlocal m
        m = fire(net, m, t)
        for p in net.pre[t]:
            if m[p] == 0:
                tok[p] = None
        for p in net.post[t]:
            tok[p] = when if tok[p] is None else max(tok[p], when)

    def enabling(t):
        return max(tok[p] for p in net.pre[t]) if net.pre[t] else start_time

    def run_silent(path):
        for s in path:
            fire_at(s, enabling(s))
            silent_fired.append(s)

    for i, ev in enumerate(events):
        t = net.label_index.get(ev.activity)
        if t is None:
            raise ReplayError(f"event {i} ({ev.activity!r}) has no transition in the net", i, case_id)
        if not net.is_enabled(m, t):
            path = _cached_path(net, m, t, lambda mm, t=t: net.is_enabled(mm, t))
            if path is None:
                raise ReplayError(f"event {i} ({ev.activity!r}) cannot be replayed", i, case_id)
            run_silent(path)
        durations.append((t, ev.timestamp - enabling(t)))
        fire_at(t, ev.timestamp)

    last = events[-1].timestamp if events else start_time
    if complete and m != net.final_marking:
        final = net.final_marking
        path = _cached_path(net, m, "final", lambda mm: mm == final)
        if path is None:
            raise ReplayError("trace cannot reach the final marking", len(events), case_id)
        run_silent(path)

    en_time = {t: enabling(t) for t in net.timed if net.is_enabled(m, t)}
    return ReplayState(
        marking=m,
        enabling_time=en_time,
        last_event_time=last,
        token_time=tuple(tok),
        silent_fired=tuple(silent_fired),
        durations=tuple(durations),
    )


# ---------------------------------------------------------------------------
# PNML and dot
# ---------------------------------------------------------------------------

PNML_NS = "http://www.pnml.org/version-2009/grammar/pnmlcoremodel"


def _text(parent, tag, value):
    el = ET.SubElement(parent, tag)
    ET.SubElement(el, "text").text = str(value)
    return el


def pnml_tree(net: PetriNet, transition_extras=None, net_extras=None) -> ET.Element:
    root = ET.Element("pnml")
    net_el = ET.SubElement(root, "net", id="net1", type=PNML_NS)
    _text(net_el, "name", "net1")
    if net_extras is not None:
        net_extras(net_el)
    page = ET.SubElement(net_el, "page", id="n0")
    for i, p in enumerate(net.places):
        pl = ET.SubElement(page, "place", id=p)
        _text(pl, "name", p)
        if net.initial_marking[i]:
            _text(pl, "initialMarking", net.initial_marking[i])
    for i, t in enumerate(net.transitions):
        tr = ET.SubElement(page, "transition", id=t.name)
        _text(tr, "name", t.label if t.label is not None else t.name)
        if t.silent:
            ET.SubElement(tr, "toolspecific", tool="ProM", version="6.4",
                          activity="$invisible$", localNodeID=t.name)
        if transition_extras is not None:
            transition_extras(tr, i)
    for k, (src, dst) in enumerate(net.arcs):
        ET.SubElement(page, "arc", id=f"arc{k}", source=src, target=dst)
    fm = ET.SubElement(ET.SubElement(net_el, "finalmarkings"), "marking")
    for i, c in enumerate(net.final_marking):
        if c:
            pl = ET.SubElement(fm, "place", idref=net.places[i])
            ET.SubElement(pl, "text").text = str(c)
    return root


def to_pnml(net: PetriNet) -> bytes:
    root = pnml_tree(net)
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def _find_text(el, tag):
    sub = el.find(tag)
    if sub is None:
        return None
    t = sub.find("text")
    return t.text if t is not None else None


def from_pnml(data: bytes | str) -> PetriNet:
    """Read a PNML document written by :func:`to_pnml` or by common tools."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise PetriNetError(f"malformed PNML: {exc}") from exc
    # strip namespaces
    for el in root.iter():
        if isinstance(el.tag, str) and "}" in el.tag:
            el.tag = el.tag.rsplit("}", 1)[1]
    net_el = root.find("net")
    if net_el is None:
        raise PetriNetError("PNML has no <net>")
    places, transitions, arcs = [], [], []
    initial = {}
    for pl in net_el.iter("place"):
        if pl.get("id") is None:
            continue
        places.append(pl.get("id"))
        im = _find_text(pl, "initialMarking")
        if im:
            initial[pl.get("id")] = int(im)
    for tr in net_el.iter("transition"):
        name = tr.get("id")
        label = _find_text(tr, "name")
        silent = any(ts.get("activity") == "$invisible$" for ts in tr.findall("toolspecific"))
        transitions.append(Transition(name, None if silent else (label or name)))
    for arc in net_el.iter("arc"):
        arcs.append((arc.get("source"), arc.get("target")))
    final = {}
    fms = net_el.find("finalmarkings")
    if fms is not None:
        mk = fms.find("marking")
        if mk is not None:
            for pl in mk.findall("place"):
                t = pl.find("text")
                final[pl.get("idref")] = int(t.text) if t is not None else 1
    return PetriNet(places, transitions, arcs, initial or None, final or None)


def to_dot(net: PetriNet, transition_notes: Mapping[int, str] | None = None) -> str:
    lines = ["digraph petrinet {", "  rankdir=LR;"]
    for i, p in enumerate(net.places):
        tokens = net.initial_marking[i]
        lab = "&#9679;" if tokens else ""
        extra = ", peripheries=2" if net.final_marking[i] else ""
        lines.append(f'  "{p}" [shape=circle, label="{lab}", xlabel="{p}"{extra}];')
    for i, t in enumerate(net.transitions):
        if t.silent:
            lines.append(f'  "{t.name}" [shape=box, style=filled, fillcolor=black, label="", width=0.15];')
        else:
            note = transition_notes.get(i) if transition_notes else None
            lab = t.label if not note else f"{t.label}\\n{note}"
            lines.append(f'  "{t.name}" [shape=box, label="{lab}"];')
    for src, dst in net.arcs:
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
