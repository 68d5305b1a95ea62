"""Times-to-occurrence features and nearest-neighbour selection of training traces."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels
from .eventlog import EventLog, Trace

ABSENT = -1.0


@dataclass(frozen=True)
class NeighborSelection:
    indices: tuple[int, ...]
    distances: tuple[float, ...]
    matched_count: int
    random_fill_count: int

    @property
    def k(self) -> int:
        return len(self.indices)


def times_to_occurrence(trace: Trace | None, voc: Sequence[str]) -> np.ndarray:
    """Seconds from trace start to the last event of each vocabulary activity, -1 if absent."""
    vec = np.full(len(voc), ABSENT)
    if trace is None:
        return vec
    pos = {a: i for i, a in enumerate(voc)}
    start = trace.start
    for ev in trace.events:  # later events overwrite earlier ones
        i = pos.get(ev.activity)
        if i is not None:
            vec[i] = (ev.timestamp - start) / 1000.0
    return vec


def same_route(train_trace: Trace, prefix: Trace | None) -> bool:
    if prefix is None:
        return True
    n = len(prefix.events)
    if n > len(train_trace.events):
        return False
    return all(a.activity == b.activity for a, b in zip(train_trace.events, prefix.events))


class TrainingSet:
    """Pre-featurised training log, reused across predictions."""

    def __init__(self, log: EventLog):
        if not len(log):
            raise ValueError("training log is empty")
        self.log = log
        self.voc = log.vocabulary
        self.vectors = np.vstack([times_to_occurrence(tr, self.voc) for tr in log.traces])
        pos = self.vectors[self.vectors >= 0]
        self.max_tto = float(pos.max()) if pos.size else 0.0
        self.routes = [tr.activities for tr in log.traces]

    def __len__(self):
        return len(self.log)

    @cached_property
    def durations(self) -> np.ndarray:
        return np.array([tr.duration_ms / 1000.0 for tr in self.log.traces])

    def matching(self, prefix: Trace | None) -> np.ndarray:
        if prefix is None:
            return np.ones(len(self), dtype=bool)
        route = prefix.activities
        n = len(route)
        return np.fromiter((r[:n] == route for r in self.routes), dtype=bool, count=len(self))


def as_training_set(train) -> TrainingSet:
    return train if isinstance(train, TrainingSet) else TrainingSet(train)


def build_candidates(train, prefix: Trace | None, voc: Sequence[str] | None = None):
    """Feature matrix with non-matching traces replaced by the penalty vector.

    Returns ``(vectors, penalty_mask, max_tto)``.
    """
    ts = as_training_set(train)
    if voc is not None and tuple(voc) != ts.voc:
        vectors = np.vstack([times_to_occurrence(tr, voc) for tr in ts.log.traces])
        pos = vectors[vectors >= 0]
        max_tto = float(pos.max()) if pos.size else 0.0
    else:
        vectors, max_tto = ts.vectors.copy(), ts.max_tto
    penalty = ~ts.matching(prefix)
    vectors[penalty] = max_tto
    return vectors, penalty, max_tto


def _query(prefix, voc, max_tto):
    q = times_to_occurrence(prefix, voc)
    used = np.flatnonzero(q >= 0)
    scale = max_tto if max_tto > 0 else 1.0
    qn = np.clip(np.where(q >= 0, q / scale, 0.0), 0.0, 1.0)
    return qn, used, scale


def select_neighbors(train, prefix: Trace | None, k: int, rng: np.random.Generator) -> NeighborSelection:
    """The ``k`` training traces closest to ``prefix``.

    Only activities present in the prefix contribute to the distance, each
    scaled to [0, 1] by the largest time-to-occurrence in the training set.
    Same-route traces always rank before penalised ones; if there are fewer
    than ``k`` of them the remainder is drawn at random from the rest.
    """
    ts = as_training_set(train)
    n = len(ts)
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    vectors, penalty, max_tto = build_candidates(ts, prefix)
    qn, used, scale = _query(prefix, ts.voc, max_tto)
    dist = kernels.masked_distances(vectors, qn, used.astype(np.int64), float(scale))

    matched = np.flatnonzero(~penalty)
    order = matched[np.lexsort((matched, dist[matched]))]
    chosen = order[:k]
    fill = k - chosen.size
    if fill > 0:
        pool = np.flatnonzero(penalty)
        extra = rng.choice(pool, size=fill, replace=False)
        chosen = np.concatenate([chosen, extra])
    final = chosen[np.lexsort((chosen, dist[chosen]))]
    return NeighborSelection(
        indices=tuple(int(i) for i in final),
        distances=tuple(float(dist[i]) for i in final),
        matched_count=int(min(k, matched.size)),
        random_fill_count=int(max(fill, 0)),
    )
