"""Remaining-time predictors: GDT_SPN with and without kNN preselection,
plus the averaging benchmarks."""
from __future__ import annotations

import math
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .discovery import inductive_miner, tree_to_petri
from .eventlog import Trace
from .gdtspn import GDTSPN, PredictionFailure, SimulationConfig, enrich, simulate_runs, summarize_runs
from .knn import TrainingSet, as_training_set, select_neighbors
from .petri import ReplayError, replay

GDTSPN_KNN = "gdtspn_knn"
GDTSPN_FULL = "gdtspn"
AVERAGE = "average"


def knn_average_tag(k: int) -> str:
    return f"knn_average_{k}"


@dataclass(frozen=True)
class Prediction:
    remaining: float  # seconds
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.remaining >= 0:
            raise ValueError("remaining time must be >= 0")


def prediction_rng(seed: int, case_id: str, iteration: int, method: str) -> np.random.Generator:
    """Stream for one (case, iteration, method), independent of execution order."""
    key = [int(seed) % 2**32, zlib.crc32(case_id.encode("utf-8")), int(iteration),
           zlib.crc32(method.encode("utf-8"))]
    return np.random.default_rng(np.random.SeedSequence(key))


def build_model(traces) -> GDTSPN:
    traces = list(traces)
    net = tree_to_petri(inductive_miner([tr.activities for tr in traces]))
    return enrich(net, traces)


class ModelCache:
    """Caches the full-log model and recently built neighbour models."""

    def __init__(self, max_neighbor_models: int = 256):
        self._full: dict = {}
        self._nbr: OrderedDict = OrderedDict()
        self.max_neighbor_models = max_neighbor_models
        self.builds = 0

    def full(self, train: TrainingSet) -> GDTSPN:
        key = id(train.log)
        if key not in self._full:
            # the log is kept alive alongside its model so that its id stays unique
            self._full[key] = (train.log, build_model(train.log.traces))
            self.builds += 1
        return self._full[key][1]

    def set_full(self, train: TrainingSet, model: GDTSPN):
        self._full[id(train.log)] = (train.log, model)

    def neighbors(self, train: TrainingSet, indices) -> GDTSPN:
        key = (id(train.log), tuple(sorted(indices)))
        hit = self._nbr.get(key)
        if hit is not None and hit[0] is train.log:
            self._nbr.move_to_end(key)
            return hit[1]
        model = build_model(train.log.traces[i] for i in key[1])
        self.builds += 1
        self._nbr[key] = (train.log, model)
        if len(self._nbr) > self.max_neighbor_models:
            self._nbr.popitem(last=False)
        return model


def _elapsed(prefix: Trace, t0: float) -> float:
    if t0 < prefix.start:
        raise ValueError("t0 precedes the start of the case")
    return (t0 - prefix.start) / 1000.0


def _simulate(model: GDTSPN, prefix: Trace, t0: float, cfg: SimulationConfig, seed):
    try:
        state = replay(model.net, prefix)
    except ReplayError as exc:
        raise PredictionFailure(f"prefix replay failed: {exc}") from exc
    if t0 < state.last_event_time:
        raise ValueError("t0 precedes the last observed event")
    runs = simulate_runs(model, state, t0, cfg.n_runs, seed, cfg.max_firings_per_run)
    return summarize_runs(runs)


def predict_gdtspn_knn(train, prefix: Trace, t0: float, k: int = 100,
                       cfg: SimulationConfig = SimulationConfig(),
                       rng: np.random.Generator | None = None,
                       cache: ModelCache | None = None) -> Prediction:
    """Select ``k`` neighbours, mine and enrich a model from them, simulate."""
    ts = as_training_set(train)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    _elapsed(prefix, t0)
    sel = select_neighbors(ts, prefix, k, rng)
    if cache is not None:
        model = cache.neighbors(ts, sel.indices)
    else:
        model = build_model(ts.log.traces[i] for i in sorted(sel.indices))
    seed = rng.integers(0, 2**63, dtype=np.int64)
    mean, aborted = _simulate(model, prefix, t0, cfg, seed)
    return Prediction(max(mean, 0.0), GDTSPN_KNN, {
        "matched": sel.matched_count,
        "random_fill": sel.random_fill_count,
        "aborted_runs": aborted,
    })


def predict_gdtspn(train, prefix: Trace, t0: float,
                   cfg: SimulationConfig = SimulationConfig(),
                   cache: ModelCache | None = None,
                   rng: np.random.Generator | None = None) -> Prediction:
    """Original method: one model mined and enriched from the whole training log."""
    ts = as_training_set(train)
    cache = cache if cache is not None else ModelCache()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    _elapsed(prefix, t0)
    model = cache.full(ts)
    seed = rng.integers(0, 2**63, dtype=np.int64)
    mean, aborted = _simulate(model, prefix, t0, cfg, seed)
    return Prediction(max(mean, 0.0), GDTSPN_FULL, {"aborted_runs": aborted})


def benchmark_average(train, elapsed: float, subtract_elapsed: bool = True) -> Prediction:
    """Mean training case duration, less the time already elapsed (floored at 0)."""
    ts = as_training_set(train)
    mean = math.fsum(ts.durations.tolist()) / len(ts)
    rem = max(0.0, mean - elapsed) if subtract_elapsed else mean
    return Prediction(rem, AVERAGE)


def benchmark_knn_average(train, prefix: Trace, t0: float, k: int,
                          rng: np.random.Generator, subtract_elapsed: bool = True) -> Prediction:
    ts = as_training_set(train)
    elapsed = _elapsed(prefix, t0)
    sel = select_neighbors(ts, prefix, k, rng)
    mean = math.fsum(ts.durations[list(sel.indices)].tolist()) / k
    rem = max(0.0, mean - elapsed) if subtract_elapsed else mean
    return Prediction(rem, knn_average_tag(k), {
        "matched": sel.matched_count,
        "random_fill": sel.random_fill_count,
    })
