"""Periodic-prediction evaluation over a test log and report serialisation."""
from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .eventlog import EventLog, Trace, mean_case_duration_ms, prefix_at
from .gdtspn import PredictionFailure, SimulationConfig, simulate_runs
from .knn import TrainingSet, select_neighbors
from .petri import ReplayError, replay
from .predict import (AVERAGE, GDTSPN_FULL, GDTSPN_KNN, ModelCache, benchmark_average,
                      benchmark_knn_average, build_model, knn_average_tag, predict_gdtspn,
                      predict_gdtspn_knn, prediction_rng)
from .synthetic import deterministic_log

DEFAULT_METHODS = (GDTSPN_KNN, GDTSPN_FULL, AVERAGE, knn_average_tag(10), knn_average_tag(100))
COLUMNS = ("iteration", "method", "mean_error_s", "rmse_s", "active_traces", "failures")
_KNN_AVG = "knn_average_"


def knn_average_k(method: str) -> int | None:
    if method.startswith(_KNN_AVG):
        tail = method[len(_KNN_AVG):]
        if tail.isdigit() and int(tail) > 0:
            return int(tail)
    return None


def validate_method(method: str) -> str:
    if method in (GDTSPN_KNN, GDTSPN_FULL, AVERAGE) or knn_average_k(method):
        return method
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 20
    k: int = 100
    n_runs: int = 500
    seed: int = 0
    methods: tuple[str, ...] = DEFAULT_METHODS
    subtract_elapsed: bool = True
    max_firings: int = 10_000

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        object.__setattr__(self, "methods", tuple(validate_method(m) for m in self.methods))
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate methods")

    @property
    def iterations(self) -> int:
        return 2 * self.N

    @property
    def simulation(self) -> SimulationConfig:
        return SimulationConfig(self.n_runs, self.max_firings, self.seed)


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    method: str
    mean_error: float  # seconds, predicted - actual
    rmse: float
    active_traces: int  # successful predictions
    failures: int = 0

    def row(self) -> tuple:
        return (self.iteration, self.method, self.mean_error, self.rmse,
                self.active_traces, self.failures)


def iteration_times(trace: Trace, mean_ms: Fraction, N: int) -> list[Fraction]:
    """Exact prediction instants (ms) for iterations 1..2N."""
    return [trace.start + mean_ms * i / N for i in range(1, 2 * N + 1)]


# ---------------------------------------------------------------------------
# per-trace worker
# ---------------------------------------------------------------------------

_STATE: dict = {}


def _init_state(train: TrainingSet, test: EventLog, cfg: ExperimentConfig,
                cache: ModelCache):
    _STATE.update(train=train, test=test, cfg=cfg, cache=cache,
                  mean_ms=mean_case_duration_ms(train.log))


def _predict_one(method, train, prefix, t0, iteration, cfg, cache):
    rng = prediction_rng(cfg.seed, prefix.case_id, iteration, method)
    if method == GDTSPN_KNN:
        return predict_gdtspn_knn(train, prefix, t0, cfg.k, cfg.simulation, rng, cache)
    if method == GDTSPN_FULL:
        return predict_gdtspn(train, prefix, t0, cfg.simulation, cache, rng)
    elapsed = (t0 - prefix.start) / 1000.0
    if method == AVERAGE:
        return benchmark_average(train, elapsed, cfg.subtract_elapsed)
    return benchmark_knn_average(train, prefix, t0, knn_average_k(method), rng,
                                 cfg.subtract_elapsed)


def _evaluate_trace(j: int) -> list[tuple[int, str, float | None]]:
    """``(iteration, method, signed error or None on failure)`` for test trace ``j``."""
    train, cfg, cache = _STATE["train"], _STATE["cfg"], _STATE["cache"]
    trace = _STATE["test"].traces[j]
    out = []
    for i, t0_exact in enumerate(iteration_times(trace, _STATE["mean_ms"], cfg.N), start=1):
        if trace.end <= t0_exact:
            break
        prefix = prefix_at(trace, t0_exact)
        t0 = float(t0_exact)
        actual = float((trace.end - t0_exact) / 1000)
        for m in cfg.methods:
            try:
                pred = _predict_one(m, train, prefix, t0, i, cfg, cache)
            except (PredictionFailure, ReplayError):
                out.append((i, m, None))
                continue
            out.append((i, m, pred.remaining - actual))
    return out


def _warm_up():
    """Compile the numba kernels once so forked workers inherit them."""
    log = deterministic_log(2)
    model = build_model(log.traces)
    st = replay(model.net, prefix_at(log.traces[0], log.traces[0].start))
    simulate_runs(model, st, float(log.traces[0].start), 2, 0)
    select_neighbors(TrainingSet(log), log.traces[0], 1, np.random.default_rng(0))


def aggregate(results: Sequence[list], cfg: ExperimentConfig) -> list[IterationMetrics]:
    """Deterministic reduction ordered by (iteration, method) then test-trace index."""
    errs = {(i, m): [] for i in range(1, cfg.iterations + 1) for m in cfg.methods}
    fails = {key: 0 for key in errs}
    for per_trace in results:
        for i, m, e in per_trace:
            if e is None:
                fails[(i, m)] += 1
            else:
                errs[(i, m)].append(e)
    metrics = []
    for (i, m), es in errs.items():
        n = len(es)
        if n:
            mean = math.fsum(es) / n
            rmse = math.sqrt(math.fsum(e * e for e in es) / n)
        else:
            mean = rmse = math.nan
        metrics.append(IterationMetrics(i, m, mean, rmse, n, fails[(i, m)]))
    return metrics


def run_experiment(train: EventLog | TrainingSet, test: EventLog,
                   cfg: ExperimentConfig = ExperimentConfig(), jobs: int = 1,
                   progress: Callable[[int, int], None] | None = None) -> list[IterationMetrics]:
    """Predict every active (test trace, iteration) pair with each method."""
    ts = train if isinstance(train, TrainingSet) else TrainingSet(train)
    if not len(test):
        raise ValueError("test log is empty")
    for m in cfg.methods:
        k = cfg.k if m == GDTSPN_KNN else knn_average_k(m)
        if k is not None and k > len(ts):
            raise ValueError(f"{m}: k={k} exceeds the {len(ts)} training traces")
    cache = ModelCache()
    if GDTSPN_FULL in cfg.methods:
        cache.full(ts)  # built once, shared read-only by all workers
    _init_state(ts, test, cfg, cache)
    n = len(test)
    results: list = [None] * n
    jobs = max(1, int(jobs))
    if jobs == 1 or n == 1:
        for j in range(n):
            results[j] = _evaluate_trace(j)
            if progress:
                progress(j + 1, n)
    else:
        if kernels.USE_NUMBA:
            _warm_up()
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_init_state,
                                 initargs=(ts, test, cfg, cache)) as pool:
            for j, res in enumerate(pool.map(_evaluate_trace, range(n), chunksize=1)):
                results[j] = res
                if progress:
                    progress(j + 1, n)
    return aggregate(results, cfg)


def default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_report(metrics: Sequence[IterationMetrics], fmt: str = "csv") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for m in metrics:
            w.writerow([_fmt(x) for x in m.row()])
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        rows = []
        for m in metrics:
            row = dict(zip(COLUMNS, m.row()))
            for key in ("mean_error_s", "rmse_s"):
                if math.isnan(row[key]):
                    row[key] = None
            rows.append(row)
        return (json.dumps(rows, indent=1, allow_nan=False) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


def read_report(data: bytes, fmt: str = "csv") -> list[IterationMetrics]:
    if fmt == "csv":
        reader = csv.reader(io.StringIO(data.decode("utf-8")))
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise ValueError("report header does not match")
        rows = [dict(zip(COLUMNS, r)) for r in reader]
    elif fmt == "json":
        rows = json.loads(data)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    out = []
    for r in rows:
        def num(v):
            return math.nan if v is None else float(v)
        out.append(IterationMetrics(int(r["iteration"]), r["method"], num(r["mean_error_s"]),
                                    num(r["rmse_s"]), int(r["active_traces"]),
                                    int(r["failures"])))
    return out


def write_plot_data(metrics: Sequence[IterationMetrics], directory) -> list[Path]:
    """One CSV per metric: a row per iteration, a column per method."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    methods = list(dict.fromkeys(m.method for m in metrics))
    iters = sorted({m.iteration for m in metrics})
    table = {(m.iteration, m.method): m for m in metrics}
    paths = []
    for name, attr in (("mean_error_s", "mean_error"), ("rmse_s", "rmse"),
                       ("active_traces", "active_traces")):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", *methods])
        for i in iters:
            w.writerow([i, *(_fmt(getattr(table[(i, m)], attr)) if (i, m) in table else ""
                             for m in methods)])
        path = directory / f"{name}.csv"
        path.write_bytes(buf.getvalue().encode("utf-8"))
        paths.append(path)
    return paths
