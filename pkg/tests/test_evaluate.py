import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import T0, event_logs, log_of
from gdtspn_knn.eventlog import EventLog
from gdtspn_knn.evaluate import (COLUMNS, ExperimentConfig, IterationMetrics, iteration_times,
                                 read_report, run_experiment, write_plot_data, write_report)
from gdtspn_knn.synthetic import deterministic_log, two_variant_log

FAST = dict(N=4, k=10, n_runs=50)


def test_iteration_times_exact():
    tr = log_of([("A", 0), ("B", 7)])[0]
    mean = Fraction(10_000, 3)
    times = iteration_times(tr, mean, 20)
    assert len(times) == 40
    assert times[19] == tr.start + mean
    assert times[39] == tr.start + 2 * mean
    assert all(b > a for a, b in zip(times, times[1:]))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(N=0)
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("bogus",))
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("average", "average"))
    assert ExperimentConfig(methods=("knn_average_7",)).methods == ("knn_average_7",)
    assert ExperimentConfig().iterations == 40


def test_k_larger_than_train_rejected():
    train = deterministic_log(5)
    with pytest.raises(ValueError):
        run_experiment(train, deterministic_log(2, prefix="t"), ExperimentConfig(k=6))


def _average_oracle(train, test, N):
    """Signed errors of the elapsed-time-corrected mean, in exact arithmetic."""
    mean = Fraction(sum(t.end - t.start for t in train), len(train))
    out = {}
    for tr in test:
        for i in range(1, 2 * N + 1):
            t0 = tr.start + mean * i / N
            if tr.end <= t0:
                break
            pred = max(mean - (t0 - tr.start), 0) / 1000
            actual = (tr.end - t0) / 1000
            out.setdefault(i, []).append(float(pred - actual))
    return out


def test_average_method_against_exact_oracle():
    train = two_variant_log(60, seed=2)
    test = two_variant_log(15, seed=3, start=train.traces[-1].end + 3_600_000, prefix="t")
    N = 5
    metrics = run_experiment(train, test, ExperimentConfig(N=N, methods=("average",)))
    oracle = _average_oracle(train, test, N)
    assert len(metrics) == 2 * N
    for m in metrics:
        errs = oracle.get(m.iteration, [])
        assert m.active_traces == len(errs)
        if errs:
            assert m.mean_error == pytest.approx(sum(errs) / len(errs), rel=1e-9, abs=1e-6)
            sse = sum(e * e for e in errs)
            assert m.rmse ** 2 * m.active_traces == pytest.approx(sse, rel=1e-9)
        else:
            assert math.isnan(m.mean_error) and math.isnan(m.rmse)


def test_zero_prediction_rmse_is_rms_of_remaining():
    # from iteration N on, elapsed >= mean duration so the corrected mean predicts 0
    train = two_variant_log(60, seed=5)
    test = two_variant_log(20, seed=6, start=train.traces[-1].end + 3_600_000, prefix="t")
    N = 4
    metrics = run_experiment(train, test, ExperimentConfig(N=N, methods=("average",)))
    mean = Fraction(sum(t.duration_ms for t in train), len(train))
    for m in metrics:
        if m.iteration < N or not m.active_traces:
            continue
        rem = [float((tr.end - (tr.start + mean * m.iteration / N)) / 1000) for tr in test
               if tr.end > tr.start + mean * m.iteration / N]
        assert m.rmse == pytest.approx(math.sqrt(sum(r * r for r in rem) / len(rem)), rel=1e-9)
        assert m.mean_error == pytest.approx(-sum(rem) / len(rem), rel=1e-9)


def test_short_trace_contributes_nothing():
    train = log_of([("A", 0), ("B", 100)], [("A", 0), ("B", 100)])
    test = log_of([("A", 0), ("B", 4)], [("A", 0), ("B", 100)], start=T0 + 10**6)
    metrics = run_experiment(train, test, ExperimentConfig(N=20, methods=("average",)))
    # mean/N = 5 s > 4 s, so the first trace is never active
    assert metrics[0].active_traces == 1
    assert sum(m.active_traces for m in metrics) == 19


def test_deterministic_world_all_methods_zero():
    train = deterministic_log(40)
    test = deterministic_log(5, start=train.traces[-1].end + 10**6, prefix="t")
    cfg = ExperimentConfig(N=5, k=10, n_runs=20,
                           methods=("gdtspn_knn", "gdtspn", "average", "knn_average_10"))
    for m in run_experiment(train, test, cfg):
        if m.active_traces:
            assert abs(m.mean_error) < 1e-6 and abs(m.rmse) < 1e-6
            assert m.failures == 0


@settings(max_examples=25, deadline=None)
@given(event_logs(max_traces=10, min_traces=2, labels="ABC"), st.integers(1, 4))
def test_metric_invariants(log, N):
    traces = sorted(log.traces, key=lambda t: t.start)
    half = len(traces) // 2
    train, test = traces[:half], traces[half:]
    cfg = ExperimentConfig(N=N, k=1, n_runs=10,
                           methods=("gdtspn_knn", "gdtspn", "average", "knn_average_1"))
    metrics = run_experiment(EventLog(tuple(train)), EventLog(tuple(test)), cfg)
    assert len(metrics) == 2 * N * 4
    for method in cfg.methods:
        rows = [m for m in metrics if m.method == method]
        assert [m.iteration for m in rows] == list(range(1, 2 * N + 1))
        total = [m.active_traces + m.failures for m in rows]
        assert all(a >= b for a, b in zip(total, total[1:]))
        assert sum(m.active_traces for m in rows) <= len(test) * 2 * N
        for m in rows:
            if m.active_traces:
                assert m.rmse + 1e-9 >= abs(m.mean_error)
            else:
                assert math.isnan(m.rmse)


def _sample_metrics():
    return [IterationMetrics(1, "average", -1.5, 2.25, 3, 0),
            IterationMetrics(1, "gdtspn", 0.1 + 0.2, 1e-300, 3, 1),
            IterationMetrics(2, "average", math.nan, math.nan, 0, 0),
            IterationMetrics(2, "gdtspn", 7.0, 7.0, 1, 2)]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_report_round_trip(fmt):
    ms = _sample_metrics()
    back = read_report(write_report(ms, fmt), fmt)
    assert len(back) == 4
    for a, b in zip(ms, back):
        assert a.row()[:2] == b.row()[:2] and a.row()[4:] == b.row()[4:]
        for x, y in ((a.mean_error, b.mean_error), (a.rmse, b.rmse)):
            assert (math.isnan(x) and math.isnan(y)) or x == y


def test_report_shapes():
    assert write_report([], "csv").decode() == ",".join(COLUMNS) + "\n"
    assert len(write_report(_sample_metrics()).decode().splitlines()) == 5
    assert b"NaN" not in write_report(_sample_metrics(), "json")
    with pytest.raises(ValueError):
        write_report([], "xml")


def test_plot_data(tmp_path):
    paths = write_plot_data(_sample_metrics(), tmp_path / "plots")
    assert sorted(p.name for p in paths) == ["active_traces.csv", "mean_error_s.csv", "rmse_s.csv"]
    lines = (tmp_path / "plots" / "active_traces.csv").read_text().splitlines()
    assert lines == ["iteration,average,gdtspn", "1,3,3", "2,0,1"]


def test_parallel_report_byte_identical():
    train = two_variant_log(120, seed=8)
    test = two_variant_log(6, seed=9, start=train.traces[-1].end + 3_600_000, prefix="t")
    cfg = ExperimentConfig(**FAST, seed=3)
    one = write_report(run_experiment(train, test, cfg, jobs=1))
    two = write_report(run_experiment(train, test, cfg, jobs=2))
    assert one == two
    other = write_report(run_experiment(train, test, ExperimentConfig(**FAST, seed=4), jobs=1))
    assert other != one
