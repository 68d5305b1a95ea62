"""Compare the numba and numpy kernels on the two hot paths.

    python3 benchmarks/bench_simulation.py [--runs 500] [--repeat 5]

Times Monte Carlo simulation on a model mined from the bundled two-variant log
and masked kNN distances over a large random feature matrix.  The numba
timings exclude compilation (one warm-up call first).
"""
import argparse
import time

import numpy as np

from gdtspn_knn import kernels
from gdtspn_knn.eventlog import prefix_at
from gdtspn_knn.petri import replay
from gdtspn_knn.predict import build_model
from gdtspn_knn.synthetic import two_variant_log


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def simulation_inputs(n_traces=400):
    log = two_variant_log(n_traces, seed=1)
    model = build_model(log.traces)
    tr = log.traces[0]
    t0 = tr.start + 3_600_000
    st = replay(model.net, prefix_at(tr, t0))
    marking = np.asarray(st.marking, dtype=np.int64)
    ptime = np.array([0.0 if x is None else (x - t0) / 1000.0 for x in st.token_time])
    final = np.asarray(model.net.final_marking, dtype=np.int64)
    return model.arrays + (marking, ptime, final)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=200_000)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    arrs = simulation_inputs()
    sim_args = arrs + (args.runs, 10_000, np.uint64(42))
    kernels.simulate_runs_loop(*sim_args)  # compile
    a = kernels.simulate_runs_loop(*sim_args)
    b = kernels.simulate_runs_np(*sim_args)
    print(f"simulation ({args.runs} runs): max |numba - numpy| = {np.max(np.abs(a - b)):.3g} s")
    t_nb = best_of(lambda: kernels.simulate_runs_loop(*sim_args), args.repeat)
    t_np = best_of(lambda: kernels.simulate_runs_np(*sim_args), args.repeat)
    print(f"  numba  {t_nb * 1e3:9.3f} ms")
    print(f"  numpy  {t_np * 1e3:9.3f} ms   (x{t_np / t_nb:.1f})")

    rng = np.random.default_rng(0)
    X = rng.random((args.rows, 8))
    q = rng.random(8)
    used = np.array([0, 2, 3, 5], dtype=np.int64)
    kernels.masked_distances_loop(X, q, used, 1.0)
    d1 = kernels.masked_distances_loop(X, q, used, 1.0)
    d2 = kernels.masked_distances_np(X, q, used, 1.0)
    print(f"distances ({args.rows} rows): max |numba - numpy| = {np.max(np.abs(d1 - d2)):.3g}")
    t_nb = best_of(lambda: kernels.masked_distances_loop(X, q, used, 1.0), args.repeat)
    t_np = best_of(lambda: kernels.masked_distances_np(X, q, used, 1.0), args.repeat)
    print(f"  numba  {t_nb * 1e3:9.3f} ms")
    print(f"  numpy  {t_np * 1e3:9.3f} ms   (x{t_np / t_nb:.1f})")


if __name__ == "__main__":
    main()
