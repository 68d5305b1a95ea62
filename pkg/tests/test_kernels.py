import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import special

from gdtspn_knn import kernels
from gdtspn_knn.eventlog import prefix_at
from gdtspn_knn.petri import replay
from gdtspn_knn.predict import build_model
from gdtspn_knn.synthetic import two_variant_log

MASK = (1 << 64) - 1


def splitmix64(state):
    """Reference SplitMix64 step on Python ints: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def test_stream_init_matches_reference_splitmix64():
    # published first output of SplitMix64 seeded with 0
    assert int(kernels.stream_init(np.uint64(0), 0)) == 0xE220A8397B1DCDAF
    for seed in (0, 1, 12345, 2**63 + 7):
        state = seed
        for run in range(5):
            state, expect = splitmix64(state)
            assert int(kernels.stream_init(np.uint64(seed), run)) == expect
            got = kernels.stream_init_np(np.uint64(seed), np.array([run]))[0]
            assert int(got) == expect


def test_bits_to_unit_open_interval():
    assert 0.0 < float(kernels.bits_to_unit(np.uint64(0))) < 1e-15
    assert float(kernels.bits_to_unit_np(np.array([MASK], dtype=np.uint64))[0]) < 1.0
    assert 1.0 - 1e-15 < float(kernels.bits_to_unit(np.uint64(MASK))) < 1.0


@pytest.mark.parametrize("p", np.concatenate([
    np.logspace(-300, -1, 400), np.linspace(0.01, 0.99, 199), 1 - np.logspace(-15, -2, 100)]))
def test_probit_relative_error(p):
    ref = special.ndtri(p)
    got = kernels.norm_ppf(p)
    assert abs(got - ref) <= 1e-9 * max(abs(ref), 1e-300) + 1e-15
    ref_isf = -special.ndtri(p)
    assert abs(kernels.norm_isf(p) - ref_isf) <= 1e-9 * max(abs(ref_isf), 1e-300) + 1e-15


def test_numpy_probit_matches_loop():
    p = np.concatenate([np.logspace(-300, -1, 200), np.linspace(0.05, 0.95, 50)])
    loop = np.array([kernels.norm_isf(x) for x in p])
    np.testing.assert_allclose(kernels.norm_isf_np(p), loop, rtol=1e-14, atol=0)
    loop = np.array([kernels.norm_ppf(x) for x in p])
    np.testing.assert_allclose(kernels.norm_ppf_np(p), loop, rtol=1e-14, atol=0)


@pytest.mark.parametrize("kind,mu,sigma,lower", [
    (kernels.KIND_NORMAL, 100.0, 10.0, 0.0),
    (kernels.KIND_NORMAL, 100.0, 10.0, 130.0),
    (kernels.KIND_NORMAL, 100.0, 10.0, 500.0),
    (kernels.KIND_NORMAL, -5.0, 2.0, 0.0),
    (kernels.KIND_DIRAC, 50.0, 0.0, 80.0),
    (kernels.KIND_DIRAC, 50.0, 0.0, 10.0),
])
def test_truncated_batch_backends_agree(kind, mu, sigma, lower):
    u = 1.0 - np.random.default_rng(3).random(2000)
    a = kernels.sample_truncated_batch_loop(kind, mu, sigma, lower, u)
    b = kernels.sample_truncated_batch_np(kind, mu, sigma, lower, u)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    assert np.all(a >= lower)


def test_masked_distances_backends_agree():
    rng = np.random.default_rng(0)
    X = rng.random((500, 6)) * 40
    q = rng.random(6)
    used = np.array([1, 4], dtype=np.int64)
    a = kernels.masked_distances_loop(X, q, used, 40.0)
    b = kernels.masked_distances_np(X, q, used, 40.0)
    ref = np.sqrt(((X[:, used] / 40.0 - q[used]) ** 2).sum(axis=1))
    np.testing.assert_allclose(a, ref, rtol=1e-14)
    np.testing.assert_allclose(b, ref, rtol=1e-14)
    empty = np.array([], dtype=np.int64)
    assert np.all(kernels.masked_distances_loop(X, q, empty, 1.0) == 0)
    assert np.all(kernels.masked_distances_np(X, q, empty, 1.0) == 0)


def _sim_inputs(hours_in):
    log = two_variant_log(300, seed=5)
    model = build_model(log.traces)
    tr = log.traces[1]
    t0 = tr.start + hours_in * 3_600_000
    st = replay(model.net, prefix_at(tr, t0))
    marking = np.asarray(st.marking, dtype=np.int64)
    ptime = np.array([0.0 if x is None else (x - t0) / 1000.0 for x in st.token_time])
    final = np.asarray(model.net.final_marking, dtype=np.int64)
    return model.arrays + (marking, ptime, final)


@pytest.mark.parametrize("hours_in", [0, 1, 5, 20])
def test_simulation_backends_agree(hours_in):
    args = _sim_inputs(hours_in) + (300, 10_000, np.uint64(99))
    a = kernels.simulate_runs_loop(*args)
    b = kernels.simulate_runs_np(*args)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-9)
    assert np.all(a >= 0)


def test_simulation_livelock_guard_gives_nan():
    args = _sim_inputs(1) + (20, 1, np.uint64(1))
    assert np.all(np.isnan(kernels.simulate_runs_loop(*args)))
    assert np.all(np.isnan(kernels.simulate_runs_np(*args)))


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, GDTSPN_KNN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from gdtspn_knn import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    if kernels.HAVE_NUMBA:
        env.pop("GDTSPN_KNN_DISABLE_NUMBA")
        out = subprocess.run([sys.executable, "-c", "from gdtspn_knn import kernels; print(kernels.backend())"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "numba"
