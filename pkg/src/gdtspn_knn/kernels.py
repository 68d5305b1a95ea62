"""Hot numeric kernels.

Every kernel has a loop form, compiled with numba when it is importable, and a
vectorised numpy form.  Setting ``GDTSPN_KNN_DISABLE_NUMBA=1`` in the
environment makes the dispatch names at the bottom of this module point at the
numpy forms.  Both forms consume random numbers in the same order, so for a
given seed they agree up to last-ulp differences of the libm functions.
"""
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("GDTSPN_KNN_DISABLE_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
)

KIND_IMMEDIATE = 0
KIND_NORMAL = 1
KIND_DIRAC = 2

# survival mass at or below which a normal is treated as exhausted
DIRAC_TAIL = 1e-12

SQRT1_2 = 0.7071067811865476
SQRT_2PI = 2.5066282746310002

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S12 = np.uint64(12)
_INV52 = 2.0**-52

# Acklam's rational approximation of the probit function
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425

A1, A2, A3, A4, A5, A6 = _A
B1, B2, B3, B4, B5 = _B
C1, C2, C3, C4, C5, C6 = _C
D1, D2, D3, D4 = _D


def _kernel(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# loop forms
# ---------------------------------------------------------------------------


@_kernel
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@_kernel
def stream_init(seed, run):
    return mix64(seed + GOLDEN * (np.uint64(run) + np.uint64(1)))


@_kernel
def bits_to_unit(z):
    # (0, 1), never exactly 0 or 1
    return (float(z >> _S12) + 0.5) * _INV52


@_kernel
def norm_sf(x):
    return 0.5 * math.erfc(x * SQRT1_2)


@_kernel
def norm_cdf(x):
    return 0.5 * math.erfc(-x * SQRT1_2)


@_kernel
def _probit_lower(p):
    # p in (0, 0.5]
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((C1 * q + C2) * q + C3) * q + C4) * q + C5) * q + C6) / (
            (((D1 * q + D2) * q + D3) * q + D4) * q + 1.0
        )
    else:
        q = p - 0.5
        r = q * q
        x = (((((A1 * r + A2) * r + A3) * r + A4) * r + A5) * r + A6) * q / (
            ((((B1 * r + B2) * r + B3) * r + B4) * r + B5) * r + 1.0
        )
    # one Halley step against the erfc-based CDF
    e = norm_cdf(x) - p
    u = e * SQRT_2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@_kernel
def norm_ppf(p):
    if p <= 0.5:
        return _probit_lower(p)
    return -_probit_lower(1.0 - p)


@_kernel
def norm_isf(s):
    if s <= 0.5:
        return -_probit_lower(s)
    return _probit_lower(1.0 - s)


@_kernel
def sample_truncated(kind, mu, sigma, lower, u):
    """Inverse-CDF draw of a duration conditioned on being >= ``lower``."""
    if kind == KIND_DIRAC:
        return max(mu, lower)
    qa = norm_sf((lower - mu) / sigma)
    if qa <= DIRAC_TAIL:
        return lower
    t = mu + sigma * norm_isf(u * qa)
    return max(t, lower)


@_kernel
def sample_truncated_batch_loop(kind, mu, sigma, lower, u):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        out[i] = sample_truncated(kind, mu, sigma, lower, u[i])
    return out


@_kernel
def simulate_runs_loop(in_ptr, in_idx, out_ptr, out_idx, timed, kind, mu, sigma, weight,
                       marking0, ptime0, final, n_runs, max_firings, seed):
    n_trans = timed.shape[0]
    n_places = marking0.shape[0]
    out = np.empty(n_runs)
    m = np.empty(n_places, dtype=np.int64)
    pt = np.empty(n_places)
    due = np.empty(n_trans)
    sched = np.zeros(n_trans, dtype=np.bool_)
    en = np.zeros(n_trans, dtype=np.bool_)
    for r in range(n_runs):
        m[:] = marking0
        pt[:] = ptime0
        due[:] = np.inf
        sched[:] = False
        state = stream_init(seed, r)
        clock = 0.0
        result = np.nan
        firings = 0
        while True:
            done = True
            for p in range(n_places):
                if m[p] != final[p]:
                    done = False
                    break
            if done:
                result = clock
                break
            if firings >= max_firings:
                break
            n_imm = 0
            total_w = 0.0
            for t in range(n_trans):
                ok = True
                for j in range(in_ptr[t], in_ptr[t + 1]):
                    if m[in_idx[j]] < 1:
                        ok = False
                        break
                en[t] = ok
                if timed[t]:
                    if ok and not sched[t]:
                        enab = -np.inf
                        for j in range(in_ptr[t], in_ptr[t + 1]):
                            if pt[in_idx[j]] > enab:
                                enab = pt[in_idx[j]]
                        lower = clock - enab
                        if lower < 0.0:
                            lower = 0.0
                        if kind[t] == KIND_NORMAL:
                            state = state + GOLDEN
                            u = bits_to_unit(mix64(state))
                            d = sample_truncated(KIND_NORMAL, mu[t], sigma[t], lower, u)
                        else:
                            d = max(mu[t], lower)
                        due[t] = enab + d
                        sched[t] = True
                    elif not ok and sched[t]:
                        sched[t] = False
                        due[t] = np.inf
                elif ok:
                    n_imm += 1
                    total_w += weight[t]
            chosen = -1
            if n_imm > 0:
                state = state + GOLDEN
                u = bits_to_unit(mix64(state))
                use_w = total_w > 0.0
                tot = total_w if use_w else float(n_imm)
                target = u * tot
                acc = 0.0
                for t in range(n_trans):
                    if timed[t] or not en[t]:
                        continue
                    acc += weight[t] if use_w else 1.0
                    chosen = t
                    if target < acc:
                        break
                fire_time = -np.inf
                for j in range(in_ptr[chosen], in_ptr[chosen + 1]):
                    if pt[in_idx[j]] > fire_time:
                        fire_time = pt[in_idx[j]]
            else:
                best = np.inf
                for t in range(n_trans):
                    if sched[t] and due[t] < best:
                        best = due[t]
                        chosen = t
                if chosen < 0:
                    break  # dead marking that is not final
                clock = best
                fire_time = clock
                sched[chosen] = False
                due[chosen] = np.inf
            for j in range(in_ptr[chosen], in_ptr[chosen + 1]):
                m[in_idx[j]] -= 1
            for j in range(out_ptr[chosen], out_ptr[chosen + 1]):
                m[out_idx[j]] += 1
                pt[out_idx[j]] = fire_time
            firings += 1
        out[r] = result
    return out


@_kernel
def masked_distances_loop(X, q, used, scale):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for jj in range(used.shape[0]):
            j = used[jj]
            v = X[i, j] / scale - q[j]
            acc += v * v
        out[i] = math.sqrt(acc)
    return out


# ---------------------------------------------------------------------------
# numpy forms
# ---------------------------------------------------------------------------

_erfc_ufunc = np.frompyfunc(math.erfc, 1, 1)


def _erfc_np(x):
    return np.asarray(_erfc_ufunc(x), dtype=np.float64)


def mix64_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_init_np(seed, runs):
    runs = np.asarray(runs, dtype=np.uint64)
    return mix64_np(np.uint64(seed) + GOLDEN * (runs + np.uint64(1)))


def bits_to_unit_np(z):
    return ((z >> _S12).astype(np.float64) + 0.5) * _INV52


def norm_sf_np(x):
    return 0.5 * _erfc_np(np.asarray(x, dtype=np.float64) * SQRT1_2)


def norm_cdf_np(x):
    return 0.5 * _erfc_np(-np.asarray(x, dtype=np.float64) * SQRT1_2)


def _probit_lower_np(p):
    p = np.asarray(p, dtype=np.float64)
    x = np.empty_like(p)
    tail = p < _P_LOW
    if tail.any():
        q = np.sqrt(-2.0 * np.log(p[tail]))
        x[tail] = (((((C1 * q + C2) * q + C3) * q + C4) * q + C5) * q + C6) / (
            (((D1 * q + D2) * q + D3) * q + D4) * q + 1.0
        )
    mid = ~tail
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        x[mid] = (((((A1 * r + A2) * r + A3) * r + A4) * r + A5) * r + A6) * q / (
            ((((B1 * r + B2) * r + B3) * r + B4) * r + B5) * r + 1.0
        )
    e = norm_cdf_np(x) - p
    u = e * SQRT_2PI * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def norm_isf_np(s):
    s = np.asarray(s, dtype=np.float64)
    low = s <= 0.5
    return np.where(low, -_probit_lower_np(np.where(low, s, 0.5)),
                    _probit_lower_np(np.where(low, 0.5, 1.0 - s)))


def norm_ppf_np(p):
    return -norm_isf_np(p)


def sample_truncated_np(kind, mu, sigma, lower, u):
    """Vectorised :func:`sample_truncated`; ``kind`` is a scalar, the rest broadcast."""
    lower = np.asarray(lower, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if kind == KIND_DIRAC:
        return np.broadcast_to(np.maximum(mu, lower), np.broadcast(lower, u).shape).copy()
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    qa = norm_sf_np((lower - mu) / sigma)
    exhausted = qa <= DIRAC_TAIL
    s = np.where(exhausted, 0.5, u * qa)
    t = mu + sigma * norm_isf_np(s)
    return np.where(exhausted, lower, np.maximum(t, lower))


def sample_truncated_batch_np(kind, mu, sigma, lower, u):
    return sample_truncated_np(kind, mu, sigma, lower, u)


def simulate_runs_np(in_ptr, in_idx, out_ptr, out_idx, timed, kind, mu, sigma, weight,
                     marking0, ptime0, final, n_runs, max_firings, seed):
    """All runs advance in lock step; one row per run."""
    n_trans = timed.shape[0]
    n_places = marking0.shape[0]
    pre = np.zeros((n_trans, n_places), dtype=np.int64)
    post = np.zeros((n_trans, n_places), dtype=np.int64)
    for t in range(n_trans):
        pre[t, in_idx[in_ptr[t]:in_ptr[t + 1]]] = 1
        post[t, out_idx[out_ptr[t]:out_ptr[t + 1]]] = 1
    has_pre = pre.astype(bool)
    timed_ids = np.flatnonzero(timed)
    imm_ids = np.flatnonzero(~timed)

    M = np.tile(np.asarray(marking0, dtype=np.int64), (n_runs, 1))
    PT = np.tile(np.asarray(ptime0, dtype=np.float64), (n_runs, 1))
    due = np.full((n_runs, n_trans), np.inf)
    sched = np.zeros((n_runs, n_trans), dtype=bool)
    clock = np.zeros(n_runs)
    state = stream_init_np(seed, np.arange(n_runs))
    out = np.full(n_runs, np.nan)
    active = np.ones(n_runs, dtype=bool)
    firings = 0
    while True:
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        done = (M[rows] == final).all(axis=1)
        if done.any():
            out[rows[done]] = clock[rows[done]]
            active[rows[done]] = False
            rows = rows[~done]
        if rows.size == 0:
            break
        if firings >= max_firings:
            break
        firings += 1

        en = (M[rows][:, None, :] >= pre[None, :, :]).all(axis=2)
        for t in timed_ids:
            col_en = en[:, t]
            col_sched = sched[rows, t]
            newly = col_en & ~col_sched
            if newly.any():
                r_new = rows[newly]
                enab = np.where(has_pre[t], PT[r_new], -np.inf).max(axis=1)
                lower = np.maximum(clock[r_new] - enab, 0.0)
                if kind[t] == KIND_NORMAL:
                    state[r_new] = state[r_new] + GOLDEN
                    u = bits_to_unit_np(mix64_np(state[r_new]))
                    d = sample_truncated_np(KIND_NORMAL, mu[t], sigma[t], lower, u)
                else:
                    d = np.maximum(mu[t], lower)
                due[r_new, t] = enab + d
                sched[r_new, t] = True
            gone = ~col_en & col_sched
            if gone.any():
                r_gone = rows[gone]
                sched[r_gone, t] = False
                due[r_gone, t] = np.inf

        chosen = np.full(rows.size, -1, dtype=np.int64)
        fire_time = np.empty(rows.size)
        imm_en = en[:, imm_ids] if imm_ids.size else np.zeros((rows.size, 0), dtype=bool)
        has_imm = imm_en.any(axis=1)
        if has_imm.any():
            sub = np.flatnonzero(has_imm)
            r_imm = rows[sub]
            state[r_imm] = state[r_imm] + GOLDEN
            u = bits_to_unit_np(mix64_np(state[r_imm]))
            w = np.where(imm_en[sub], weight[imm_ids][None, :], 0.0)
            cum = np.cumsum(w, axis=1)
            use_w = cum[:, -1] > 0.0
            cum = np.where(use_w[:, None], cum, np.cumsum(imm_en[sub], axis=1).astype(np.float64))
            target = u * cum[:, -1]
            # first enabled immediate whose cumulative weight exceeds the target
            hit = (target[:, None] < cum) & imm_en[sub]
            last_en = imm_en[sub].shape[1] - 1 - np.argmax(imm_en[sub][:, ::-1], axis=1)
            pick = np.where(hit.any(axis=1), np.argmax(hit, axis=1), last_en)
            c = imm_ids[pick]
            chosen[sub] = c
            fire_time[sub] = np.where(has_pre[c], PT[r_imm], -np.inf).max(axis=1)
        rest = np.flatnonzero(~has_imm)
        if rest.size:
            r_t = rows[rest]
            d = np.where(sched[r_t], due[r_t], np.inf)
            c = np.argmin(d, axis=1)
            best = d[np.arange(rest.size), c]
            dead = ~np.isfinite(best)
            if dead.any():
                active[r_t[dead]] = False
            ok = ~dead
            r_ok = r_t[ok]
            c_ok = c[ok]
            clock[r_ok] = best[ok]
            sched[r_ok, c_ok] = False
            due[r_ok, c_ok] = np.inf
            chosen[rest[ok]] = c_ok
            fire_time[rest[ok]] = best[ok]
        fired = chosen >= 0
        r_f = rows[fired]
        c_f = chosen[fired]
        M[r_f] += post[c_f] - pre[c_f]
        produced = post[c_f].astype(bool)
        PT[r_f] = np.where(produced, fire_time[fired][:, None], PT[r_f])
    return out


def masked_distances_np(X, q, used, scale):
    acc = np.zeros(X.shape[0])
    for j in used:
        v = X[:, j] / scale - q[j]
        acc += v * v
    return np.sqrt(acc)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    simulate_runs = simulate_runs_loop
    sample_truncated_batch = sample_truncated_batch_loop
    masked_distances = masked_distances_loop
else:
    simulate_runs = simulate_runs_np
    sample_truncated_batch = sample_truncated_batch_np
    masked_distances = masked_distances_np


def backend():
    return "numba" if USE_NUMBA else "numpy"
