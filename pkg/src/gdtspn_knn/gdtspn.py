"""Stochastic Petri nets with generally distributed timed transitions.

A model couples a workflow net with a normal (or Dirac) duration per visible
transition and a firing weight per silent transition.  Remaining time is
estimated by race-semantics Monte Carlo simulation from a replayed marking,
with the durations of already-running activities conditioned on the time
they have been running.
"""
from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .eventlog import Trace
from .petri import PetriNet, ReplayError, ReplayState, from_pnml, pnml_tree, replay

NORMAL = "normal"
DIRAC = "dirac"


class SimulationAborted(RuntimeError):
    """A run exceeded the firing budget or got stuck."""


class PredictionFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class DurationDistribution:
    """Duration in seconds: ``normal(mu, sigma)`` or ``dirac(mu)``."""

    kind: str
    mu: float
    sigma: float = 0.0
    sample_count: int = 0

    def __post_init__(self):
        if self.kind not in (NORMAL, DIRAC):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValueError("sigma must be finite and >= 0")
        if self.kind == NORMAL and self.sigma == 0:
            object.__setattr__(self, "kind", DIRAC)
        if self.kind == DIRAC:
            if self.mu < 0:
                raise ValueError("dirac value must be >= 0")
            object.__setattr__(self, "sigma", 0.0)

    @classmethod
    def normal(cls, mu, sigma, sample_count=0):
        return cls(NORMAL, float(mu), float(sigma), sample_count)

    @classmethod
    def dirac(cls, value, sample_count=0):
        return cls(DIRAC, float(value), 0.0, sample_count)

    @classmethod
    def fit(cls, samples: Sequence[float]) -> "DurationDistribution":
        """Maximum-likelihood normal fit; one sample or no spread gives a Dirac."""
        n = len(samples)
        if n == 0:
            return cls.dirac(0.0, 0)
        mu = math.fsum(samples) / n
        var = math.fsum((x - mu) ** 2 for x in samples) / n
        sigma = math.sqrt(var)
        if n == 1 or sigma == 0.0:
            return cls.dirac(max(mu, 0.0), n)
        return cls.normal(mu, sigma, n)

    @property
    def code(self) -> int:
        return kernels.KIND_DIRAC if self.kind == DIRAC else kernels.KIND_NORMAL


@dataclass(frozen=True)
class SimulationConfig:
    n_runs: int = 500
    max_firings_per_run: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.max_firings_per_run < 1:
            raise ValueError("max_firings_per_run must be >= 1")


@dataclass(frozen=True)
class GDTSPN:
    net: PetriNet
    durations: Mapping[int, DurationDistribution]
    weights: Mapping[int, float]
    unobserved: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for t in self.net.timed:
            if t not in self.durations:
                raise ValueError(f"timed transition {self.net.transitions[t].name!r} has no duration")
        for t in self.net.silent:
            w = self.weights.get(t)
            if w is None:
                raise ValueError(f"silent transition {self.net.transitions[t].name!r} has no weight")
            if not w > 0:
                raise ValueError("weights must be > 0")

    def priority(self, t: int) -> int:
        return 1 if self.net.transitions[t].silent else 0

    @cached_property
    def arrays(self):
        net = self.net
        T = len(net.transitions)
        timed = np.zeros(T, dtype=np.bool_)
        kind = np.zeros(T, dtype=np.int64)
        mu = np.zeros(T)
        sigma = np.zeros(T)
        weight = np.zeros(T)
        for t in range(T):
            if net.transitions[t].silent:
                weight[t] = self.weights[t]
            else:
                d = self.durations[t]
                timed[t] = True
                kind[t] = d.code
                mu[t] = d.mu
                sigma[t] = d.sigma
        return net.csr() + (timed, kind, mu, sigma, weight)

    def by_label(self) -> dict[str, DurationDistribution]:
        return {self.net.transitions[t].label: d for t, d in self.durations.items()}


def enrich(net: PetriNet, traces: Sequence[Trace]) -> GDTSPN:
    """Learn durations and silent weights by replaying complete traces."""
    samples: dict[int, list[float]] = {t: [] for t in net.timed}
    counts = {t: 0 for t in net.silent}
    for tr in traces:
        try:
            st = replay(net, tr, complete=True)
        except ReplayError as exc:
            raise ReplayError(f"trace {tr.case_id!r}: {exc}", exc.event_index, tr.case_id) from exc
        for t, ms in st.durations:
            samples[t].append(ms / 1000.0)
        for t in st.silent_fired:
            counts[t] += 1
    durations = {t: DurationDistribution.fit(s) for t, s in samples.items()}
    unobserved = frozenset(t for t, s in samples.items() if not s)
    weights = {t: float(c) if c > 0 else 1.0 for t, c in counts.items()}
    return GDTSPN(net, durations, weights, unobserved)


# ---------------------------------------------------------------------------
# sampling and simulation
# ---------------------------------------------------------------------------


def truncated_sample(d: DurationDistribution, elapsed: float, rng: np.random.Generator,
                     size: int | None = None):
    """Draw durations of ``d`` conditioned on exceeding ``elapsed`` (and 0).

    Uses inverse-CDF sampling on the upper tail.  When the tail mass beyond
    ``elapsed`` is below 1e-12 the draw collapses onto ``elapsed``.
    """
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    lower = float(max(elapsed, 0.0))
    n = 1 if size is None else int(size)
    u = 1.0 - rng.random(n)  # (0, 1]
    out = kernels.sample_truncated_batch(d.code, d.mu, max(d.sigma, 1e-300), lower, u)
    return float(out[0]) if size is None else out


def _kernel_inputs(model: GDTSPN, state: ReplayState, t0: float):
    if t0 < state.last_event_time:
        raise ValueError("t0 precedes the last replayed event")
    marking = np.asarray(state.marking, dtype=np.int64)
    ptime = np.array([0.0 if x is None else (x - t0) / 1000.0 for x in state.token_time])
    final = np.asarray(model.net.final_marking, dtype=np.int64)
    return marking, ptime, final


def _seed_from(rng) -> np.uint64:
    if isinstance(rng, (int, np.integer)):
        return np.uint64(int(rng) % 2**64)
    return np.uint64(rng.integers(0, 2**63, dtype=np.int64))


def simulate_runs(model: GDTSPN, state: ReplayState, t0: float, n_runs: int,
                  seed, max_firings: int = 10_000) -> np.ndarray:
    """Remaining durations (s) of ``n_runs`` runs; aborted runs are NaN.

    Run ``i`` draws from its own stream derived from ``(seed, i)``.
    """
    marking, ptime, final = _kernel_inputs(model, state, t0)
    in_ptr, in_idx, out_ptr, out_idx, timed, kind, mu, sigma, weight = model.arrays
    return kernels.simulate_runs(in_ptr, in_idx, out_ptr, out_idx, timed, kind, mu, sigma,
                                 weight, marking, ptime, final, int(n_runs),
                                 int(max_firings), _seed_from(seed))


def simulate_once(model: GDTSPN, state: ReplayState, t0: float, rng,
                  max_firings: int = 10_000) -> float:
    out = simulate_runs(model, state, t0, 1, _seed_from(rng), max_firings)[0]
    if math.isnan(out):
        raise SimulationAborted("run aborted (firing budget exhausted or dead marking)")
    return float(out)


def summarize_runs(runs: np.ndarray) -> tuple[float, int]:
    """Mean of completed runs and the number of aborted ones."""
    ok = runs[~np.isnan(runs)]
    aborted = runs.size - ok.size
    if aborted * 2 > runs.size:
        raise PredictionFailure(f"{aborted} of {runs.size} simulation runs aborted")
    return math.fsum(ok.tolist()) / ok.size, aborted


def predict_remaining(model: GDTSPN, state: ReplayState, t0: float,
                      cfg: SimulationConfig = SimulationConfig()) -> float:
    """Average remaining time (s) over ``cfg.n_runs`` simulations."""
    runs = simulate_runs(model, state, t0, cfg.n_runs, cfg.seed, cfg.max_firings_per_run)
    return summarize_runs(runs)[0]


# ---------------------------------------------------------------------------
# annotated PNML
# ---------------------------------------------------------------------------

_TOOL = "StochasticPetriNet"


def to_annotated_pnml(model: GDTSPN) -> bytes:
    def net_extras(net_el):
        ts = ET.SubElement(net_el, "toolspecific", tool=_TOOL, version="0.2")
        ET.SubElement(ts, "property", key="timeUnit").text = "seconds"

    def extras(tr_el, t):
        ts = ET.SubElement(tr_el, "toolspecific", tool=_TOOL, version="0.2")
        if model.net.transitions[t].silent:
            props = {"distributionType": "IMMEDIATE", "distributionParameters": "",
                     "priority": "1", "weight": repr(model.weights[t])}
        else:
            d = model.durations[t]
            if d.kind == DIRAC:
                props = {"distributionType": "DETERMINISTIC", "distributionParameters": repr(d.mu)}
            else:
                props = {"distributionType": "NORMAL",
                         "distributionParameters": f"{d.mu!r};{d.sigma!r}"}
            props.update(priority="0", weight="1.0", sampleCount=str(d.sample_count))
        for k, v in props.items():
            ET.SubElement(ts, "property", key=k).text = v

    root = pnml_tree(model.net, extras, net_extras)
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def from_annotated_pnml(data: bytes) -> GDTSPN:
    net = from_pnml(data)
    root = ET.fromstring(data)
    durations, weights = {}, {}
    for tr in root.iter("transition"):
        t = net.transition_index[tr.get("id")]
        props = {}
        for ts in tr.findall("toolspecific"):
            if ts.get("tool") == _TOOL:
                props = {p.get("key"): (p.text or "") for p in ts.findall("property")}
        kind = props.get("distributionType")
        if kind == "IMMEDIATE":
            weights[t] = float(props["weight"])
        elif kind == "NORMAL":
            mu, sigma = (float(x) for x in props["distributionParameters"].split(";"))
            durations[t] = DurationDistribution.normal(mu, sigma, int(props.get("sampleCount", 0)))
        elif kind == "DETERMINISTIC":
            durations[t] = DurationDistribution.dirac(float(props["distributionParameters"]),
                                                      int(props.get("sampleCount", 0)))
        else:
            raise ValueError(f"transition {tr.get('id')!r} lacks stochastic annotation")
    return GDTSPN(net, durations, weights)
