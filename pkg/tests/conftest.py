import sys

import hypothesis.strategies as st
import pytest
from hypothesis import settings

from gdtspn_knn.eventlog import EventLog, make_trace

T0 = 1_600_000_000_000  # ms

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


def log_of(*traces, start=T0, unit=1000):
    """``log_of(("A", 0), ("B", 60))`` style builder; offsets in ``unit`` ms."""
    return EventLog(tuple(
        make_trace(f"c{i}", [(a, start + int(t * unit)) for a, t in tr])
        for i, tr in enumerate(traces)))


@st.composite
def event_logs(draw, max_traces=12, max_len=6, labels="ABCDE", min_traces=1):
    n = draw(st.integers(min_traces, max_traces))
    traces = []
    for i in range(n):
        start = draw(st.integers(0, 10**9))
        acts = draw(st.lists(st.sampled_from(labels), min_size=1, max_size=max_len))
        gaps = draw(st.lists(st.integers(0, 10**7), min_size=len(acts), max_size=len(acts)))
        t = T0 + start
        evs = []
        for a, g in zip(acts, gaps):
            t += g
            evs.append((a, t))
        traces.append(make_trace(f"case-{i}", evs))
    return EventLog(tuple(traces))


@pytest.fixture
def simple_log():
    return log_of([("A", 0), ("B", 60)], [("A", 0), ("C", 30), ("B", 90)])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
