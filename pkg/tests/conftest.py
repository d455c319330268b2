import numpy as np
import pytest

from piha.flowpipe import ReachConfig, reach_sets
from piha.fwr import CircuitParams, build_fwr_piha, fwr_integrator_config, fwr_reach_dt
from piha.geometry import bounding_box
from piha.sim import simulate_hybrid

_ACCEPTANCE: list[str] = []


def fwr_reach_config(p=None, **kw):
    p = p or CircuitParams()
    return ReachConfig(dt=fwr_reach_dt(p), integrator=fwr_integrator_config(p), **kw)


def uncovered_samples(segments, traces, tol=1e-9):
    """Trace samples ``(t, x, mode)`` that no segment of the same mode covers at ``t``."""
    by_mode = {}
    for s in segments:
        by_mode.setdefault(s.mode, []).append(s)
    misses = []
    for tr in traces:
        for t, x, m in zip(tr.t, tr.x, tr.modes):
            if not any(s.covers(t, x, tol) for s in by_mode.get(m, ())):
                misses.append((t, x, m))
    return misses


def random_ics_traces(h, n, seed, cfg):
    """Traces from ``n`` uniform random points of the bounding box of a box ICS."""
    lo, hi = bounding_box(h.ics)
    rng = np.random.default_rng(seed)
    hi = np.maximum(lo, hi)  # flat axes can come back with lo a hair above hi
    return [simulate_hybrid(h, x0, h.horizon, cfg) for x0 in lo + (hi - lo) * rng.random((n, h.dim))]


@pytest.fixture(scope="session")
def fwr_default():
    return build_fwr_piha()


@pytest.fixture(scope="session")
def fwr_segments(fwr_default):
    return reach_sets(fwr_default, None, fwr_reach_config())


@pytest.fixture(scope="session")
def fwr_traces(fwr_default):
    return random_ics_traces(fwr_default, 100, 2024, fwr_integrator_config())


@pytest.fixture
def criterion():
    """Record the pass/fail line of one acceptance criterion, then assert it."""
    seen = []

    def record(number, title, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title} ({detail})"
        seen.append(line)
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    yield record
    if not seen:
        _ACCEPTANCE.append("criterion ?: FAIL - a test ended before reporting")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
