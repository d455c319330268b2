import math

import numpy as np
import pytest

from conftest import fwr_reach_config, random_ics_traces, uncovered_samples
from piha import geometry as geo
from piha.flowpipe import (BudgetExhausted, ReachConfig, exit_region, flowpipe_mode_segments, reach_sets,
                           segments_covering, segments_to_csv, write_segments_csv)
from piha.fwr import CircuitParams, build_fwr_piha, fwr_integrator_config
from piha.geometry import Polytope
from piha.model import PIHA, AffineDynamics, Mode, derive_transitions
from piha.sim import IntegratorConfig, simulate_hybrid

CFG1 = IntegratorConfig(h_init=1e-4, h_max=1e-2)


def single_mode(A, b, inv, ics, region, horizon):
    m = Mode("M", AffineDynamics(A, b), inv)
    return PIHA(len(b), (m,), (), ics, region, horizon)


class TestModeSegments:
    def test_stationary(self):
        box = Polytope.box([0.0, 0.0], [1.0, 1.0])
        h = single_mode(np.zeros((2, 2)), np.zeros(2), Polytope.universe(2), box,
                        Polytope.box([-2.0, -2.0], [2.0, 2.0]), 0.1)
        segs = flowpipe_mode_segments(h.modes[0], box, 0.0, ReachConfig(dt=0.01, integrator=CFG1), h)
        assert len(segs) == 10
        for s in segs:
            lo, hi = geo.bounding_box(s.region)
            assert lo == pytest.approx([0, 0], abs=1e-9) and hi == pytest.approx([1, 1], abs=1e-9)

    def test_decay_contains_exact_interval(self):
        P0 = Polytope.box([1.0], [1.1])
        h = single_mode([[-1.0]], [0.0], Polytope.universe(1), P0, Polytope.box([-1.0], [2.0]), 1.0)
        segs = flowpipe_mode_segments(h.modes[0], P0, 0.0, ReachConfig(dt=0.01, integrator=CFG1), h)
        assert len(segs) == 100
        for s in segs:
            lo, hi = geo.bounding_box(s.region)
            assert lo[0] <= math.exp(-s.t_hi) * 1.0
            assert hi[0] >= math.exp(-s.t_lo) * 1.1
            # and not grossly larger
            assert hi[0] - lo[0] <= 1.1 * (math.exp(-s.t_lo) - math.exp(-s.t_hi)) + 0.1 * math.exp(-s.t_hi) + 1e-3

    def test_segments_overlap_in_time(self):
        P0 = Polytope.box([1.0], [1.1])
        h = single_mode([[-1.0]], [0.0], Polytope.universe(1), P0, Polytope.box([-1.0], [2.0]), 0.2)
        segs = flowpipe_mode_segments(h.modes[0], P0, 0.0, ReachConfig(dt=0.01, integrator=CFG1), h)
        assert all(a.t_hi == b.t_lo for a, b in zip(segs, segs[1:]))
        assert all(s.t_lo < s.t_hi and not geo.is_empty(s.region)[0] for s in segs)

    def test_stops_when_invariant_left(self):
        P0 = Polytope.box([0.0], [0.1])
        h = single_mode([[0.0]], [1.0], Polytope([[1.0]], [0.5]), P0, Polytope.box([-1.0], [2.0]), 5.0)
        segs = flowpipe_mode_segments(h.modes[0], P0, 0.0, ReachConfig(dt=0.05, integrator=CFG1), h)
        assert segs[-1].t_hi < 1.0

    def test_bad_initial_set(self):
        h = single_mode([[0.0]], [1.0], Polytope.universe(1), Polytope.box([0.0], [0.1]),
                        Polytope.box([-1.0], [2.0]), 1.0)
        cfg = ReachConfig(dt=0.05, integrator=CFG1)
        with pytest.raises(geo.GeometryError):
            flowpipe_mode_segments(h.modes[0], Polytope([[1.0], [-1.0]], [0.0, -1.0]), 0.0, cfg, h)
        with pytest.raises(geo.GeometryError):
            flowpipe_mode_segments(h.modes[0], Polytope([[1.0]], [0.0]), 0.0, cfg, h)

    def test_config_validation(self):
        for kw in (dict(dt=0.0), dict(dt=0.1, max_segments=0), dict(dt=0.1, bloat_factor=0.5),
                   dict(dt=0.1, entry_bin=0)):
            with pytest.raises(ValueError):
                ReachConfig(**kw)


class TestReachSets:
    def test_single_mode_matches_mode_segments(self):
        P0 = Polytope.box([1.0], [1.1])
        h = single_mode([[-1.0]], [0.0], Polytope.universe(1), P0, Polytope.box([-1.0], [2.0]), 0.3)
        cfg = ReachConfig(dt=0.01, integrator=CFG1)
        a = reach_sets(h, None, cfg)
        b = flowpipe_mode_segments(h.modes[0], P0, 0.0, cfg, h)
        assert len(a) == len(b)
        for s, t in zip(a, b):
            assert (s.mode, s.t_lo, s.t_hi) == (t.mode, t.t_lo, t.t_hi)
            assert np.allclose(s.region.A, t.region.A) and np.allclose(s.region.b, t.region.b)

    def test_two_mode_line(self):
        up = Mode("Up", AffineDynamics([[0.0]], [1.0]), Polytope([[1.0]], [1.0]))
        down = Mode("Down", AffineDynamics([[0.0]], [-1.0]), Polytope([[-1.0]], [-1.0]))
        h = PIHA(1, (up, down), tuple(derive_transitions([up, down])), Polytope.box([0.0], [0.0]),
                 Polytope.box([-1.0], [3.0]), 2.0)
        segs = reach_sets(h, None, ReachConfig(dt=0.05, integrator=CFG1))
        assert {s.mode for s in segs} == {"Up", "Down"}
        lo = min(geo.bounding_box(s.region)[0][0] for s in segs)
        hi = max(geo.bounding_box(s.region)[1][0] for s in segs)
        assert lo <= 0.0 and 1.0 <= hi <= 1.1
        for t in np.linspace(0, 0.99, 50):
            assert segments_covering(segs, t, [t])

    def test_hook_stops_early(self):
        P0 = Polytope.box([1.0], [1.1])
        h = single_mode([[-1.0]], [0.0], Polytope.universe(1), P0, Polytope.box([-1.0], [2.0]), 1.0)
        seen = []
        segs = reach_sets(h, lambda s: seen.append(s) or len(seen) == 3, ReachConfig(dt=0.01, integrator=CFG1))
        assert len(segs) == 3

    def test_budget(self):
        P0 = Polytope.box([1.0], [1.1])
        h = single_mode([[-1.0]], [0.0], Polytope.universe(1), P0, Polytope.box([-1.0], [2.0]), 1.0)
        with pytest.raises(BudgetExhausted) as info:
            reach_sets(h, None, ReachConfig(dt=0.01, max_segments=5, integrator=CFG1))
        assert len(info.value.segments) == 5

    def test_exit_region_inside_guard(self):
        h = build_fwr_piha()
        for tr in h.transitions:
            R = exit_region(h, tr)
            assert geo.is_subset(R, tr.guard, 1e-9) or geo.is_empty(R)[0]


class TestFwrReach:
    def test_modes_present(self, fwr_segments):
        modes = {s.mode for s in fwr_segments}
        assert {"OffOff", "OnOff", "OffOn"} <= modes
        assert "OnOn" not in modes

    def test_sound_against_random_traces(self, fwr_segments, fwr_traces):
        assert uncovered_samples(fwr_segments, fwr_traces) == []

    def test_stays_positive(self, fwr_segments):
        assert min(-geo.support(s.region, [0.0, 0.0, -1.0]) for s in fwr_segments) > 3.0

    def test_time_windows(self, fwr_segments, fwr_default):
        assert all(0.0 <= s.t_lo <= s.t_hi <= fwr_default.horizon + 1e-12 for s in fwr_segments)
        assert max(s.t_hi for s in fwr_segments) == pytest.approx(fwr_default.horizon)


def short_fwr():
    p = CircuitParams()
    return p, build_fwr_piha(p, horizon=0.4 * p.period)


@pytest.mark.slow
class TestMonotone:
    def test_larger_bloat_keeps_coverage(self):
        p, h = short_fwr()
        traces = random_ics_traces(h, 20, 5, fwr_integrator_config(p))
        small = reach_sets(h, None, fwr_reach_config(p, bloat_factor=1.0))
        large = reach_sets(h, None, fwr_reach_config(p, bloat_factor=3.0))
        covered = lambda segs: {(i, k) for i, tr in enumerate(traces) for k in range(len(tr))  # noqa: E731
                                if any(s.mode == tr.modes[k] and s.covers(tr.t[k], tr.x[k], 1e-9) for s in segs)}
        assert covered(small) <= covered(large)

    def test_subsumption_keeps_coverage(self):
        p, h = short_fwr()
        traces = random_ics_traces(h, 20, 6, fwr_integrator_config(p))
        with_sub = reach_sets(h, None, fwr_reach_config(p))
        without = reach_sets(h, None, fwr_reach_config(p, subsumption=False))
        assert uncovered_samples(with_sub, traces) == uncovered_samples(without, traces) == []


class TestDump:
    def test_csv_layout(self, tmp_path):
        P0 = Polytope.box([1.0, 0.0], [1.1, 0.0])
        h = single_mode(-np.eye(2), np.zeros(2), Polytope.universe(2), P0, Polytope.box([-1, -1], [2, 2]), 0.02)
        segs = reach_sets(h, None, ReachConfig(dt=0.01, integrator=CFG1))
        text = segments_to_csv(segs)
        lines = text.strip().split("\n")
        assert lines[0] == "mode,t_lo,t_hi,constraint_index,n1,n2,offset"
        assert len(lines) == 1 + sum(s.region.n_constraints for s in segs)
        write_segments_csv(segs, tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text() == text


def test_trace_of_sample_point_is_in_first_segment(fwr_segments):
    h = build_fwr_piha()
    tr = simulate_hybrid(h, [0.0, 5.0, 4.0], 1e-4, fwr_integrator_config())
    assert all(segments_covering(fwr_segments, t, x) for t, x in zip(tr.t, tr.x))
