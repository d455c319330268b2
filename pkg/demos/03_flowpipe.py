"""
Flow-pipes
==========

``reach_sets`` covers every trajectory from the initial set with a chain of
(mode, time window, polytope) segments.  Here the initial output voltage
ranges over [3.8, 4.2] V.
"""
from collections import Counter

import numpy as np

from piha import geometry as geo
from piha.flowpipe import ReachConfig, reach_sets, segments_covering, write_segments_csv
from piha.fwr import CircuitParams, build_fwr_piha, fwr_integrator_config, fwr_reach_dt
from piha.sim import simulate_hybrid

p = CircuitParams()
h = build_fwr_piha(p)
cfg = ReachConfig(dt=fwr_reach_dt(p), integrator=fwr_integrator_config(p))
segs = reach_sets(h, None, cfg)

print(f"{len(segs)} segments")
for mode, n in sorted(Counter(s.mode for s in segs).items()):
    print(f"  {mode:7s} {n}")

lowest = min(-geo.support(s.region, [0.0, 0.0, -1.0]) for s in segs)
print(f"lowest vout anywhere in the flow-pipe: {lowest:.4f} V")

# any simulated trace from the initial set stays inside
rng = np.random.default_rng(1)
x0 = [0.0, p.A, rng.uniform(3.8, 4.2)]
tr = simulate_hybrid(h, x0, h.horizon, cfg.integrator)
inside = sum(bool(segments_covering(segs, t, x)) for t, x in zip(tr.t, tr.x))
print(f"trace from vout(0)={x0[2]:.3f}: {inside}/{len(tr)} samples covered")

write_segments_csv(segs, "rectifier_segments.csv")
