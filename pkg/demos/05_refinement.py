"""
Refining the initial set
========================

When a flow-pipe touches the avoid region but no simulation does, the
initial set is bisected and each half is checked again.  A P2 threshold
of 3.685 V sits a little under the true trough of about 3.70 V.  The
flow-pipe of the whole initial set dips below it; the flow-pipes of the
halves do not.  One input period keeps this quick.
"""
from piha import geometry as geo
from piha.checker import RefineConfig, refine_ics, verify_safety
from piha.flowpipe import ReachConfig
from piha.fwr import CircuitParams, build_fwr_piha, fwr_integrator_config, fwr_properties, fwr_reach_dt

p = CircuitParams()
h = build_fwr_piha(p, horizon=p.period)
_, p2 = fwr_properties(p, 3.685)
rcfg = ReachConfig(dt=fwr_reach_dt(p), integrator=fwr_integrator_config(p))

left, right = refine_ics(h.ics)
for name, Q in (("left", left), ("right", right)):
    lo, hi = geo.bounding_box(Q)
    print(f"{name} half: vout(0) in [{lo[2]:.2f}, {hi[2]:.2f}]")

for depth in (0, 3):
    res = verify_safety(h, p2, rcfg, RefineConfig(max_depth=depth))
    print(f"max_depth={depth}: {res.verdict} after {res.partitions_processed} partitions, "
          f"{res.avoid_intersections} flow-pipe hits on the avoid set")
