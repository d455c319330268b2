"""
Checking P1 and P2
==================

P1: the output voltage never goes negative.  P2: it never drops to a
threshold.  ``explore`` simulates from the corners and center of the
initial set; ``verify_safety`` checks the whole set with flow-pipes.
"""
from piha.checker import explore, verify_safety
from piha.flowpipe import ReachConfig
from piha.fwr import CircuitParams, build_fwr_piha, fwr_integrator_config, fwr_properties, fwr_reach_dt

p = CircuitParams()
h = build_fwr_piha(p)
icfg = fwr_integrator_config(p)
rcfg = ReachConfig(dt=fwr_reach_dt(p), integrator=icfg)

for threshold in (3.0, 4.8):
    p1, p2 = fwr_properties(p, threshold)
    for spec in (p1, p2) if threshold == 3.0 else (p2,):
        ok, reports = explore(h, spec, icfg)
        res = verify_safety(h, spec, rcfg)
        print(f"{spec.name} (threshold {threshold} V): explore {'safe' if ok else 'UNSAFE'} "
              f"over {len(reports)} points, verify {res.verdict} "
              f"({res.segments_total} segments, {res.wall_time:.1f} s)")
        if res.counterexample is not None:
            cex = res.counterexample
            k = cex.x[:, 2].argmin()
            print(f"  counterexample from vout(0)={cex.x[0, 2]:.3f}: trough {cex.x[k, 2]:.4f} V "
                  f"at t={cex.t[k] * 1e3:.3f} ms")
