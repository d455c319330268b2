"""
Simulating the full-wave rectifier
==================================

Two ideal diodes feed an RC load.  The state is ``(vin, x2, vout)`` where
``(vin, x2)`` is a harmonic oscillator producing the sinusoidal input.
Writes ``rectifier_trace.csv`` for plotting.
"""
import numpy as np

from piha.fwr import CircuitParams, build_fwr_piha, diode_voltages, fwr_integrator_config
from piha.sim import simulate_hybrid, write_trace_csv

p = CircuitParams()
h = build_fwr_piha(p, ics_vout=(4.0, 4.0), horizon=5 * p.period)
print(f"{len(h.modes)} modes, {len(h.transitions)} transitions, horizon {h.horizon * 1e3:.0f} ms")

tr = simulate_hybrid(h, [0.0, p.A, 4.0], h.horizon, fwr_integrator_config(p))
print(f"{len(tr)} samples, {len(tr.events)} switches")
print("mode sequence:", " -> ".join(tr.mode_sequence()[:9]), "...")

for e in tr.events[:4]:
    print(f"  t = {e.t * 1e3:7.4f} ms  {e.source} -> {e.target}")

late = tr.t >= 3 * p.period
print(f"steady ripple: vout in [{tr.x[late, 2].min():.4f}, {tr.x[late, 2].max():.4f}] V")

# the diode voltages always sum to -2 vout
v1, v2 = diode_voltages(tr.x)
print("max |v1 + v2 + 2 vout| =", np.abs(v1 + v2 + 2 * tr.x[:, 2]).max())

write_trace_csv(tr, "rectifier_trace.csv")
