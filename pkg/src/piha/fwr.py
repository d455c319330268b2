"""Full-wave rectifier as a four-mode hybrid automaton.

Two ideal diodes feed an RC load from the source ``vin = A sin(2 pi f t)``.
Each diode is either conducting (``i = v / Rf``) or blocking (``i = -I0``),
giving modes OnOn, OnOff, OffOn and OffOff.  The diode voltages are
``v1 = vin - vout`` and ``v2 = -vin - vout``.

The sinusoidal source is folded into the state as a harmonic oscillator,
so the continuous state is ``(x1, x2, vout)`` with ``x1 = vin``::

    dx1/dt   =  w x2
    dx2/dt   = -w x1
    dvout/dt = -vout / (R C) + (i1 + i2) / C        w = 2 pi f

and ``x(0) = (0, A, vout0)``.  Every mode is then affine and every
switching surface is a plane.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Polytope
from .model import PIHA, AffineDynamics, Mode, ModelError, SafetySpec, derive_transitions
from .sim import IntegratorConfig

__all__ = [
    "MODES",
    "CircuitParams",
    "build_fwr_dynamics",
    "fwr_mode_of",
    "fwr_invariant_predicates",
    "fwr_invariant",
    "build_fwr_piha",
    "fwr_properties",
    "fwr_integrator_config",
    "fwr_reach_dt",
    "diode_voltages",
    "reference_derivative",
    "P1_MARGIN",
]

MODES = ("OnOn", "OnOff", "OffOn", "OffOff")

# avoid region for "vout never negative" stops just short of 0
P1_MARGIN = 1e-6


@dataclass(frozen=True)
class CircuitParams:
    R: float = 1e3
    C: float = 100e-6
    Rf: float = 10.0
    I0: float = 1e-6
    A: float = 5.0
    f: float = 50.0

    def __post_init__(self):
        for name in ("R", "C", "Rf", "I0", "A", "f"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ModelError(f"circuit parameter {name} must be positive and finite, got {v}")

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.f

    @property
    def period(self) -> float:
        return 1.0 / self.f


def diode_voltages(x) -> tuple[np.ndarray, np.ndarray]:
    """``(v1, v2)`` for a state or an array of states."""
    x = np.asarray(x, dtype=float)
    x1, vout = x[..., 0], x[..., 2]
    return x1 - vout, -x1 - vout


def build_fwr_dynamics(p: CircuitParams, mode: str) -> AffineDynamics:
    if mode not in MODES:
        raise ModelError(f"unknown rectifier mode {mode!r}")
    w = p.omega
    RC = p.R * p.C
    RfC = p.Rf * p.C
    A = np.zeros((3, 3))
    b = np.zeros(3)
    A[0, 1] = w
    A[1, 0] = -w
    A[2, 2] = -1.0 / RC
    d1_on, d2_on = mode.startswith("On"), mode.endswith("On")
    # i1 = v1/Rf = (x1 - vout)/Rf  or  -I0;  i2 = v2/Rf = (-x1 - vout)/Rf  or  -I0
    if d1_on:
        A[2, 0] += 1.0 / RfC
        A[2, 2] -= 1.0 / RfC
    else:
        b[2] -= p.I0 / p.C
    if d2_on:
        A[2, 0] -= 1.0 / RfC
        A[2, 2] -= 1.0 / RfC
    else:
        b[2] -= p.I0 / p.C
    return AffineDynamics(A, b)


def reference_derivative(p: CircuitParams, mode: str, x) -> np.ndarray:
    """Right-hand side evaluated straight from the diode equations."""
    x1, x2, vout = np.asarray(x, dtype=float)
    v1, v2 = x1 - vout, -x1 - vout
    i1 = v1 / p.Rf if mode in ("OnOn", "OnOff") else -p.I0
    i2 = v2 / p.Rf if mode in ("OnOn", "OffOn") else -p.I0
    return np.array([p.omega * x2, -p.omega * x1, -vout / (p.R * p.C) + (i1 + i2) / p.C])


def fwr_mode_of(v1: float, v2: float) -> str:
    """Diode state from the sign quadrant; zero counts as conducting."""
    return ("On" if v1 >= 0 else "Off") + ("On" if v2 >= 0 else "Off")


def fwr_invariant_predicates(v1, v2) -> dict[str, np.ndarray]:
    """The four invariant predicates with each boundary given to the ``>=`` side."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    return {
        "OnOn": (v1 >= 0) & (v2 >= 0),
        "OnOff": (v1 >= 0) & (v2 < 0),
        "OffOn": (v1 < 0) & (v2 >= 0),
        "OffOff": (v1 < 0) & (v2 < 0),
    }


def fwr_invariant(mode: str) -> Polytope:
    """Closed invariant polytope in ``(x1, x2, vout)``.

    ``v1 >= 0`` is ``-x1 + vout <= 0``; ``v2 >= 0`` is ``x1 + vout <= 0``;
    the blocking sides use the negated rows.
    """
    if mode not in MODES:
        raise ModelError(f"unknown rectifier mode {mode!r}")
    v1_ge = np.array([-1.0, 0.0, 1.0])
    v2_ge = np.array([1.0, 0.0, 1.0])
    rows = [v1_ge if mode.startswith("On") else -v1_ge,
            v2_ge if mode.endswith("On") else -v2_ge]
    return Polytope(np.array(rows), np.zeros(2))


def build_fwr_piha(p: CircuitParams | None = None, ics_vout=(3.8, 4.2), horizon: float | None = None) -> PIHA:
    """Rectifier automaton with ``x(0) = (0, A, vout0)``, ``vout0`` in ``ics_vout``.

    The analysis region is ``|x1| <= A+1, |x2| <= A+1, -1 <= vout <= A+1``;
    the horizon defaults to two input periods.  Transitions are derived
    from shared invariant facets, which yields the eight edges between
    sign-adjacent modes.
    """
    p = p or CircuitParams()
    lo, hi = (float(v) for v in ics_vout)
    if not lo <= hi:
        raise ModelError(f"ics_vout must satisfy lo <= hi, got {ics_vout}")
    big = p.A + 1.0
    if not (-1.0 <= lo and hi <= big):
        raise ModelError(f"ics_vout {ics_vout} lies outside the analysis region [-1, {big}]")
    horizon = 2.0 * p.period if horizon is None else float(horizon)
    modes = tuple(Mode(m, build_fwr_dynamics(p, m), fwr_invariant(m)) for m in MODES)
    ics = Polytope.box([0.0, p.A, lo], [0.0, p.A, hi])
    region = Polytope.box([-big, -big, -1.0], [big, big, big])
    return PIHA(
        dim=3,
        modes=modes,
        transitions=tuple(derive_transitions(modes)),
        ics=ics,
        analysis_region=region,
        horizon=horizon,
        var_names=("x1", "x2", "vout"),
    )


def fwr_properties(p: CircuitParams | None = None, p2_threshold: float = 3.0) -> tuple[SafetySpec, SafetySpec]:
    """P1: ``vout`` never negative.  P2: ``vout`` never at or below ``p2_threshold``."""
    p = p or CircuitParams()
    if not p2_threshold < p.A:
        raise ModelError(f"P2 threshold {p2_threshold} must be below the input amplitude {p.A}")
    down = np.array([[0.0, 0.0, 1.0]])
    p1 = SafetySpec("P1", ((None, Polytope(down, [-P1_MARGIN])),))
    p2 = SafetySpec("P2", ((None, Polytope(down, [p2_threshold])),))
    return p1, p2


def fwr_integrator_config(p: CircuitParams | None = None, **overrides) -> IntegratorConfig:
    """Integrator settings scaled to the input period (``h_max`` = period/200)."""
    p = p or CircuitParams()
    kw = dict(h_init=p.period * 1e-4, h_max=p.period / 200)
    kw.update(overrides)
    return IntegratorConfig(**kw)


def fwr_reach_dt(p: CircuitParams | None = None) -> float:
    return (p or CircuitParams()).period / 200
