"""Simulation of polyhedral-invariant hybrid automata.

Each mode's affine vector field is integrated with an embedded
Dormand-Prince 4(5) pair.  Crossings of invariant facets are localized by
bisection on re-integrated sub-steps and resolved to the outgoing
transition whose guard contains the crossing point.  Traces produced by an
external simulator can be brought in with :func:`ingest_external_trace`,
which labels modes and recovers switching events from the samples alone.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from .model import PIHA, Mode, ModelError, Transition, select_mode

__all__ = [
    "SimulationError",
    "StiffnessError",
    "ZenoError",
    "IntegratorConfig",
    "Event",
    "HybridTrace",
    "ModeExit",
    "eval_derivative",
    "rk45_adaptive_step",
    "simulate_until_event",
    "simulate_hybrid",
    "ingest_external_trace",
    "write_trace_csv",
    "read_trace_csv",
    "trace_to_csv",
]


class SimulationError(RuntimeError):
    pass


class StiffnessError(SimulationError):
    """Step size fell below ``h_min`` without meeting the error tolerance."""


class ZenoError(SimulationError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    h_init: float = 1e-5
    h_min: float = 1e-13
    h_max: float = 1e-3
    event_tol: float = 1e-9
    max_events: int = 100_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "h_init", "h_min", "h_max", "event_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.h_min <= self.h_init <= self.h_max:
            raise ValueError("need h_min <= h_init <= h_max")
        if self.max_events < 1:
            raise ValueError("max_events must be positive")


@dataclass(frozen=True)
class Event:
    t: float
    source: str
    target: str


@dataclass
class HybridTrace:
    """Time-stamped states with their active mode.

    ``t`` has shape (N,), ``x`` has shape (N, dim) and ``modes`` holds N
    mode ids.  A sample taken at a switching instant carries the mode that
    is active from that instant on.
    """

    t: np.ndarray
    x: np.ndarray
    modes: list[str]
    events: list[Event] = field(default_factory=list)
    termination: str = "horizon"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.modes = list(self.modes)

    def __len__(self) -> int:
        return self.t.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def samples(self) -> list[tuple[float, np.ndarray, str]]:
        return [(float(t), x, m) for t, x, m in zip(self.t, self.x, self.modes)]

    def mode_sequence(self) -> list[str]:
        seq: list[str] = []
        for m in self.modes:
            if not seq or seq[-1] != m:
                seq.append(m)
        return seq

    def problems(self) -> list[str]:
        """Violations of the trace invariants (empty when well formed)."""
        out = []
        n = len(self)
        if self.x.shape[0] != n or len(self.modes) != n:
            out.append("sample arrays have different lengths")
            return out
        if n > 1 and np.any(np.diff(self.t) <= 0):
            out.append("time stamps not strictly increasing")
        ev_times = np.array([e.t for e in self.events])
        for i in range(1, n):
            if self.modes[i] != self.modes[i - 1]:
                between = (ev_times > self.t[i - 1]) & (ev_times <= self.t[i]) if ev_times.size else []
                if not np.any(between):
                    out.append(f"mode change between samples {i - 1} and {i} without an event")
        return out


@dataclass
class ModeExit:
    kind: str  # "guard-hit", "horizon", "invariant-exit-unmatched", "out-of-bound"
    t: float
    x: np.ndarray
    transition: Transition | None = None
    facet: int | None = None


def eval_derivative(m: Mode, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != m.dim:
        raise ModelError(f"state has length {x.size}, mode {m.id!r} has dim {m.dim}")
    return m.dynamics.A @ x + m.dynamics.b


# Dormand-Prince 5(4) tableau
_A = [
    np.zeros(0),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _dp_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One Dormand-Prince step; returns the 5th-order state and the error vector.

    ``x`` may be a single state or a stack of states (last axis is the state).
    """
    K = np.empty((7,) + x.shape)
    K[0] = f(x)
    for i in range(1, 7):
        K[i] = f(x + h * np.tensordot(_A[i], K[:i], axes=1))
    return x + h * np.tensordot(_B5, K, axes=1), h * np.tensordot(_E, K, axes=1)


def rk45_adaptive_step(f, x, t: float, h: float, cfg: IntegratorConfig):
    """Take one accepted adaptive step from ``(t, x)``.

    The step is accepted when the embedded error estimate satisfies
    ``|err| <= rel_tol * |x| + abs_tol`` (Euclidean norms); otherwise ``h``
    shrinks and the step is retried.  Returns ``(x_next, t_next, h_next,
    err)``, where ``err`` is the norm of the accepted step's error estimate.

    A stack of states (shape ``(k, n)``) is advanced with a common step;
    the tolerance must then hold for every row and ``err`` is the largest
    row error.
    """
    x = np.asarray(x, dtype=float)
    h = min(h, cfg.h_max)
    while True:
        x_new, err_vec = _dp_step(f, x, h)
        errs = np.linalg.norm(err_vec, axis=-1)
        tols = cfg.rel_tol * np.maximum(np.linalg.norm(x, axis=-1), np.linalg.norm(x_new, axis=-1)) + cfg.abs_tol
        ratio = float(np.max(errs / tols))
        err = float(np.max(errs))
        if np.all(np.isfinite(x_new)) and ratio <= 1.0:
            factor = 5.0 if ratio == 0 else min(5.0, 0.9 * ratio ** -0.2)
            h_next = min(cfg.h_max, max(cfg.h_min, h * factor))
            return x_new, t + h, h_next, err
        factor = 0.2 if not np.isfinite(ratio) else max(0.2, 0.9 * ratio ** -0.2)
        if h <= cfg.h_min:
            raise StiffnessError(f"step size underflow at t={t:.6g} (h={h:.3g}, err={err:.3g})")
        h = max(cfg.h_min, h * factor)


def _state_scale(x: np.ndarray) -> float:
    return max(1.0, float(np.linalg.norm(x)))


class _FacetMonitor:
    """Signed slacks ``g(x) = b - a·x`` of the normalized invariant and AR facets."""

    def __init__(self, mode: Mode, region: geo.Polytope):
        inv_A, inv_b = mode.invariant.normalized()
        ar_A, ar_b = region.normalized()
        self.n_inv = inv_A.shape[0]
        self.A = np.vstack([inv_A, ar_A]) if ar_A.size else inv_A
        self.b = np.concatenate([inv_b, ar_b])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.b - self.A @ x


def simulate_until_event(h: PIHA, mode: str, x0, t0: float, t_max: float, cfg: IntegratorConfig | None = None):
    """Integrate one mode from ``(t0, x0)`` until it must be left or ``t_max``.

    Returns ``(trace, exit)``.  All samples of ``trace`` carry ``mode``;
    the last sample is the exit point.  ``exit.kind`` is one of
    ``"guard-hit"`` (``exit.transition`` is set), ``"horizon"``,
    ``"out-of-bound"`` (an analysis-region facet was crossed) or
    ``"invariant-exit-unmatched"`` (an invariant facet was crossed where no
    outgoing guard holds).

    A facet that ``x0`` lies on (or marginally outside) only triggers an
    immediate, zero-duration exit when the flow points outward.
    """
    cfg = cfg or IntegratorConfig()
    m = h.mode(mode)
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.size != h.dim:
        raise ModelError(f"state has length {x.size}, automaton has dim {h.dim}")
    f = m.dynamics
    mon = _FacetMonitor(m, h.analysis_region)
    g = mon(x)
    state_tol = 1e-6 * _state_scale(x)
    if np.any(g[: mon.n_inv] < -state_tol):
        raise SimulationError(f"initial state lies outside the invariant of mode {mode!r}")

    ts = [float(t0)]
    xs = [x.copy()]

    rate = -mon.A @ f(x)
    outward = (g <= 0) & (rate < 0)
    if np.any(outward):
        idx = int(np.flatnonzero(outward)[0])
        return _finish(h, m, mon, ts, xs, idx, float(t0), x)
    armed = g >= 0

    t = float(t0)
    step = cfg.h_init
    while t < t_max:
        hstep = min(step, t_max - t)
        x_new, t_new, step, _ = rk45_adaptive_step(f, x, t, hstep, cfg)
        if hstep == t_max - t:
            t_new = float(t_max)
        g_new = mon(x_new)
        crossed = armed & (g_new < 0)
        late = ~armed & (g_new < np.minimum(g, 0.0))
        if np.any(crossed):
            best = None
            for i in np.flatnonzero(crossed):
                tau, xi = _bisect(f, x, t_new - t, lambda y, i=i: mon(y)[i], cfg.event_tol)
                if best is None or tau < best[0]:
                    best = (tau, xi, int(i))
            tau, x_star, idx = best
            t_star = t + tau
            if t_star > t:
                ts.append(t_star)
                xs.append(x_star)
            return _finish(h, m, mon, ts, xs, idx, t_star, x_star)
        if np.any(late):
            idx = int(np.flatnonzero(late)[0])
            return _finish(h, m, mon, ts, xs, idx, t, x)
        armed |= g_new >= 0
        x, g, t = x_new, g_new, t_new
        ts.append(t)
        xs.append(x.copy())
    return HybridTrace(np.array(ts), np.array(xs), [mode] * len(ts)), ModeExit("horizon", t, x)


def _bisect(f, x: np.ndarray, h: float, g: Callable[[np.ndarray], float], tol: float):
    """Smallest sub-step ``tau`` in ``(0, h]`` with ``g < 0``, to within ``tol``.

    States inside the step are obtained by re-integrating from ``x`` with a
    single step of the same 5th-order scheme.
    """
    lo, hi = 0.0, h
    x_hi, _ = _dp_step(f, x, hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        x_mid, _ = _dp_step(f, x, mid)
        if g(x_mid) < 0:
            hi, x_hi = mid, x_mid
        else:
            lo = mid
    return hi, x_hi


def _finish(h: PIHA, m: Mode, mon: _FacetMonitor, ts, xs, facet: int, t_star: float, x_star: np.ndarray):
    trace = HybridTrace(np.array(ts), np.array(xs), [m.id] * len(ts))
    if facet >= mon.n_inv:
        return trace, ModeExit("out-of-bound", t_star, x_star, facet=facet - mon.n_inv)
    tol = 1e-6 * _state_scale(x_star)
    for tr in h.outgoing(m.id):
        if geo.contains_point(tr.guard, x_star, tol):
            return trace, ModeExit("guard-hit", t_star, x_star, transition=tr, facet=facet)
    return trace, ModeExit("invariant-exit-unmatched", t_star, x_star, facet=facet)


def simulate_hybrid(h: PIHA, x0, T: float, cfg: IntegratorConfig | None = None,
                    check_ics: bool = True) -> HybridTrace:
    """Simulate the automaton from ``x0`` over ``[0, T]``.

    Leaving the analysis region ends the trace early with
    ``termination == "out-of-bound"``; it is not an error.
    """
    cfg = cfg or IntegratorConfig()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != h.dim:
        raise ModelError(f"state has length {x0.size}, automaton has dim {h.dim}")
    if check_ics and not geo.contains_point(h.ics, x0, geo.LP_TOL):
        raise SimulationError("initial state is not in the initial continuous set")
    if T < 0:
        raise SimulationError("negative simulation time")
    if T > h.horizon * (1 + 1e-12):
        raise SimulationError(f"T={T} exceeds the automaton horizon {h.horizon}")
    mode = h.initial_mode(x0)
    ts: list[float] = [0.0]
    xs: list[np.ndarray] = [x0.copy()]
    modes: list[str] = [mode]
    events: list[Event] = []
    if T == 0:
        return HybridTrace(np.array(ts), np.array(xs), modes, events, "horizon")

    t, x = 0.0, x0
    zero_streak = 0
    termination = "horizon"
    while True:
        part, ex = simulate_until_event(h, mode, x, t, T, cfg)
        ts.extend(part.t[1:].tolist())
        xs.extend(part.x[1:])
        modes.extend([mode] * (len(part) - 1))
        if ex.kind == "horizon":
            break
        if ex.kind == "out-of-bound":
            termination = "out-of-bound"
            break
        if ex.kind == "invariant-exit-unmatched":
            raise SimulationError(
                f"mode {mode!r} left its invariant at t={ex.t:.9g} through facet {ex.facet} "
                "with no matching outgoing guard"
            )
        zero_streak = zero_streak + 1 if ex.t == t else 0
        if zero_streak >= 2:
            raise SimulationError(f"two consecutive zero-duration transitions at t={t:.9g}")
        target = ex.transition.target
        events.append(Event(ex.t, mode, target))
        if len(events) > cfg.max_events:
            raise ZenoError(f"more than {cfg.max_events} switches before t={ex.t:.6g} (Zeno behaviour suspected)")
        modes[-1] = target
        mode, t, x = target, ex.t, np.asarray(ex.x, dtype=float)
        if t >= T:
            break
    return HybridTrace(np.array(ts), np.array(xs), modes, events, termination)


def _hyperplanes(h: PIHA) -> tuple[np.ndarray, np.ndarray]:
    rows: list[tuple] = []
    A, b = [], []
    for m in h.modes:
        An, bn = m.invariant.normalized()
        for a, c in zip(An, bn):
            if not np.any(a):
                continue
            key = tuple(np.round(np.concatenate([a, [c]]), 12))
            neg = tuple(np.round(-np.concatenate([a, [c]]), 12))
            if key in rows or neg in rows:
                continue
            rows.append(key)
            A.append(a)
            b.append(c)
    return np.array(A).reshape(-1, h.dim), np.array(b)


def ingest_external_trace(rows, h: PIHA) -> HybridTrace:
    """Label externally simulated samples with modes and recover events.

    ``rows`` is a sequence of ``(t, x)`` pairs.  Each sample is labeled with
    :func:`~piha.model.select_mode`.  Between neighbouring samples every
    invariant hyperplane whose sign changes is located by linear
    interpolation; an event is emitted at each such crossing where the
    interpolated state's mode changes.
    """
    ts, xs = [], []
    for k, row in enumerate(rows):
        t, x = row
        x = np.asarray(x, dtype=float).reshape(-1)
        if xs and x.size != xs[0].size:
            raise SimulationError(f"row {k}: state dimension changed from {xs[0].size} to {x.size}")
        if ts and not float(t) > ts[-1]:
            raise SimulationError(f"row {k}: time stamps must be strictly increasing")
        ts.append(float(t))
        xs.append(x)
    if not ts:
        raise SimulationError("empty trace")
    if xs[0].size != h.dim:
        raise SimulationError(f"trace has dimension {xs[0].size}, automaton has dim {h.dim}")
    T = np.array(ts)
    X = np.array(xs)
    modes = [select_mode(h, x) for x in X]
    HA, Hb = _hyperplanes(h)
    events: list[Event] = []
    for i in range(len(T) - 1):
        if modes[i] == modes[i + 1] and not _sign_changes(HA, Hb, X[i], X[i + 1]).size:
            continue
        g0 = Hb - HA @ X[i]
        g1 = Hb - HA @ X[i + 1]
        cross = np.flatnonzero(np.sign(g0) != np.sign(g1))
        fracs = sorted({float(g0[j] / (g0[j] - g1[j])) for j in cross if g0[j] != g1[j]})
        fracs = [min(max(s, 0.0), 1.0) for s in fracs]
        current = modes[i]
        dt = T[i + 1] - T[i]
        bounds = fracs + [1.0]
        for k, s in enumerate(fracs):
            s_next = bounds[k + 1]
            probe = X[i] + 0.5 * (s + s_next) * (X[i + 1] - X[i]) if s_next > s else X[i] + s * (X[i + 1] - X[i])
            try:
                m_probe = select_mode(h, probe)
            except ModelError:
                continue
            if m_probe != current:
                t_ev = T[i] + s * dt
                t_ev = min(max(t_ev, np.nextafter(T[i], np.inf)), T[i + 1])
                events.append(Event(float(t_ev), current, m_probe))
                current = m_probe
        if current != modes[i + 1]:
            events.append(Event(float(T[i + 1]), current, modes[i + 1]))
    return HybridTrace(T, X, modes, events, "external")


def _sign_changes(HA, Hb, x0, x1) -> np.ndarray:
    if HA.size == 0:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(np.sign(Hb - HA @ x0) != np.sign(Hb - HA @ x1))


def trace_to_csv(trace: HybridTrace) -> str:
    """CSV text with header ``t,x1,...,xn,mode`` and 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{i + 1}" for i in range(trace.dim)] + ["mode"])
    for t, x, m in zip(trace.t, trace.x, trace.modes):
        w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x] + [m])
    return buf.getvalue()


def write_trace_csv(trace: HybridTrace, path: str | os.PathLike) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(trace_to_csv(trace))
    except OSError as exc:
        raise OSError(f"cannot write trace to {os.fspath(path)}: {exc.strerror}") from exc


def read_trace_csv(path: str | os.PathLike) -> tuple[list[tuple[float, np.ndarray]], list[str] | None]:
    """Rows ``(t, x)`` and the mode column (``None`` if the file has none)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SimulationError(f"{os.fspath(path)}: empty trace file") from None
        if not header or header[0] != "t":
            raise SimulationError(f"{os.fspath(path)}: header must start with 't'")
        has_mode = header[-1] == "mode"
        n = len(header) - 1 - int(has_mode)
        rows, modes = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SimulationError(f"{os.fspath(path)}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                t = float(rec[0])
                x = np.array([float(v) for v in rec[1:1 + n]])
            except ValueError as exc:
                raise SimulationError(f"{os.fspath(path)}:{lineno}: {exc}") from None
            rows.append((t, x))
            if has_mode:
                modes.append(rec[-1])
    return rows, (modes if has_mode else None)
