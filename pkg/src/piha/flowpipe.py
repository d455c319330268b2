"""Flow-pipe over-approximation of the reachable states.

Within a mode the reachable set from an entry polytope is covered by a
sequence of overlapping polytopes, one per time window of width ``dt``.
Because the vector field is affine, the state at time ``t`` of any initial
point is the same convex combination of the vertex trajectories, so a
hull of sampled vertex trajectories (padded for the chord error between
samples and the integration error) covers the whole window.

Across modes a worklist carries entry polytopes: a segment's intersection
with an outgoing guard, the target invariant and the halfspaces where the
flows permit the crossing becomes an entry of the target mode.  Entry
times are intervals; a segment produced ``k`` windows after an entry
spanning ``[a, b]`` covers times ``[a + k dt, b + (k+1) dt]``.
"""
from __future__ import annotations

import csv
import io
import logging
import os
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import geometry as geo
from .geometry import Polytope
from .model import PIHA, Mode
from .sim import IntegratorConfig, rk45_adaptive_step

logger = logging.getLogger(__name__)

__all__ = [
    "ReachError",
    "BudgetExhausted",
    "ReachConfig",
    "FlowpipeSegment",
    "Entry",
    "flowpipe_mode_segments",
    "exit_region",
    "touch_region",
    "reach_sets",
    "segments_covering",
    "segments_to_csv",
    "write_segments_csv",
]


class ReachError(RuntimeError):
    pass


class BudgetExhausted(ReachError):
    """The segment budget ran out before the horizon was covered."""

    def __init__(self, message: str, segments: list["FlowpipeSegment"]):
        super().__init__(message)
        self.segments = segments


@dataclass(frozen=True)
class ReachConfig:
    """Flow-pipe settings.

    ``dt`` is the segment width in seconds.  ``bloat_factor`` scales the
    padding added to each sampled hull.  ``template`` is the direction set
    of the hulls (box plus octagonal directions when ``None``).  Pieces
    handed to a transition are merged into one entry per time bin of
    ``entry_bin`` windows; ``1`` gives one entry per window.  Entry hulls
    are rounded outward to multiples of ``entry_grid`` (default: 1e-3 of
    the analysis-region diameter) so that repeated re-entries settle.
    """

    dt: float
    max_segments: int = 50_000
    bloat_factor: float = 2.0
    template: np.ndarray | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    subsumption: bool = True
    entry_bin: int = 4
    entry_grid: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_segments < 1:
            raise ValueError("max_segments must be positive")
        if self.entry_bin < 1:
            raise ValueError("entry_bin must be positive")
        if not self.bloat_factor >= 1.0:
            raise ValueError("bloat_factor must be >= 1")

    def directions(self, dim: int) -> np.ndarray:
        if self.template is None:
            return geo.default_template(dim)
        T = np.atleast_2d(np.asarray(self.template, dtype=float))
        if T.shape[1] != dim:
            raise ValueError(f"template directions have length {T.shape[1]}, expected {dim}")
        return T


@dataclass(frozen=True, eq=False)
class FlowpipeSegment:
    mode: str
    t_lo: float
    t_hi: float
    region: Polytope

    def covers(self, t: float, x, tol: float = geo.LP_TOL) -> bool:
        return self.t_lo <= t <= self.t_hi and geo.contains_point(self.region, x, tol)


@dataclass(frozen=True, eq=False)
class Entry:
    """States entering ``mode`` during ``[t_lo, t_hi]``.

    ``clip`` is the exit region the entry was cut to, if any, and
    ``facets`` lists the rows of the mode's normalized invariant on which
    all of ``clip`` lies, with the flow pointing into the mode.
    """

    mode: str
    region: Polytope
    t_lo: float
    t_hi: float
    clip: Polytope | None = None
    facets: frozenset[int] = frozenset()


def _chord_bound(m: Mode, S: np.ndarray, h: float) -> float:
    """Distance between a trajectory and its chord over a step of length ``h``.

    ``|x''| = |A (A x + b)|`` is convex in ``x``, so its maximum over the
    hull of the sampled states is attained at a sample.  The curve strays
    from that hull by at most the chord error itself, which is accounted
    for with one fixed-point correction through ``|A|^2``.
    """
    A = m.dynamics.A
    AT = A.T
    acc = (S @ AT + m.dynamics.b) @ AT
    M = float(np.max(np.linalg.norm(acc, axis=1)))
    nA2 = float(np.linalg.norm(A, 2)) ** 2
    delta = h * h * M / 8.0
    return h * h * (M + nA2 * delta) / 8.0


def flowpipe_mode_segments(m: Mode, P0: Polytope, t0: float, cfg: ReachConfig, h: PIHA,
                           t0_hi: float | None = None, horizon: float | None = None) -> list[FlowpipeSegment]:
    """Cover the flow of ``m`` from ``P0`` with one polytope per window.

    ``P0`` is sampled at its vertices and Chebyshev center.  The samples
    are advanced together, window by window; the region of window ``k`` is
    the template hull of every sampled state in the window, bloated by
    ``bloat_factor * (max step error + chord error)`` where the chord error
    is ``h^2 max|x''| / 8`` for the longest accepted step ``h``.
    Segmentation stops once a region no longer meets the invariant, at the
    horizon, or after ``cfg.max_segments`` windows.

    The entry time may be an interval ``[t0, t0_hi]``.  Time windows are
    cut off at the horizon.
    """
    t0_hi = t0 if t0_hi is None else t0_hi
    horizon = h.horizon if horizon is None else horizon
    pts = np.array(geo.sample_points(P0, "vertices_plus_center"))
    dirs = cfg.directions(h.dim)
    f = _affine_rhs(m)
    icfg = cfg.integrator
    segments: list[FlowpipeSegment] = []
    X = pts.copy()
    step = min(icfg.h_init, cfg.dt)
    k = 0
    while k < cfg.max_segments:
        w_lo = k * cfg.dt
        if t0 + w_lo >= horizon and k > 0:
            break
        w_hi = (k + 1) * cfg.dt
        states = [X]
        max_err = 0.0
        max_h = 0.0
        s = w_lo
        while s < w_hi:
            hstep = min(step, w_hi - s)
            X, s_new, step, err = rk45_adaptive_step(f, X, s, hstep, icfg)
            max_h = max(max_h, s_new - s)
            s = w_hi if hstep == w_hi - s else s_new
            states.append(X)
            max_err = max(max_err, err)
        S = np.vstack(states)
        eps = cfg.bloat_factor * (max_err + _chord_bound(m, S, max_h))
        region = geo.bloat(geo.template_hull(S, dirs), eps)
        if k > 0 and geo.is_empty(geo.intersect(region, m.invariant))[0]:
            break
        segments.append(FlowpipeSegment(m.id, t0 + w_lo, min(t0_hi + w_hi, max(horizon, t0)), region))
        k += 1
    return segments


def _affine_rhs(m: Mode) -> Callable[[np.ndarray], np.ndarray]:
    A = m.dynamics.A
    b = m.dynamics.b
    AT = A.T.copy()
    return lambda X: X @ AT + b


def _initial_entries(h: PIHA) -> list[Entry]:
    out = []
    for m in h.modes:
        P = geo.intersect(h.ics, m.invariant)
        if not geo.is_empty(P)[0]:
            out.append(Entry(m.id, P, 0.0, 0.0))
    return out


def _subsumed(e: Entry, done: list[Entry]) -> bool:
    for d in done:
        if d.mode == e.mode and d.t_lo <= e.t_lo and e.t_hi <= d.t_hi and geo.is_subset(e.region, d.region):
            return True
    return False


def _round_out(P: Polytope, grid: float) -> Polytope:
    if grid <= 0:
        return P
    step = grid * np.linalg.norm(P.A, axis=1)
    return Polytope(P.A, np.ceil(P.b / step - 1e-9) * step)


def _snap_window(lo: float, hi: float, dt: float, horizon: float) -> tuple[float, float]:
    lo = float(np.floor(lo / dt + 1e-9) * dt)
    hi = float(min(np.ceil(hi / dt - 1e-9) * dt, horizon))
    return lo, max(lo, hi)


def _make_entry(target: str, pieces: list[tuple[Polytope, float, float]], clip: Polytope,
                dirs: np.ndarray, grid: float, dt: float, horizon: float) -> Entry:
    """Template hull of the pieces, rounded outward, clipped to the exit region."""
    pts = np.vstack([geo.vertices(P) for P, _, _ in pieces])
    hull = _round_out(geo.template_hull(pts, dirs), grid)
    lo, hi = _snap_window(min(lo for _, lo, _ in pieces), max(hi for _, _, hi in pieces), dt, horizon)
    return Entry(target, geo.intersect(hull, clip), lo, hi, clip)


def _join(d: Entry, e: Entry, h: PIHA, dirs: np.ndarray, grid: float) -> Entry:
    """Widened entry covering ``d`` and ``e`` from the earlier start up to the horizon."""
    same = d.clip is not None and d.clip is e.clip
    clip = d.clip if same else None
    facets = d.facets if same else frozenset()
    if geo.is_subset(e.region, d.region):
        region = d.region
    else:
        pts = np.vstack([geo.vertices(d.region), geo.vertices(e.region)])
        hull = _round_out(geo.template_hull(pts, dirs), grid)
        region = geo.intersect(hull, clip if same else h.mode(e.mode).invariant)
    return Entry(e.mode, region, min(d.t_lo, e.t_lo), h.horizon, clip, facets)


def _facets_on(inv: Polytope, S: Polytope) -> list[int]:
    """Rows of ``inv`` (normalized) whose hyperplane contains all of ``S``."""
    An, bn = inv.normalized()
    return [i for i, (a, c) in enumerate(zip(An, bn)) if np.any(a) and c + geo.support(S, -a) <= 1e-9]


def _flow_halfspaces(m: Mode, rows: list[int], outward: bool) -> Polytope | None:
    """``a·(A x + b) >= 0`` (outward) or ``<= 0`` for the given invariant rows."""
    An, _ = m.invariant.normalized()
    A, b = m.dynamics.A, m.dynamics.b
    G, g = [], []
    for i in rows:
        a = An[i]
        sgn = -1.0 if outward else 1.0
        G.append(sgn * (a @ A))
        g.append(-sgn * float(a @ b))
    if not G:
        return None
    G = np.array(G)
    zero = ~np.any(G, axis=1)
    if np.any(np.array(g)[zero] < 0):
        return Polytope(np.zeros((1, m.dim)), [-1.0])
    if np.all(zero):
        return None
    return Polytope(G[~zero], np.array(g)[~zero])


def exit_region(h: PIHA, tr) -> Polytope:
    """States of ``tr.guard`` through which a trajectory can pass into the target.

    On every source-invariant facet ``a·x <= c`` containing the guard the
    source flow must not point inward, ``a·(A x + b) >= 0``, and on every
    target facet containing it the target flow must not point back out.
    A state failing the second test would leave the target at once, and
    two zero-duration switches in a row are not an execution.  The result
    also lies in the target invariant.
    """
    src, tgt = h.mode(tr.source), h.mode(tr.target)
    clip = geo.intersect(tr.guard, tgt.invariant)
    for m, outward in ((src, True), (tgt, False)):
        H = _flow_halfspaces(m, _facets_on(m.invariant, clip), outward)
        if H is not None:
            clip = geo.intersect(clip, H)
    return clip


def touch_region(h: PIHA, tr) -> Polytope:
    """Guard states the source flow can reach, whether or not the target keeps them."""
    src, tgt = h.mode(tr.source), h.mode(tr.target)
    clip = geo.intersect(tr.guard, tgt.invariant)
    H = _flow_halfspaces(src, _facets_on(src.invariant, clip), True)
    return clip if H is None else geo.intersect(clip, H)


def _no_return(m: Mode, region: Polytope, facets: frozenset[int]) -> set[int]:
    """Entry facets that no trajectory can reach again within ``region``.

    A trajectory enters through facet ``a·x <= c`` with ``g = c - a·x = 0``
    and ``g' >= 0``.  While it stays in ``region`` and ``g'' > 0`` there, ``g``
    stays positive, so it cannot cross that facet again.
    """
    An, _ = m.invariant.normalized()
    A, b = m.dynamics.A, m.dynamics.b
    out = set()
    for i in facets:
        w = An[i] @ A
        # g'' = -w·(A x + b) = -(w A)·x - w·b
        if -geo.support(region, w @ A) - float(w @ b) > 0:
            out.add(i)
    return out


def reach_sets(h: PIHA, spec_region_hook: Callable[[FlowpipeSegment], bool] | None = None,
               cfg: ReachConfig | None = None, initial: list[Entry] | None = None) -> list[FlowpipeSegment]:
    """Flow-pipe segments of every mode reachable from the initial set.

    The worklist is swept forward in time.  Every segment's intersection
    with a transition's exit region is a piece, filed under the transition
    and the time bin (``cfg.entry_bin`` windows wide) of its start time.
    The earliest bin is always flushed next: its pieces, whichever
    flow-pipes produced them, become one entry of the target mode.  A
    flow-pipe never produces pieces in a bin earlier than its own entry,
    so a flushed bin only receives new pieces through re-entries within
    the same bin.

    An entry is skipped when a processed entry of the same mode contains
    its region and time window.  Pieces of an entry's first segment that
    lead back across the facet it came through are dropped when the flow
    curves away from that facet over the whole segment (see
    :func:`_no_return`).  A re-entry into a mode within the same
    time bin (grazing contacts cause these) is widened instead: its region
    becomes the rounded template hull of both entries, valid up to the
    horizon.  Where a target's flow points straight back out of a guard
    state, the target is only touched for zero time; such states are
    reported as segments of the target but start no entry.
    ``spec_region_hook`` is called on every new segment; returning
    ``True`` stops the computation and the segments found so far are
    returned.

    Raises :class:`BudgetExhausted` when more than ``cfg.max_segments``
    segments would be needed.
    """
    if cfg is None:
        raise ValueError("a ReachConfig is required (it fixes the segment width)")
    dirs = cfg.directions(h.dim)
    width = cfg.entry_bin * cfg.dt
    exits = [exit_region(h, tr) for tr in h.transitions]
    touches = [touch_region(h, tr) for tr in h.transitions]
    bounce = [not geo.is_empty(T)[0] and not geo.is_subset(T, X) for T, X in zip(touches, exits)]
    src_facets = [set(_facets_on(h.mode(tr.source).invariant, exits[i])) for i, tr in enumerate(h.transitions)]
    tgt_facets = [frozenset(_facets_on(h.mode(tr.target).invariant, exits[i])) for i, tr in enumerate(h.transitions)]
    grid = cfg.entry_grid
    if grid is None:
        lo, hi = geo.bounding_box(h.analysis_region)
        grid = 1e-3 * float(np.linalg.norm(hi - lo))

    def bin_of(t: float) -> int:
        return int(np.floor(t / width + 1e-9))

    ready = deque(initial if initial is not None else _initial_entries(h))
    pool: dict[tuple[int, int], list[tuple[Polytope, float, float]]] = {}
    done: list[Entry] = []
    out: list[FlowpipeSegment] = []
    while ready or pool:
        if not ready:
            b = min(k[1] for k in pool)
            for key in sorted(k for k in pool if k[1] == b):
                pieces = pool.pop(key)
                tr = h.transitions[key[0]]
                e = _make_entry(tr.target, pieces, exits[key[0]], dirs, grid, cfg.dt, h.horizon)
                ready.append(replace(e, facets=tgt_facets[key[0]]))
            continue
        e = ready.popleft()
        if e.t_lo >= h.horizon:
            continue
        if cfg.subsumption:
            if _subsumed(e, done):
                continue
            d = next((d for d in reversed(done)
                      if d.mode == e.mode and bin_of(d.t_lo) == bin_of(e.t_lo)
                      and not geo.is_empty(geo.intersect(e.region, d.region))[0]), None)
            if d is not None:
                e = _join(d, e, h, dirs, grid)
                if _subsumed(e, done):
                    continue
        done.append(e)
        budget = cfg.max_segments - len(out)
        if budget <= 0:
            raise BudgetExhausted(f"segment budget of {cfg.max_segments} exhausted", out)
        sub_cfg = replace(cfg, max_segments=budget, template=dirs)
        segs = flowpipe_mode_segments(h.mode(e.mode), e.region, e.t_lo, sub_cfg, h, t0_hi=e.t_hi)
        if logger.isEnabledFor(logging.DEBUG):
            blo, bhi = geo.bounding_box(e.region)
            logger.debug("mode %s entry [%g, %g] box %s..%s: %d segments", e.mode, e.t_lo, e.t_hi,
                         np.round(blo, 3), np.round(bhi, 3), len(segs))
        for seg in segs:
            out.append(seg)
            if spec_region_hook is not None and spec_region_hook(seg):
                return out
        if len(segs) == budget and segs[-1].t_lo < h.horizon:
            raise BudgetExhausted(f"segment budget of {cfg.max_segments} exhausted", out)
        sealed = _no_return(h.mode(e.mode), segs[0].region, e.facets) if segs and e.facets else set()
        touched: list[FlowpipeSegment] = []
        for i, tr in enumerate(h.transitions):
            if tr.source != e.mode:
                continue
            for k, seg in enumerate(segs):
                if bounce[i]:
                    # the exit piece lies inside the touch piece
                    T = geo.intersect(seg.region, touches[i])
                    if geo.is_empty(T)[0]:
                        continue
                    if not geo.is_subset(T, exits[i]):
                        touched.append(FlowpipeSegment(tr.target, seg.t_lo, seg.t_hi, T))
                if k == 0 and src_facets[i] & sealed:
                    continue
                P = geo.intersect(seg.region, exits[i])
                if not geo.is_empty(P)[0]:
                    pool.setdefault((i, bin_of(seg.t_lo)), []).append((P, seg.t_lo, seg.t_hi))
        for seg in touched:
            out.append(seg)
            if spec_region_hook is not None and spec_region_hook(seg):
                return out
    return out


def segments_covering(segments: list[FlowpipeSegment], t: float, x, tol: float = geo.LP_TOL) -> list[FlowpipeSegment]:
    return [s for s in segments if s.covers(t, x, tol)]


def segments_to_csv(segments: list[FlowpipeSegment]) -> str:
    """Debug dump: one row per constraint, ``mode,t_lo,t_hi,constraint_index,normal...,offset``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = segments[0].region.dim if segments else 0
    w.writerow(["mode", "t_lo", "t_hi", "constraint_index"] + [f"n{i + 1}" for i in range(dim)] + ["offset"])
    for s in segments:
        for i, (a, c) in enumerate(zip(s.region.A, s.region.b)):
            w.writerow([s.mode, f"{s.t_lo:.17g}", f"{s.t_hi:.17g}", i] + [f"{v:.17g}" for v in a] + [f"{c:.17g}"])
    return buf.getvalue()


def write_segments_csv(segments: list[FlowpipeSegment], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(segments_to_csv(segments))
