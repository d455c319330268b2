"""Explore and verify.

``explore`` simulates from a handful of initial points and checks each
trace against a safety spec.  ``verify_safety`` builds flow-pipes for a
partition of the initial set; a partition whose flow-pipe misses every
avoid region and stays in the analysis region passes.  Otherwise explore
looks for a concrete violation inside the partition, and if none turns up
the partition is bisected and tried again.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .flowpipe import BudgetExhausted, FlowpipeSegment, ReachConfig, reach_sets
from .geometry import Polytope
from .model import PIHA, ModelError, SafetySpec
from .sim import HybridTrace, IntegratorConfig, SimulationError, simulate_hybrid

__all__ = [
    "PASS",
    "FAIL",
    "INCONCLUSIVE",
    "SPLIT_RULES",
    "UnsplittableError",
    "RefineConfig",
    "VerificationResult",
    "PointReport",
    "check_trace_safety",
    "explore",
    "refine_ics",
    "verify_safety",
    "segment_violation",
]

PASS, FAIL, INCONCLUSIVE = "Pass", "Fail", "Inconclusive"
SPLIT_RULES = ("widest_axis", "round_robin")

# widths below this count as zero when choosing a split axis
_FLAT = 1e-12


class UnsplittableError(geo.GeometryError):
    pass


@dataclass(frozen=True)
class RefineConfig:
    max_depth: int = 6
    split_axis_rule: str = "widest_axis"

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.split_axis_rule not in SPLIT_RULES:
            raise ValueError(f"split_axis_rule must be one of {SPLIT_RULES}, got {self.split_axis_rule!r}")


@dataclass
class VerificationResult:
    spec_name: str
    verdict: str
    counterexample: HybridTrace | None = None
    iterations: int = 0
    segments_total: int = 0
    partitions_processed: int = 0
    wall_time: float = 0.0
    avoid_intersections: int = 0
    unresolved: list[Polytope] = field(default_factory=list)
    segments: list[FlowpipeSegment] = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass
class PointReport:
    x0: np.ndarray
    safe: bool | None
    violation: tuple[float, str] | None = None
    trace: HybridTrace | None = None
    error: str | None = None


def check_trace_safety(tr: HybridTrace, spec: SafetySpec, h: PIHA) -> tuple[bool, tuple[float, str] | None]:
    """Earliest violation of ``spec`` on the samples of ``tr``.

    Returns ``(True, None)`` for a safe trace, otherwise ``(False, (t, which))``
    with ``which`` either ``"out_of_bound"`` or ``"avoid"``.
    """
    if tr.dim != h.dim:
        raise ModelError(f"trace has dim {tr.dim}, automaton has dim {h.dim}")
    spec.check_dims(h.dim)
    outside = ~geo.contains_points(h.analysis_region, tr.x, geo.LP_TOL)
    hit = np.zeros(len(tr), dtype=bool)
    modes = np.array(tr.modes, dtype=object)
    for mode_id, P in spec.avoid_regions:
        inside = geo.contains_points(P, tr.x)
        if mode_id is not None:
            inside &= modes == mode_id
        hit |= inside
    bad = np.flatnonzero(outside | hit)
    if bad.size == 0:
        return True, None
    i = int(bad[0])
    return False, (float(tr.t[i]), "out_of_bound" if outside[i] else "avoid")


def explore(h: PIHA, spec: SafetySpec, cfg: IntegratorConfig | None = None,
            points: list[np.ndarray] | None = None) -> tuple[bool, list[PointReport]]:
    """Simulate from the vertices and Chebyshev center of the initial set.

    A point whose simulation fails gets a report with ``safe=None`` and the
    error message; the other points are still run.  ``all_safe`` is false
    exactly when some trace violates ``spec``.
    """
    if points is None:
        points = geo.sample_points(h.ics, "vertices_plus_center")
    reports = []
    for x0 in points:
        x0 = np.asarray(x0, dtype=float)
        try:
            tr = simulate_hybrid(h, x0, h.horizon, cfg, check_ics=False)
        except (SimulationError, ModelError) as exc:
            reports.append(PointReport(x0, None, error=str(exc)))
            continue
        safe, where = check_trace_safety(tr, spec, h)
        reports.append(PointReport(x0, safe, where, tr))
    return all(r.safe is not False for r in reports), reports


def refine_ics(P: Polytope, rule: str = "widest_axis", depth: int = 0) -> tuple[Polytope, Polytope]:
    """Bisect ``P`` across one axis of its bounding box.

    ``widest_axis`` cuts the longest side; ``round_robin`` cycles through
    the axes with ``depth`` and skips flat ones.
    """
    if rule not in SPLIT_RULES:
        raise ValueError(f"unknown split rule {rule!r}")
    lo, hi = geo.bounding_box(P)
    width = hi - lo
    if np.all(width <= _FLAT):
        raise UnsplittableError("polytope has zero width along every axis")
    if rule == "widest_axis":
        axis = int(np.argmax(width))
    else:
        order = [(depth + k) % P.dim for k in range(P.dim)]
        axis = next(i for i in order if width[i] > _FLAT)
    mid = 0.5 * (lo[axis] + hi[axis])
    e = np.zeros(P.dim)
    e[axis] = 1.0
    return (geo.intersect(P, Polytope(e[None, :], [mid])),
            geo.intersect(P, Polytope(-e[None, :], [-mid])))


def segment_violation(seg: FlowpipeSegment, spec: SafetySpec, h: PIHA) -> str | None:
    """``"avoid"`` or ``"out_of_bound"`` if the segment may violate ``spec``."""
    for mode_id, P in spec.avoid_regions:
        if (mode_id is None or mode_id == seg.mode) and not geo.are_disjoint(seg.region, P):
            return "avoid"
    if not geo.is_subset(seg.region, h.analysis_region):
        return "out_of_bound"
    return None


def verify_safety(h: PIHA, spec: SafetySpec, reach_cfg: ReachConfig,
                  refine_cfg: RefineConfig | None = None,
                  sim_cfg: IntegratorConfig | None = None,
                  keep_segments: bool = False) -> VerificationResult:
    """Flow-pipe verification of ``spec`` with refinement of the initial set.

    Partitions are handled breadth-first.  A Fail always carries a
    simulated counterexample; a partition that keeps failing only in the
    over-approximation past ``max_depth`` makes the verdict Inconclusive.
    With ``keep_segments`` every computed segment is kept on the result.
    """
    refine_cfg = refine_cfg or RefineConfig()
    sim_cfg = sim_cfg or reach_cfg.integrator
    spec.check_dims(h.dim)
    start = time.perf_counter()
    res = VerificationResult(spec.name, PASS)
    queue = deque([(h.ics, 0)])
    while queue:
        P, depth = queue.popleft()
        res.iterations = max(res.iterations, depth + 1)
        res.partitions_processed += 1
        hp = replace(h, ics=P)
        hits: list[str] = []

        def hook(seg: FlowpipeSegment) -> bool:
            v = segment_violation(seg, spec, hp)
            if v is not None:
                hits.append(v)
                return True
            return False

        try:
            segs = reach_sets(hp, hook, reach_cfg)
            exhausted = False
        except BudgetExhausted as exc:
            segs, exhausted = exc.segments, True
        res.segments_total += len(segs)
        if keep_segments:
            res.segments.extend(segs)
        if not hits and not exhausted:
            continue
        res.avoid_intersections += hits.count("avoid")

        _, reports = explore(hp, spec, sim_cfg)
        cex = next((r for r in reports if r.safe is False), None)
        if cex is not None:
            res.verdict = FAIL
            res.counterexample = cex.trace
            res.unresolved = []
            break
        if depth < refine_cfg.max_depth:
            try:
                queue.extend((Q, depth + 1) for Q in refine_ics(P, refine_cfg.split_axis_rule, depth))
                continue
            except UnsplittableError:
                pass
        res.verdict = INCONCLUSIVE
        res.unresolved.append(P)
    res.wall_time = time.perf_counter() - start
    return res
