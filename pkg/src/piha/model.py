"""Polyhedral-invariant hybrid automata.

Modes carry affine dynamics ``dx/dt = A x + b`` and a polyhedral invariant;
transitions carry a polyhedral guard and an identity reset.  A
:class:`PIHA` bundles the modes with the initial continuous set, the
analysis region and the time horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import geometry as geo
from .geometry import Polytope

__all__ = [
    "ModelError",
    "CoverageGapError",
    "AffineDynamics",
    "Mode",
    "Transition",
    "PIHA",
    "SafetySpec",
    "Diagnostic",
    "derive_transitions",
    "validate_piha",
    "select_mode",
]


class ModelError(ValueError):
    pass


class CoverageGapError(ModelError):
    """No mode invariant contains the queried state."""


@dataclass(frozen=True, eq=False)
class AffineDynamics:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError(f"dynamics matrix must be square, got shape {A.shape}")
        if b.shape[0] != A.shape[0]:
            raise ModelError(f"dynamics offset has length {b.shape[0]}, matrix is {A.shape[0]}x{A.shape[0]}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.b


@dataclass(frozen=True, eq=False)
class Mode:
    id: str
    dynamics: AffineDynamics
    invariant: Polytope

    @property
    def dim(self) -> int:
        return self.dynamics.dim


@dataclass(frozen=True, eq=False)
class Transition:
    """Edge ``source -> target`` enabled on ``guard``; the reset is identity."""

    source: str
    target: str
    guard: Polytope


@dataclass(frozen=True, eq=False)
class PIHA:
    dim: int
    modes: tuple[Mode, ...]
    transitions: tuple[Transition, ...]
    ics: Polytope
    analysis_region: Polytope
    horizon: float
    initial_mode_rule: Callable[["PIHA", np.ndarray], str] | None = None
    var_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if self.var_names is not None:
            object.__setattr__(self, "var_names", tuple(self.var_names))

    @property
    def mode_ids(self) -> list[str]:
        return [m.id for m in self.modes]

    def mode(self, mode_id: str) -> Mode:
        for m in self.modes:
            if m.id == mode_id:
                return m
        raise KeyError(mode_id)

    def outgoing(self, mode_id: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == mode_id]

    def initial_mode(self, x) -> str:
        if self.initial_mode_rule is not None:
            return self.initial_mode_rule(self, np.asarray(x, dtype=float))
        return select_mode(self, x)


@dataclass(frozen=True, eq=False)
class SafetySpec:
    """Conjunction of ``AG not p`` over the avoid regions and ``AG not out_of_bound``.

    Each avoid region is ``(mode_id or None, polytope)``; a mode id
    restricts the region to states in that mode.  ``out_of_bound`` is the
    complement of the automaton's analysis region and is implicit.
    """

    name: str
    avoid_regions: tuple[tuple[str | None, Polytope], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "avoid_regions", tuple((m, P) for m, P in self.avoid_regions))

    def check_dims(self, dim: int) -> None:
        for mode_id, P in self.avoid_regions:
            if P.dim != dim:
                raise ModelError(f"spec {self.name!r}: avoid region has dim {P.dim}, automaton has dim {dim}")

    def formula(self) -> str:
        parts = ["(AG ~out_of_bound)"]
        for mode_id, _ in self.avoid_regions:
            parts.append("(AG ~avoid)" if mode_id is None else f"(AG ~(fsm == {mode_id} & avoid))")
        return " & ".join(parts)


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    element: str
    message: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.element}: {self.message}"


def _dedupe_rows(P: Polytope) -> Polytope:
    An, bn = P.normalized()
    seen = []
    keep = []
    for i, (a, c) in enumerate(zip(An, bn)):
        key = (tuple(np.round(a, 12)), round(float(c), 12))
        if key not in seen:
            seen.append(key)
            keep.append(i)
    return Polytope(P.A[keep], P.b[keep], dim=P.dim)


def derive_transitions(modes: Sequence[Mode]) -> list[Transition]:
    """Transitions between every ordered pair of modes sharing a facet.

    The guard is the intersection of the two invariants.  Pairs whose
    invariants only meet in a set of dimension below ``dim - 1`` (corners,
    edges) get no edge.
    """
    out = []
    for src in modes:
        for tgt in modes:
            if src.id == tgt.id:
                continue
            guard = _dedupe_rows(geo.intersect(src.invariant, tgt.invariant))
            if geo.affine_dimension(guard) == src.dim - 1:
                out.append(Transition(src.id, tgt.id, guard))
    return out


def validate_piha(h: PIHA, coverage_grid: int = 5) -> list[Diagnostic]:
    """Compliance check; returns an empty list for a well-formed automaton."""
    diags: list[Diagnostic] = []
    ids = [m.id for m in h.modes]
    if not ids:
        diags.append(Diagnostic("no-modes", "PIHA", "automaton has no modes"))
    seen: set[str] = set()
    for mid in ids:
        if mid in seen:
            diags.append(Diagnostic("duplicate-mode-id", f"mode {mid}", "mode id declared more than once"))
        seen.add(mid)

    dims_ok = True
    for m in h.modes:
        if m.dynamics.dim != h.dim:
            dims_ok = False
            diags.append(Diagnostic("dimension-mismatch", f"mode {m.id}",
                                    f"dynamics have dim {m.dynamics.dim}, automaton has dim {h.dim}"))
        if m.invariant.dim != h.dim:
            dims_ok = False
            diags.append(Diagnostic("dimension-mismatch", f"mode {m.id}",
                                    f"invariant has dim {m.invariant.dim}, automaton has dim {h.dim}"))
    for k, t in enumerate(h.transitions):
        name = f"transition {k} ({t.source} -> {t.target})"
        if t.source not in seen:
            diags.append(Diagnostic("unresolved-source", name, f"unknown source mode {t.source!r}"))
        if t.target not in seen:
            diags.append(Diagnostic("unresolved-target", name, f"unknown target mode {t.target!r}"))
        if t.source == t.target:
            diags.append(Diagnostic("self-loop", name, "source and target coincide"))
        if t.guard.dim != h.dim:
            dims_ok = False
            diags.append(Diagnostic("dimension-mismatch", name,
                                    f"guard has dim {t.guard.dim}, automaton has dim {h.dim}"))
    for label, P in (("ics", h.ics), ("analysis_region", h.analysis_region)):
        if P.dim != h.dim:
            dims_ok = False
            diags.append(Diagnostic("dimension-mismatch", label, f"has dim {P.dim}, automaton has dim {h.dim}"))
    if not h.horizon > 0:
        diags.append(Diagnostic("bad-horizon", "PIHA", f"horizon must be positive, got {h.horizon}"))
    if not dims_ok:
        return diags

    if geo.is_empty(h.ics)[0]:
        diags.append(Diagnostic("ics-empty", "ics", "initial continuous set is empty"))
    else:
        An, bn = h.analysis_region.normalized()
        for i, (a, c) in enumerate(zip(An, bn)):
            if geo.support(h.ics, a) > c + geo.LP_TOL:
                diags.append(Diagnostic("ics-outside-AR", "ics",
                                        f"initial set violates analysis-region constraint {i}"))

    if not geo.is_bounded(h.analysis_region):
        diags.append(Diagnostic("analysis-region-unbounded", "analysis_region",
                                "analysis region must be bounded"))
    elif h.modes:
        pts = geo.sample_points(h.analysis_region, f"grid({coverage_grid})")
        if h.dim <= geo.MAX_VERTEX_DIM:
            pts = list(geo.vertices(h.analysis_region)) + pts
        for p in pts:
            if not any(geo.contains_point(m.invariant, p, geo.LP_TOL) for m in h.modes):
                diags.append(Diagnostic("coverage-gap", "analysis_region",
                                        f"no invariant contains sampled point {np.round(p, 6).tolist()}"))
                break
    return diags


def select_mode(h: PIHA, x, tol: float = geo.LP_TOL) -> str:
    """First mode, in declaration order, whose closed invariant contains ``x``.

    Exact membership is tried first; if that finds nothing, a mode within
    ``tol`` is accepted.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != h.dim:
        raise ModelError(f"state has length {x.size}, automaton has dim {h.dim}")
    for t in (0.0, tol):
        for m in h.modes:
            if geo.contains_point(m.invariant, x, t):
                return m.id
    raise CoverageGapError(f"no mode invariant contains {x.tolist()}")
