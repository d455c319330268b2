"""Convex polytopes in halfspace form.

A :class:`Polytope` is the intersection of closed halfspaces ``A @ x <= b``.
Every region the verifier handles (mode invariants, guards, initial sets,
analysis regions, avoid sets, flow-pipe segments) is one of these.  Linear
programs are solved with HiGHS through :func:`scipy.optimize.linprog`.

Rows are never normalized in storage; every operation that compares
against a tolerance works on row-normalized copies, so scaling a row by a
positive factor does not change any result.
"""
from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "LP_TOL",
    "GeometryError",
    "SolverError",
    "EmptyPolytopeError",
    "UnboundedPolytopeError",
    "Polytope",
    "box_directions",
    "default_template",
    "is_empty",
    "intersect",
    "contains_point",
    "template_hull",
    "bloat",
    "support",
    "bounding_box",
    "is_bounded",
    "chebyshev_center",
    "vertices",
    "sample_points",
    "is_subset",
    "are_disjoint",
    "affine_dimension",
]

LP_TOL = 1e-9
MAX_VERTEX_DIM = 4

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class GeometryError(ValueError):
    """Invalid input to a polytope operation."""


class SolverError(RuntimeError):
    """The LP solver failed to produce a usable answer."""


class EmptyPolytopeError(GeometryError):
    pass


class UnboundedPolytopeError(GeometryError):
    pass


class Polytope:
    """Closed convex polytope ``{x : A @ x <= b}``.

    Parameters
    ----------
    A : array_like, shape (m, dim)
        Constraint normals, one row per halfspace.
    b : array_like, shape (m,)
        Constraint offsets.
    dim : int, optional
        Required when ``A`` has no rows (the universe polytope).

    Instances are immutable; the arrays are flagged read-only.
    """

    __slots__ = ("_A", "_b")

    def __init__(self, A, b, dim: int | None = None):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.size == 0:
            if dim is None:
                if A.ndim == 2 and A.shape[1] > 0:
                    dim = A.shape[1]
                else:
                    raise GeometryError("dim is required for a polytope without constraints")
            A = np.zeros((0, int(dim)))
        if A.ndim == 1:
            A = A.reshape(1, -1)
        if A.ndim != 2:
            raise GeometryError(f"constraint matrix must be 2-D, got shape {A.shape}")
        if dim is not None and A.shape[1] != dim:
            raise GeometryError(f"normals have length {A.shape[1]}, expected {dim}")
        if A.shape[1] < 1:
            raise GeometryError("polytope dimension must be positive")
        if b.shape[0] != A.shape[0]:
            raise GeometryError(f"{A.shape[0]} normals but {b.shape[0]} offsets")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise GeometryError("constraints must be finite")
        A = A.copy()
        b = b.copy()
        A.setflags(write=False)
        b.setflags(write=False)
        self._A = A
        self._b = b

    @classmethod
    def universe(cls, dim: int) -> "Polytope":
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    @classmethod
    def from_constraints(cls, constraints: Iterable[tuple[Sequence[float], float]],
                         dim: int | None = None) -> "Polytope":
        rows = [(np.asarray(n, dtype=float), float(c)) for n, c in constraints]
        if not rows:
            if dim is None:
                raise GeometryError("dim is required for an empty constraint list")
            return cls.universe(dim)
        lengths = {len(n) for n, _ in rows}
        if len(lengths) != 1 or (dim is not None and lengths != {dim}):
            raise GeometryError(f"inconsistent normal lengths {sorted(lengths)}")
        return cls(np.vstack([n for n, _ in rows]), np.array([c for _, c in rows]))

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "Polytope":
        """Axis-aligned box ``lo <= x <= hi`` (degenerate boxes allowed)."""
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise GeometryError("lo and hi must have the same length")
        n = lo.size
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @property
    def A(self) -> np.ndarray:
        return self._A

    @property
    def b(self) -> np.ndarray:
        return self._b

    @property
    def dim(self) -> int:
        return self._A.shape[1]

    @property
    def n_constraints(self) -> int:
        return self._A.shape[0]

    @property
    def constraints(self) -> list[tuple[np.ndarray, float]]:
        return [(self._A[i].copy(), float(self._b[i])) for i in range(self.n_constraints)]

    @property
    def is_universe(self) -> bool:
        return self.n_constraints == 0

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-normalized ``(A, b)``; zero rows are kept as zero rows."""
        norms = np.linalg.norm(self._A, axis=1)
        scale = np.where(norms > 0, norms, 1.0)
        return self._A / scale[:, None], self._b / scale

    def same_constraints(self, other: "Polytope") -> bool:
        return (
            self.dim == other.dim
            and self._A.shape == other._A.shape
            and np.array_equal(self._A, other._A)
            and np.array_equal(self._b, other._b)
        )

    def __repr__(self) -> str:
        return f"Polytope(dim={self.dim}, n_constraints={self.n_constraints})"


def box_directions(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    return np.vstack([eye, -eye])


def default_template(dim: int) -> np.ndarray:
    """Box directions ``±e_i`` plus octagonal directions ``±e_i ± e_j``."""
    dirs = [row for row in box_directions(dim)]
    for i, j in itertools.combinations(range(dim), 2):
        for si, sj in itertools.product((1.0, -1.0), repeat=2):
            d = np.zeros(dim)
            d[i], d[j] = si, sj
            dirs.append(d)
    return np.array(dirs)


def _check_dim(P: Polytope, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.dim:
        raise GeometryError(f"point has length {x.size}, polytope has dim {P.dim}")
    return x


def _solve(c, A_ub=None, b_ub=None, bounds=None, A_eq=None, b_eq=None):
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options=_HIGHS_OPTIONS,
    )
    if res.status not in (0, 2, 3):
        raise SolverError(f"LP solver failed (status {res.status}): {res.message}")
    return res


def _max_margin(P: Polytope, lower: float | None, upper: float | None):
    """Solve ``max t  s.t.  a_i·x + t <= b_i`` on normalized rows.

    Returns ``(t, x)``.  ``t`` is the smallest slack of ``x``, in distance
    units; it is the Chebyshev radius when ``lower`` is 0.
    """
    An, bn = P.normalized()
    n = P.dim
    m = An.shape[0]
    zero_rows = ~np.any(An != 0.0, axis=1)
    if np.any(zero_rows):
        if np.any(bn[zero_rows] < -LP_TOL):
            return -np.inf, None
        An, bn = An[~zero_rows], bn[~zero_rows]
        m = An.shape[0]
    if m == 0:
        return (np.inf if upper is None else upper), np.zeros(n)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([An, np.ones((m, 1))])
    bounds = [(None, None)] * n + [(lower, upper)]
    res = _solve(c, A_ub=A_ub, b_ub=bn, bounds=bounds)
    if res.status == 2:
        return -np.inf, None
    if res.status == 3:
        return np.inf, None
    return float(res.x[-1]), np.asarray(res.x[:n])


def is_empty(P: Polytope) -> tuple[bool, np.ndarray | None]:
    """Decide emptiness by LP feasibility.

    Returns ``(True, None)`` for an empty polytope and ``(False, witness)``
    otherwise, where the witness violates no constraint by more than
    :data:`LP_TOL` (distance units).  Lower-dimensional polytopes are
    nonempty.
    """
    t, x = _max_margin(P, lower=None, upper=1.0)
    if x is None or t < -LP_TOL:
        return True, None
    return False, x


def intersect(P: Polytope, Q: Polytope) -> Polytope:
    if P.dim != Q.dim:
        raise GeometryError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    return Polytope(np.vstack([P.A, Q.A]), np.concatenate([P.b, Q.b]), dim=P.dim)


def contains_point(P: Polytope, x, tol: float = 0.0) -> bool:
    """``a·x <= b + tol·|a|`` for every row."""
    x = _check_dim(P, x)
    if tol < 0:
        raise GeometryError("tol must be non-negative")
    if P.is_universe:
        return True
    norms = np.linalg.norm(P.A, axis=1)
    return bool(np.all(P.A @ x <= P.b + tol * norms))


def contains_points(P: Polytope, X, tol: float = 0.0) -> np.ndarray:
    """Vectorized :func:`contains_point` over the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != P.dim:
        raise GeometryError(f"points have length {X.shape[1]}, polytope has dim {P.dim}")
    if P.is_universe:
        return np.ones(X.shape[0], dtype=bool)
    norms = np.linalg.norm(P.A, axis=1)
    return np.all(X @ P.A.T <= P.b + tol * norms, axis=1)


def template_hull(points, directions) -> Polytope:
    """Tightest polytope with the given facet normals enclosing ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise GeometryError("template_hull needs at least one point")
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if dirs.shape[1] != pts.shape[1]:
        raise GeometryError(f"directions have length {dirs.shape[1]}, points have dim {pts.shape[1]}")
    if np.any(np.linalg.norm(dirs, axis=1) == 0):
        raise GeometryError("template contains a zero direction")
    offsets = np.max(pts @ dirs.T, axis=0)
    return Polytope(dirs, offsets)


def bloat(P: Polytope, eps: float) -> Polytope:
    """Push every facet outward by ``eps`` (Euclidean distance)."""
    if eps < 0:
        raise GeometryError("bloat amount must be non-negative")
    norms = np.linalg.norm(P.A, axis=1)
    if np.any(norms == 0):
        raise GeometryError("cannot bloat a polytope with a zero normal")
    return Polytope(P.A, P.b + eps * norms, dim=P.dim)


def support(P: Polytope, d) -> float:
    """``max d·x`` over ``P``; ``inf`` if unbounded, ``-inf`` if empty."""
    d = _check_dim(P, d)
    if P.is_universe:
        return 0.0 if not np.any(d) else np.inf
    res = _solve(-d, A_ub=P.A, b_ub=P.b, bounds=[(None, None)] * P.dim)
    if res.status == 2:
        return -np.inf
    if res.status == 3:
        return np.inf
    return float(-res.fun)


def bounding_box(P: Polytope) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis bounds; raises for empty or unbounded polytopes."""
    n = P.dim
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        hi[i] = support(P, e)
        lo[i] = -support(P, -e)
        if hi[i] == -np.inf or lo[i] == np.inf:
            raise EmptyPolytopeError("polytope is empty")
        if not (np.isfinite(hi[i]) and np.isfinite(lo[i])):
            raise UnboundedPolytopeError(f"polytope is unbounded along axis {i}")
    return lo, hi


def is_bounded(P: Polytope) -> bool:
    try:
        bounding_box(P)
    except UnboundedPolytopeError:
        return False
    return True


def chebyshev_center(P: Polytope) -> tuple[np.ndarray, float]:
    """Center and radius of the largest inscribed ball.

    For lower-dimensional polytopes the radius is zero and the LP's center
    is arbitrary, so the centroid of the vertices is returned instead
    (when the dimension allows vertex enumeration).
    """
    r, x = _max_margin(P, lower=None, upper=None)
    if x is None and r == -np.inf:
        raise EmptyPolytopeError("polytope is empty")
    if x is None:
        raise UnboundedPolytopeError("polytope contains arbitrarily large balls")
    if r < -LP_TOL:
        raise EmptyPolytopeError("polytope is empty")
    if r <= LP_TOL and P.dim <= MAX_VERTEX_DIM:
        V = vertices(P)
        if len(V):
            return V.mean(axis=0), 0.0
    return x, max(r, 0.0)


def vertices(P: Polytope, tol: float = LP_TOL) -> np.ndarray:
    """All vertices of a bounded polytope, shape (k, dim).

    Enumerates every ``dim``-subset of constraints, solves the square
    system, keeps feasible solutions and merges duplicates.  Intended for
    ``dim <= 4`` and a few dozen constraints.
    """
    n = P.dim
    if n > MAX_VERTEX_DIM:
        raise GeometryError(f"vertex enumeration supports dim <= {MAX_VERTEX_DIM}, got {n}")
    An, bn = P.normalized()
    keep = np.any(An != 0.0, axis=1)
    if np.any(bn[~keep] < -tol):
        return np.zeros((0, n))
    An, bn = An[keep], bn[keep]
    m = An.shape[0]
    if m < n:
        return np.zeros((0, n))
    combos = np.array(list(itertools.combinations(range(m), n)), dtype=int)
    found = []
    for chunk in np.array_split(combos, max(1, len(combos) // 20000 + 1)):
        M = An[chunk]
        rhs = bn[chunk]
        det = np.linalg.det(M)
        ok = np.abs(det) > 1e-10
        if not np.any(ok):
            continue
        X = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
        slack = X @ An.T - bn
        feasible = np.all(slack <= tol, axis=1)
        found.append(X[feasible])
    if not found:
        return np.zeros((0, n))
    X = np.vstack(found) + 0.0
    return _dedupe(X)


def _dedupe(X: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    out: list[np.ndarray] = []
    for x in X[np.lexsort(X.T[::-1])]:
        if not any(np.max(np.abs(x - y)) <= tol * (1.0 + np.max(np.abs(y))) for y in out):
            out.append(x)
    return np.array(out).reshape(-1, X.shape[1])


def sample_points(P: Polytope, strategy: str = "vertices_plus_center") -> list[np.ndarray]:
    """Representative points of a nonempty bounded polytope.

    ``strategy`` is ``"vertices"``, ``"vertices_plus_center"`` or
    ``"grid(k)"`` (a ``k``-per-axis grid over the bounding box, filtered to
    ``P``).
    """
    empty, _ = is_empty(P)
    if empty:
        raise EmptyPolytopeError("cannot sample an empty polytope")
    lo, hi = bounding_box(P)
    if strategy in ("vertices", "vertices_plus_center"):
        V = vertices(P)
        pts = [v for v in V]
        if strategy == "vertices_plus_center":
            c = np.asarray(chebyshev_center(P)[0], dtype=float)
            # a degenerate polytope can have its center on a vertex
            if not any(np.max(np.abs(c - v)) <= 1e-8 * (1.0 + np.max(np.abs(v))) for v in pts):
                pts.append(c)
        return pts
    if strategy.startswith("grid(") and strategy.endswith(")"):
        try:
            k = int(strategy[5:-1])
        except ValueError:
            raise GeometryError(f"bad grid strategy {strategy!r}") from None
        if k < 1:
            raise GeometryError("grid resolution must be >= 1")
        axes = [np.unique(np.linspace(l, h, k)) if k > 1 else np.array([(l + h) / 2]) for l, h in zip(lo, hi)]
        G = np.array(list(itertools.product(*axes)))
        inside = contains_points(P, G, LP_TOL)
        return [g for g in G[inside]]
    raise GeometryError(f"unknown sampling strategy {strategy!r}")


def _implied_rows(P: Polytope, Q: Polytope, tol: float) -> np.ndarray:
    """Mask of the rows of ``Q`` implied by a parallel row of ``P`` alone."""
    Pa, Pb = P.normalized()
    Qa, Qb = Q.normalized()
    if Pa.shape[0] == 0 or Qa.shape[0] == 0:
        return np.zeros(Qa.shape[0], dtype=bool)
    par = (Qa @ Pa.T) > 1.0 - 1e-12
    slack = np.where(par, Qb[:, None] - Pb[None, :], -np.inf)
    return np.any(slack >= -tol, axis=1)


def is_subset(P: Polytope, Q: Polytope, tol: float = LP_TOL) -> bool:
    """True if every point of ``P`` satisfies every constraint of ``Q``."""
    if P.dim != Q.dim:
        raise GeometryError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    An, bn = Q.normalized()
    todo = ~_implied_rows(P, Q, tol)
    if not np.any(todo) or is_empty(P)[0]:
        return True
    for a, c in zip(An[todo], bn[todo]):
        if not np.any(a):
            if c < -tol:
                return False
            continue
        if support(P, a) > c + tol:
            return False
    return True


def are_disjoint(P: Polytope, Q: Polytope) -> bool:
    """True if ``P`` and ``Q`` share no point."""
    if P.dim != Q.dim:
        raise GeometryError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    Pa, Pb = P.normalized()
    Qa, Qb = Q.normalized()
    if Pa.shape[0] and Qa.shape[0]:
        opp = (Pa @ Qa.T) < -1.0 + 1e-12
        if np.any(opp & (Pb[:, None] + Qb[None, :] < -LP_TOL)):
            return True
    return is_empty(intersect(P, Q))[0]


def affine_dimension(P: Polytope, tol: float = 1e-7) -> int:
    """Dimension of the affine hull of a nonempty polytope (-1 if empty).

    A constraint is an implicit equality when its slack cannot be made
    positive anywhere in ``P``; the affine hull is cut out by those rows.
    """
    if is_empty(P)[0]:
        return -1
    An, bn = P.normalized()
    eq_rows = []
    for a, c in zip(An, bn):
        if not np.any(a):
            continue
        if c + support(P, -a) <= tol:
            eq_rows.append(a)
    if not eq_rows:
        return P.dim
    return P.dim - int(np.linalg.matrix_rank(np.array(eq_rows), tol=1e-9))
