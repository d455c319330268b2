import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, HalfspaceIntersection

from oracles import brute_vertices, random_polytope, same_point_sets
from piha import geometry as geo
from piha.geometry import Polytope


def unit_box(dim=2):
    return Polytope.box(np.zeros(dim), np.ones(dim))


class TestPolytope:
    def test_row_length_checked(self):
        with pytest.raises(geo.GeometryError):
            Polytope([[1.0, 0.0]], [1.0], dim=3)

    def test_universe_has_no_rows(self):
        U = Polytope.universe(2)
        assert U.is_universe and U.n_constraints == 0

    def test_no_rows_without_dim_rejected(self):
        with pytest.raises(geo.GeometryError):
            Polytope(np.zeros((0, 0)), [])


class TestIsEmpty:
    def test_contradictory_interval(self):
        empty, w = geo.is_empty(Polytope([[1.0], [-1.0]], [1.0, -2.0]))
        assert empty and w is None

    def test_unit_box_witness(self):
        empty, w = geo.is_empty(unit_box())
        assert not empty
        assert geo.contains_point(unit_box(), w, 1e-9)

    def test_degenerate_is_nonempty(self):
        seg = Polytope.box([0.0, 1.0], [1.0, 1.0])
        assert not geo.is_empty(seg)[0]

    def test_universe(self):
        assert not geo.is_empty(Polytope.universe(3))[0]

    def test_solver_failure_surfaces(self, monkeypatch):
        class Bad:
            status, message = 4, "numerical trouble"

        monkeypatch.setattr(geo, "linprog", lambda *a, **k: Bad())
        with pytest.raises(geo.SolverError):
            geo.is_empty(unit_box())

    def test_random_3d_against_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            A, b = random_polytope(rng, 3)
            assert geo.is_empty(Polytope(A, b))[0] == (len(brute_vertices(A, b)) == 0)


class TestIntersect:
    def test_with_universe(self):
        P = unit_box()
        Q = geo.intersect(P, Polytope.universe(2))
        assert same_point_sets(geo.vertices(Q), geo.vertices(P))

    def test_intervals(self):
        Q = geo.intersect(Polytope.box([0.0], [2.0]), Polytope.box([1.0], [3.0]))
        assert geo.bounding_box(Q) == pytest.approx(([1.0], [2.0]))

    def test_dim_mismatch(self):
        with pytest.raises(geo.GeometryError):
            geo.intersect(unit_box(2), unit_box(3))

    def test_membership_random_2d(self):
        rng = np.random.default_rng(11)
        P = Polytope(*random_polytope(rng, 2, 3, may_be_empty=False))
        Q = Polytope(*random_polytope(rng, 2, 3, may_be_empty=False))
        X = rng.uniform(-2.5, 2.5, size=(10_000, 2))
        got = geo.contains_points(geo.intersect(P, Q), X)
        want = np.all(X @ P.A.T <= P.b, axis=1) & np.all(X @ Q.A.T <= Q.b, axis=1)
        assert np.array_equal(got, want)


class TestContains:
    def test_origin_in_universe(self):
        assert geo.contains_point(Polytope.universe(2), [0.0, 0.0])

    def test_outside_interval(self):
        assert not geo.contains_point(Polytope.box([0.0], [1.0]), [1.5], 0.0)

    def test_closed_boundary(self):
        assert geo.contains_point(Polytope.box([0.0], [1.0]), [1.0], 1e-9)

    def test_tolerance_scales_with_normal(self):
        P = Polytope([[10.0]], [10.0])
        assert geo.contains_point(P, [1.0 + 5e-10], 1e-9)
        assert not geo.contains_point(P, [1.0 + 2e-9], 1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(geo.GeometryError):
            geo.contains_point(unit_box(), [0.0, 0.0, 0.0])


class TestTemplateHull:
    def test_single_point(self):
        p = np.array([0.3, -1.2])
        H = geo.template_hull([p], geo.box_directions(2))
        assert geo.contains_point(H, p, 1e-12)
        assert geo.bounding_box(H)[0] == pytest.approx(p)
        assert geo.bounding_box(H)[1] == pytest.approx(p)

    def test_corner_points_box(self):
        H = geo.template_hull([[0, 0], [1, 0], [0, 1]], geo.box_directions(2))
        lo, hi = geo.bounding_box(H)
        assert lo == pytest.approx([0, 0]) and hi == pytest.approx([1, 1])

    def test_errors(self):
        with pytest.raises(geo.GeometryError):
            geo.template_hull(np.zeros((0, 2)), geo.box_directions(2))
        with pytest.raises(geo.GeometryError):
            geo.template_hull([[0.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]])

    def test_random_3d_contains_and_volume(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(100, 3))
        H = geo.template_hull(pts, geo.default_template(3))
        assert np.all(geo.contains_points(H, pts, 1e-12))
        vol_hull = ConvexHull(geo.vertices(H)).volume
        assert vol_hull >= ConvexHull(pts).volume - 1e-9

    @given(st.lists(st.tuples(*[st.floats(-100, 100)] * 3), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_hull_soundness(self, pts):
        pts = np.array(pts)
        H = geo.template_hull(pts, geo.default_template(3))
        assert np.all(geo.contains_points(H, pts, 1e-12))


def _dist_to_polygon(V, X):
    """Euclidean distance from each row of ``X`` to the convex polygon ``conv(V)``."""
    ring = V[ConvexHull(V).vertices]
    P0, P1 = ring, np.roll(ring, -1, axis=0)
    E = P1 - P0
    W = X[:, None, :] - P0[None, :, :]
    s = np.clip(np.einsum("nkd,kd->nk", W, E) / np.einsum("kd,kd->k", E, E), 0.0, 1.0)
    d = np.linalg.norm(W - s[..., None] * E[None], axis=2).min(axis=1)
    inside = np.all(E[None, :, 0] * W[..., 1] - E[None, :, 1] * W[..., 0] >= 0, axis=1)
    return np.where(inside, 0.0, d)


class TestBloat:
    def test_interval(self):
        lo, hi = geo.bounding_box(geo.bloat(Polytope.box([0.0], [1.0]), 0.5))
        assert lo == pytest.approx([-0.5]) and hi == pytest.approx([1.5])

    def test_zero_is_identity(self):
        P = Polytope(*random_polytope(np.random.default_rng(1), 2, 3, may_be_empty=False))
        assert same_point_sets(geo.vertices(geo.bloat(P, 0.0)), geo.vertices(P))

    def test_negative_rejected(self):
        with pytest.raises(geo.GeometryError):
            geo.bloat(unit_box(), -1e-3)

    def test_near_points_contained(self):
        rng = np.random.default_rng(5)
        P = Polytope(*random_polytope(rng, 2, 3, box=1.0, may_be_empty=False))
        V = geo.vertices(P)
        B = geo.bloat(P, 0.1)
        X = rng.uniform(-1.3, 1.3, size=(20_000, 2))
        near = X[_dist_to_polygon(V, X) <= 0.05][:1000]
        assert len(near) == 1000
        assert np.all(geo.contains_points(B, near))

    @given(st.floats(0, 2), st.floats(0, 2), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_monotone(self, e1, e2, seed):
        e1, e2 = sorted((e1, e2))
        rng = np.random.default_rng(seed)
        P = Polytope(*random_polytope(rng, 2, 3, may_be_empty=False))
        X = rng.uniform(-5, 5, size=(500, 2))
        inner = geo.contains_points(geo.bloat(P, e1), X)
        outer = geo.contains_points(geo.bloat(P, e2), X)
        assert np.all(~inner | outer)


class TestSamplePoints:
    def test_interval_vertices(self):
        pts = geo.sample_points(Polytope.box([0.0], [1.0]), "vertices")
        assert sorted(float(p[0]) for p in pts) == pytest.approx([0.0, 1.0])

    def test_square_plus_center(self):
        pts = np.array(geo.sample_points(unit_box(), "vertices_plus_center"))
        assert len(pts) == 5
        assert same_point_sets(pts[:4], [[0, 0], [0, 1], [1, 0], [1, 1]])
        assert pts[4] == pytest.approx([0.5, 0.5])

    def test_point_is_sampled_once(self):
        pts = geo.sample_points(Polytope.box([1.0, 2.0], [1.0, 2.0]), "vertices_plus_center")
        assert len(pts) == 1 and pts[0] == pytest.approx([1.0, 2.0])

    def test_grid(self):
        pts = geo.sample_points(unit_box(), "grid(3)")
        assert len(pts) == 9

    def test_errors(self):
        with pytest.raises(geo.EmptyPolytopeError):
            geo.sample_points(Polytope([[1.0], [-1.0]], [0.0, -1.0]))
        with pytest.raises(geo.UnboundedPolytopeError):
            geo.sample_points(Polytope([[1.0, 0.0]], [1.0]))
        with pytest.raises(geo.GeometryError):
            geo.sample_points(unit_box(5), "vertices")
        with pytest.raises(geo.GeometryError):
            geo.sample_points(unit_box(), "random")

    def test_random_3d_vertices_match_qhull(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            A, b = random_polytope(rng, 3, may_be_empty=False)
            P = Polytope(A, b)
            c, _ = geo.chebyshev_center(P)
            hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), c)
            V = np.array(geo.sample_points(P, "vertices"))
            assert same_point_sets(V, np.unique(np.round(hs.intersections, 9), axis=0), atol=1e-6)
            assert np.all(geo.contains_points(P, V, 1e-9))


class TestScalingInvariance:
    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    @settings(max_examples=40, deadline=None)
    def test_row_scaling(self, seed, lam):
        rng = np.random.default_rng(seed)
        A, b = random_polytope(rng, 2, 3)
        k = int(rng.integers(len(b)))
        A2, b2 = A.copy(), b.copy()
        A2[k] *= lam
        b2[k] *= lam
        P, Q = Polytope(A, b), Polytope(A2, b2)
        assert geo.is_empty(P)[0] == geo.is_empty(Q)[0]
        X = rng.uniform(-3, 3, size=(200, 2))
        assert np.array_equal(geo.contains_points(P, X, 1e-9), geo.contains_points(Q, X, 1e-9))
        if not geo.is_empty(P)[0]:
            assert same_point_sets(geo.vertices(P), geo.vertices(Q))


class TestSubsetDisjoint:
    def test_subset(self):
        assert geo.is_subset(Polytope.box([0.2, 0.2], [0.8, 0.8]), unit_box())
        assert not geo.is_subset(Polytope.box([0.2, 0.2], [1.8, 0.8]), unit_box())

    def test_disjoint(self):
        assert geo.are_disjoint(unit_box(), Polytope.box([2.0, 0.0], [3.0, 1.0]))
        assert not geo.are_disjoint(unit_box(), Polytope.box([1.0, 0.0], [3.0, 1.0]))

    def test_random_agree_with_lp(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            P = Polytope(*random_polytope(rng, 2, 2, box=1.0))
            Q = Polytope(*random_polytope(rng, 2, 2, box=1.5))
            assert geo.are_disjoint(P, Q) == geo.is_empty(geo.intersect(P, Q))[0]
            if geo.is_empty(P)[0]:
                continue
            V = geo.vertices(P)
            assert geo.is_subset(P, Q) == bool(np.all(geo.contains_points(Q, V, 1e-7)))


def test_probabilistic_intersection_consistency():
    rng = np.random.default_rng(29)
    for _ in range(20):
        P = Polytope(*random_polytope(rng, 2, 2, box=1.0))
        Q = Polytope(*random_polytope(rng, 2, 2, box=1.0))
        X = rng.uniform(-1, 1, size=(100_000, 2))
        hit = np.any(geo.contains_points(P, X) & geo.contains_points(Q, X))
        if hit:
            assert not geo.is_empty(geo.intersect(P, Q))[0]
