"""
Polytopes in halfspace form
===========================

Every set the checker touches is a ``Polytope``: rows ``a . x <= b``.
"""
import numpy as np

from piha import geometry as geo
from piha.geometry import Polytope

# a unit square cut by x + y <= 1.5
P = geo.intersect(Polytope.box([0.0, 0.0], [1.0, 1.0]), Polytope([[1.0, 1.0]], [1.5]))
print("empty:", geo.is_empty(P)[0])
print("vertices:\n", geo.vertices(P))

c, r = geo.chebyshev_center(P)
print(f"Chebyshev center {c.round(4)}, radius {r:.4f}")

# the bounding box is six LPs away; support is one
lo, hi = geo.bounding_box(P)
print("box:", lo, hi, " support along (1,1):", geo.support(P, [1.0, 1.0]))

# halfspace rows can be rescaled freely
Q = Polytope(P.A * np.arange(1, P.n_constraints + 1)[:, None], P.b * np.arange(1, P.n_constraints + 1))
print("same set after scaling rows:", geo.is_subset(P, Q) and geo.is_subset(Q, P))

# contradictory rows give an empty set
print("x <= 1 and x >= 2 empty:", geo.is_empty(Polytope([[1.0], [-1.0]], [1.0, -2.0]))[0])

# template hulls: the over-approximation used for flow-pipe segments
pts = np.random.default_rng(0).normal(size=(50, 2))
H = geo.template_hull(pts, geo.default_template(2))
print("hull of 50 points has", H.n_constraints, "faces; all inside:", geo.contains_points(H, pts, 1e-12).all())
