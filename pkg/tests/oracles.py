"""Reference computations the tests compare the package against.

Nothing here imports the package; each oracle is a direct, slow
implementation of the quantity it checks.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def brute_vertices(A, b, tol=1e-9):
    """Vertices of ``{x : A x <= b}`` by solving every square subsystem."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n = A.shape[1]
    norms = np.linalg.norm(A, axis=1)
    out = []
    for rows in itertools.combinations(range(A.shape[0]), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x - b <= tol * norms):
            if not any(np.allclose(x, y, atol=1e-7) for y in out):
                out.append(x)
    return np.array(out).reshape(-1, n)


def same_point_sets(X, Y, atol=1e-6):
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if len(X) != len(Y):
        return False
    return all(np.min(np.max(np.abs(Y - x), axis=1)) <= atol for x in X)


def random_polytope(rng, dim, n_extra=None, box=2.0, may_be_empty=True):
    """A box ``[-box, box]^dim`` cut by a few random halfspaces."""
    n_extra = rng.integers(1, 6) if n_extra is None else n_extra
    rows = [np.eye(dim)[i] for i in range(dim)] + [-np.eye(dim)[i] for i in range(dim)]
    offs = [box] * (2 * dim)
    for _ in range(n_extra):
        a = rng.normal(size=dim)
        scale = rng.uniform(0.2, 5.0)
        c = rng.uniform(-1.5, 1.5) if may_be_empty else rng.uniform(0.1, 1.5)
        rows.append(scale * a / np.linalg.norm(a))
        offs.append(scale * c)
    return np.array(rows), np.array(offs)


def rk4(f, x0, t0, t1, n):
    """Classical fixed-step RK4; returns the times and states."""
    h = (t1 - t0) / n
    x = np.array(x0, float)
    ts = [t0]
    xs = [x.copy()]
    t = t0
    for _ in range(n):
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (len(ts)) * h
        ts.append(t)
        xs.append(x.copy())
    return np.array(ts), np.array(xs)


def rectifier_rhs(R=1e3, C=100e-6, Rf=10.0, I0=1e-6, A=5.0, f=50.0):
    """``dvout/dt`` of the two-diode rectifier driven by ``A sin(2 pi f t)``."""
    w = 2 * math.pi * f

    def rhs(t, v):
        vin = A * math.sin(w * t)
        vout = v[0]
        v1, v2 = vin - vout, -vin - vout
        i1 = v1 / Rf if v1 >= 0 else -I0
        i2 = v2 / Rf if v2 >= 0 else -I0
        return np.array([-vout / (R * C) + (i1 + i2) / C])

    return rhs


def rectifier_dense(vout0, T, h=1e-6, **params):
    """Dense fixed-step run of the rectifier; returns ``(t, vout)``.

    Steps that straddle a diode switch are split at the sign change of the
    diode voltage so the non-smooth right-hand side does not cost accuracy.
    """
    rhs = rectifier_rhs(**params)
    A = params.get("A", 5.0)
    w = 2 * math.pi * params.get("f", 50.0)
    n = int(round(T / h))
    t = 0.0
    v = np.array([float(vout0)])
    ts = [0.0]
    vs = [v[0]]

    def step(t, v, dt):
        k1 = rhs(t, v)
        k2 = rhs(t + dt / 2, v + dt / 2 * k1)
        k3 = rhs(t + dt / 2, v + dt / 2 * k2)
        k4 = rhs(t + dt, v + dt * k3)
        return v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def signs(t, v):
        vin = A * math.sin(w * t)
        return (vin - v[0] >= 0, -vin - v[0] >= 0)

    for k in range(n):
        t1 = (k + 1) * h
        s0 = signs(t, v)
        v_new = step(t, v, t1 - t)
        if signs(t1, v_new) != s0:
            lo, hi = 0.0, t1 - t
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if signs(t + mid, step(t, v, mid)) == s0:
                    lo = mid
                else:
                    hi = mid
            v_mid = step(t, v, hi)
            v_new = step(t + hi, v_mid, t1 - t - hi)
        t, v = t1, v_new
        ts.append(t)
        vs.append(v[0])
    return np.array(ts), np.array(vs)
