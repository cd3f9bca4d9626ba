"""Discrete-time polynomial control-affine plant models.

A plant is x_{k+1} = f(x_k) + g(x_k) u_k with polynomial f, g.  The
module carries the differential (variational) dynamics as well: the
state Jacobian A(x, u) of the one-step map and the input matrix B(x),
both as polynomial matrices over the joint (x, u) variable space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jsonutil import JsonCursor
from .polyalg import (
    PolyMatrix,
    Polynomial,
    poly_from_dict,
    poly_to_dict,
)

__all__ = ["Box", "ControlAffineSystem", "cstr", "system_to_dict", "system_from_dict",
           "load_system", "save_system"]


@dataclass
class Box:
    """Axis-aligned box, used as the verification domain."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if np.any(self.lo >= self.hi):
            raise ValueError("each lower bound must be strictly below the upper bound")

    @property
    def dim(self):
        return self.lo.shape[0]

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def axes(self, resolution):
        """Per-axis uniform grids with ``resolution`` points each."""
        if resolution < 2:
            raise ValueError("resolution must be at least 2")
        return [np.linspace(self.lo[i], self.hi[i], resolution) for i in range(self.dim)]


class ControlAffineSystem:
    """x_{k+1} = f(x) + g(x) u with polynomial f: R^n -> R^n, g: R^n -> R^{n x m}."""

    def __init__(self, f, g, domain=None):
        self.f = list(f)
        self.n = len(self.f)
        if self.n == 0:
            raise ValueError("need at least one state")
        for i, p in enumerate(self.f):
            if not isinstance(p, Polynomial) or p.n_vars != self.n:
                raise ValueError(f"f[{i}] must be a Polynomial over {self.n} state variables")
        if not isinstance(g, PolyMatrix) or g.shape[0] != self.n or g.n_vars != self.n:
            raise ValueError(f"g must be a PolyMatrix with {self.n} rows over the state variables")
        self.g = g
        self.m = g.shape[1]
        if domain is not None and domain.dim != self.n:
            raise ValueError("domain dimension does not match the state dimension")
        self.domain = domain
        self._lin = None

    # ------------------------------------------------------------- dynamics

    def step(self, x, u):
        """One step of the dynamics; accepts points or (k, n)/(k, m) batches."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.ndim == 1:
            if x.shape != (self.n,) or u.shape != (self.m,):
                raise ValueError(f"expected shapes ({self.n},) and ({self.m},)")
            fx = np.array([p.evaluate(x) for p in self.f])
            return fx + self.g.evaluate(x) @ u
        if x.shape[1] != self.n or u.shape != (x.shape[0], self.m):
            raise ValueError("batch shapes must be (k, n) and (k, m)")
        fx = np.stack([p.evaluate(x) for p in self.f], axis=1)
        gv = self.g.evaluate(x)
        return fx + np.einsum("knm,km->kn", gv, u)

    def linearize(self):
        """Variational dynamics (A, B): polynomial matrices over (x, u).

        A(x, u) is the Jacobian of f(x) + g(x) u with respect to x, and
        B(x) is g promoted to the joint variable space.
        """
        if self._lin is None:
            nm = self.n + self.m
            u_vars = [Polynomial.variable(nm, self.n + j) for j in range(self.m)]
            h = []
            for i in range(self.n):
                hi = self.f[i].extend(nm)
                for j in range(self.m):
                    gij = self.g[i, j]
                    if not gij.is_zero():
                        hi = hi + gij.extend(nm) * u_vars[j]
                h.append(hi)
            A = PolyMatrix([[h[i].diff(j) for j in range(self.n)] for i in range(self.n)])
            B = self.g.extend(nm)
            self._lin = (A, B, h)
        return self._lin[0], self._lin[1]

    def closed_loop_polys(self):
        """f(x) + g(x) u as polynomials over the joint (x, u) variables."""
        self.linearize()
        return list(self._lin[2])

    def a_at(self, x, u):
        """Numeric A(x, u); accepts points or batches."""
        A, _ = self.linearize()
        return A.evaluate(_join(x, u, self.n, self.m))

    def b_at(self, x, u=None):
        """Numeric B(x) = g(x); u is accepted for signature symmetry."""
        x = np.asarray(x, dtype=float)
        if u is None:
            u = np.zeros(self.m) if x.ndim == 1 else np.zeros((x.shape[0], self.m))
        _, B = self.linearize()
        return B.evaluate(_join(x, u, self.n, self.m))


def _join(x, u, n, m):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 1:
        if x.shape != (n,) or u.shape != (m,):
            raise ValueError(f"expected shapes ({n},) and ({m},)")
        return np.concatenate([x, u])
    if u.ndim != 2 or u.shape != (x.shape[0], m) or x.shape[1] != n:
        raise ValueError("batch shapes must be (k, n) and (k, m)")
    return np.concatenate([x, u], axis=1)


def cstr():
    """Exothermic reactor benchmark (n=2, m=1).

    x1_{k+1} = 1.1 x1 - 0.1 x1 x2 + u
    x2_{k+1} = 0.9 x2 + 0.1 x1

    Bilinear in the state, fixed points at the origin and at (1, 1) for
    u = 0.  Ships with the [-0.5, 1.5]^2 operating box as its domain.
    """
    f1 = Polynomial(2, {(1, 0): 1.1, (1, 1): -0.1})
    f2 = Polynomial(2, {(0, 1): 0.9, (1, 0): 0.1})
    g = PolyMatrix([[Polynomial.constant(2, 1.0)], [Polynomial.zero(2)]])
    return ControlAffineSystem([f1, f2], g, domain=Box([-0.5, -0.5], [1.5, 1.5]))


# ------------------------------------------------------------------ serialization


def system_to_dict(sys):
    fdeg = max(max(p.degree() for p in sys.f), 0)
    gdeg = max(sys.g.degree(), 0)
    obj = {
        "n": sys.n,
        "m": sys.m,
        "f": [poly_to_dict(p, max_degree=fdeg) for p in sys.f],
        "g": [[poly_to_dict(sys.g[i, j], max_degree=gdeg) for j in range(sys.m)]
              for i in range(sys.n)],
    }
    if sys.domain is not None:
        obj["domain"] = {"lo": list(sys.domain.lo), "hi": list(sys.domain.hi)}
    return obj


def system_from_dict(obj):
    cur = JsonCursor(obj, "<dict>")
    return _system_from_cursor(cur)


def load_system(path):
    return _system_from_cursor(JsonCursor.load(path))


def save_system(sys, path):
    import json

    with open(path, "w") as fh:
        json.dump(system_to_dict(sys), fh, indent=2)
        fh.write("\n")


def _poly_from_cursor(cur, n_vars):
    obj = cur.as_dict()
    if cur.child("ordering").as_str() != "grlex":
        cur.child("ordering").fail("unsupported ordering (only 'grlex')")
    if cur.child("n_vars").as_int() != n_vars:
        cur.child("n_vars").fail(f"expected n_vars={n_vars}")
    max_degree = cur.child("max_degree").as_int()
    if max_degree < 0:
        cur.child("max_degree").fail("max_degree must be nonnegative")
    coeffs_cur = cur.child("coeffs")
    coeffs = coeffs_cur.as_float_list()
    try:
        return poly_from_dict({"n_vars": n_vars, "ordering": "grlex",
                               "max_degree": max_degree, "coeffs": coeffs})
    except ValueError as exc:
        coeffs_cur.fail(str(exc))


def _system_from_cursor(cur):
    n = cur.child("n").as_int()
    m = cur.child("m").as_int()
    if n < 1:
        cur.child("n").fail("n must be positive")
    if m < 1:
        cur.child("m").fail("m must be positive")
    f_cur = cur.child("f")
    f_items = f_cur.items()
    if len(f_items) != n:
        f_cur.fail(f"expected {n} entries, found {len(f_items)}")
    f = [_poly_from_cursor(c, n) for c in f_items]
    g_cur = cur.child("g")
    g_rows = g_cur.items()
    if len(g_rows) != n:
        g_cur.fail(f"expected {n} rows, found {len(g_rows)}")
    rows = []
    for row_cur in g_rows:
        row_items = row_cur.items()
        if len(row_items) != m:
            row_cur.fail(f"expected {m} columns, found {len(row_items)}")
        rows.append([_poly_from_cursor(c, n) for c in row_items])
    g = PolyMatrix(rows)
    domain = None
    dom_cur = cur.get("domain")
    if dom_cur is not None:
        lo = dom_cur.child("lo").as_float_list(n)
        hi = dom_cur.child("hi").as_float_list(n)
        try:
            domain = Box(lo, hi)
        except ValueError as exc:
            dom_cur.fail(str(exc))
    return ControlAffineSystem(f, g, domain=domain)
