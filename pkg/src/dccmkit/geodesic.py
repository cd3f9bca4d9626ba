"""Numerical geodesics under a state-dependent contraction metric.

A path between x_from and x_to is discretized into N segments with
uniform parameter step delta_s = 1/N.  The decision variables are the
displacement rates d_1..d_N; node i is

    x_i = x_from + delta_s * (d_1 + ... + d_i),

and the endpoint constraint sum_i d_i * delta_s = x_to - x_from keeps
x_N = x_to.  The discretized Riemannian energy

    E = sum_i d_i' M(x_i) d_i * delta_s,      M(x) = W(x)^-1,

is minimized by projected gradient descent: the constraint set is an
affine subspace whose tangent space is {sum_i delta_i = 0}, and the
gradient carries the chain rule through every M(x_i)'s dependence on
the rates upstream of node i.  Strongly anisotropic metrics make the
raw Euclidean gradient direction nearly useless, so the descent
direction is the steepest one in the W-weighted inner product
(obliquely projected back onto the tangent space), started at the exact
minimizing step of the frozen-metric quadratic model and backtracked
until the energy decreases.  The energy is monotone from the
straight-line initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveMetric, SingularMetric
from .synth import metric_from_w

__all__ = [
    "GeodesicPath",
    "metric_at",
    "compute_geodesic",
    "path_energy",
    "save_path_csv",
]

_COND_CAP = 1e12


@dataclass
class GeodesicPath:
    """Discretized path with its energy and length under the metric."""

    x_from: np.ndarray
    x_to: np.ndarray
    n_segments: int
    delta_s: float
    deltas: np.ndarray          # (N, n) displacement rates
    nodes: np.ndarray           # (N + 1, n), nodes[0] = x_from
    energy: float
    length: float
    converged: bool = True
    iterations: int = 0


def metric_at(cert, x):
    """Metric M(x) = W(x)^-1, symmetrized after inversion."""
    x = np.asarray(x, dtype=float)
    return metric_from_w(cert.w_at(x), x=x)


def _metrics_on(cert, points):
    """Batch of M at the given (k, n) points with the same checks as metric_at."""
    W = cert.w_at(points)
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    eigs = np.linalg.eigvalsh(W)
    bad = np.flatnonzero(eigs[:, 0] <= 0.0)
    if bad.size:
        raise NonPositiveMetric(
            f"W has eigenvalue {eigs[bad[0], 0]:.3e} <= 0", x=points[bad[0]])
    cond = eigs[:, -1] / eigs[:, 0]
    bad = np.flatnonzero(cond > _COND_CAP)
    if bad.size:
        raise SingularMetric(
            f"W condition number {cond[bad[0]]:.3e} exceeds {_COND_CAP:.0e}",
            x=points[bad[0]])
    M = np.linalg.inv(W)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _nodes_of(x_from, deltas, delta_s):
    """All N+1 nodes of the running-sum path."""
    steps = np.cumsum(deltas * delta_s, axis=0)
    return np.vstack([x_from, x_from + steps])


def _energy_of(cert, x_from, deltas, delta_s):
    """(energy, nodes, W, M, quad) for the current rates."""
    nodes = _nodes_of(x_from, deltas, delta_s)
    W = cert.w_at(nodes[1:])
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    eigs = np.linalg.eigvalsh(W)
    bad = np.flatnonzero(eigs[:, 0] <= 0.0)
    if bad.size:
        raise NonPositiveMetric(
            f"W has eigenvalue {eigs[bad[0], 0]:.3e} <= 0", x=nodes[1 + bad[0]])
    cond = eigs[:, -1] / eigs[:, 0]
    bad = np.flatnonzero(cond > _COND_CAP)
    if bad.size:
        raise SingularMetric(
            f"W condition number {cond[bad[0]]:.3e} exceeds {_COND_CAP:.0e}",
            x=nodes[1 + bad[0]])
    M = np.linalg.inv(W)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    quad = np.einsum("ia,iab,ib->i", deltas, M, deltas)
    return float(np.sum(quad) * delta_s), nodes, W, M, quad


def _gradient(cert, deltas, nodes, M, delta_s):
    """dE/dd including the metric's dependence on upstream rates.

    With v_i = M(x_i) d_i and dM/dx_c = -M (dW/dx_c) M, the derivative of
    the i-th term with respect to any rate d_p, p <= i, picks up
    -(v_i' dW/dx_c(x_i) v_i) per coordinate c, scaled by delta_s^2.
    """
    v = np.einsum("iab,ib->ia", M, deltas)
    dW = cert.dw_at(nodes[1:])                    # (N, n, n, n), axis 1 = c
    q = -np.einsum("ia,icab,ib->ic", v, dW, v)    # (N, n)
    tail = np.cumsum(q[::-1], axis=0)[::-1]       # tail[p] = sum_{i >= p} q_i
    return 2.0 * delta_s * v + delta_s ** 2 * tail


def _project(g):
    """Orthogonal projection onto the zero-sum tangent space."""
    return g - g.mean(axis=0)


def compute_geodesic(cert, x_from, x_to, n_segments, max_iters=500, tol=1e-8):
    """Minimize the discretized path energy between two states.

    Returns a first-order stationary point (projected-gradient norm at or
    below ``tol``); if the iteration budget runs out first, the best
    point found is returned with ``converged=False``.
    """
    x_from = np.asarray(x_from, dtype=float)
    x_to = np.asarray(x_to, dtype=float)
    n = cert.template.n
    if x_from.shape != (n,) or x_to.shape != (n,):
        raise ValueError(f"endpoints must have shape ({n},)")
    if n_segments < 1:
        raise ValueError("need at least one segment")
    N = int(n_segments)
    delta_s = 1.0 / N

    if np.array_equal(x_from, x_to):
        deltas = np.zeros((N, n))
        nodes = np.tile(x_from, (N + 1, 1))
        _metrics_on(cert, nodes[1:])  # still validate the metric here
        return GeodesicPath(x_from, x_to, N, delta_s, deltas, nodes,
                            energy=0.0, length=0.0, converged=True,
                            iterations=0)

    deltas = np.tile(x_to - x_from, (N, 1))
    energy, nodes, W, M, _ = _energy_of(cert, x_from, deltas, delta_s)
    converged = False
    iterations = 0

    floor = 1e-10 * (1.0 + abs(energy))

    for iterations in range(1, max_iters + 1):
        gp = _project(_gradient(cert, deltas, nodes, M, delta_s))
        gnorm = float(np.linalg.norm(gp))
        if gnorm <= tol:
            converged = True
            break

        # Steepest descent in the W-weighted inner product, computed from
        # the already-projected gradient so the huge common component of
        # the raw gradient cannot swamp the small residual through
        # cancellation.  Per-node W(x_i) undoes the metric's anisotropy;
        # the multiplier lam returns the step to the zero-sum tangent
        # space (sum_i dir_i = 0).
        pg = np.einsum("iab,ib->ia", W, gp)
        lam = np.linalg.solve(W.sum(axis=0), pg.sum(axis=0))
        direction = pg - np.einsum("iab,b->ia", W, lam)
        direction -= direction.mean(axis=0)
        slope = float(np.sum(gp * direction))
        if slope <= 0.0:
            converged = gnorm <= max(tol, floor)
            break
        # Exact step for the frozen-metric quadratic model.
        curv = 2.0 * delta_s * float(
            np.einsum("ia,iab,ib->", direction, M, direction))
        alpha = slope / curv if curv > 0.0 else 1.0

        accepted = False
        for _ in range(60):
            trial = deltas - alpha * direction
            t_energy, t_nodes, t_W, t_M, _ = _energy_of(
                cert, x_from, trial, delta_s)
            if t_energy <= energy - 1e-4 * alpha * slope:
                deltas, energy, nodes, W, M = trial, t_energy, t_nodes, t_W, t_M
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # No descent at any step length: stationary to working precision.
            converged = gnorm <= max(tol, floor)
            break

    # Re-pin the endpoint sum exactly and refresh the summary quantities.
    drift = (x_to - x_from) - deltas.sum(axis=0) * delta_s
    deltas = deltas + drift / (N * delta_s)
    energy, nodes, W, M, quad = _energy_of(cert, x_from, deltas, delta_s)
    length = float(np.sum(np.sqrt(np.maximum(quad, 0.0))) * delta_s)
    return GeodesicPath(x_from, x_to, N, delta_s, deltas, nodes,
                        energy=energy, length=length, converged=converged,
                        iterations=iterations)


def path_energy(path, cert):
    """Recompute (energy, length) of a stored path under a certificate."""
    deltas = np.asarray(path.deltas, dtype=float)
    nodes = np.asarray(path.nodes, dtype=float)
    M = _metrics_on(cert, nodes[1:])
    quad = np.einsum("ia,iab,ib->i", deltas, M, deltas)
    energy = float(np.sum(quad) * path.delta_s)
    length = float(np.sum(np.sqrt(np.maximum(quad, 0.0))) * path.delta_s)
    return energy, length


def save_path_csv(path, cert, dest):
    """Write the path as CSV rows: s, node, rate, segment energy."""
    M = _metrics_on(cert, path.nodes[1:])
    quad = np.einsum("ia,iab,ib->i", path.deltas, M, path.deltas)
    n = path.nodes.shape[1]
    header = (["s"] + [f"x{c + 1}" for c in range(n)]
              + [f"dx{c + 1}" for c in range(n)] + ["segment_energy"])
    lines = [",".join(header)]
    for i in range(path.n_segments):
        row = [(i + 1) * path.delta_s, *path.nodes[i + 1], *path.deltas[i],
               quad[i] * path.delta_s]
        lines.append(",".join(f"{v:.17g}" for v in row))
    text = "\n".join(lines) + "\n"
    with open(dest, "w", encoding="utf-8") as fh:
        fh.write(text)
