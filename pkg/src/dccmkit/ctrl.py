"""Tracking controller built from a synthesized certificate.

The differential feedback gain K(x) = L(x) W(x)^-1 is integrated along
the geodesic that joins the current reference state to the plant state.
Because the certificate is a property of the plant alone, one synthesis
serves every reference trajectory the plant can follow; switching
targets needs no redesign.
"""

from dataclasses import dataclass

import numpy as np

from .geodesic import GeodesicPath, _metrics_on, compute_geodesic, metric_at


@dataclass
class ControlDecision:
    """Input chosen for one step, with the geodesic kept for audit.

    ``u == u_star + feedback_term`` holds exactly: ``u`` is constructed
    as that sum.  A zero-length geodesic gives a zero feedback term.
    """

    u: np.ndarray
    geodesic: GeodesicPath
    u_star: np.ndarray
    feedback_term: np.ndarray


def gain_at(cert, x):
    """Feedback gain K(x) = L(x) W(x)^-1, shape (m, n)."""
    return cert.l_at(x) @ metric_at(cert, x)


def control_input(cert, sys, x, x_star, u_star, n_segments,
                  gain_at_state=False, max_iters=500, tol=1e-8):
    """Input for the current step given the reference pair (x*, u*).

    A geodesic is computed from x_star (s = 0) to x (s = 1) and the
    feedback term accumulates K at each path node applied to that
    segment's displacement.  With ``gain_at_state=True`` the gain is
    instead evaluated once at the plant state x, which collapses the
    accumulation to K(x) (x - x_star).

    At x = x_star the geodesic is the zero path and u = u_star exactly.
    """
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    n, m = cert.template.n, cert.template.m
    if sys is not None and (sys.n, sys.m) != (n, m):
        raise ValueError(
            f"system is ({sys.n}, {sys.m}) but certificate is ({n}, {m})")
    if x.shape != (n,) or x_star.shape != (n,):
        raise ValueError(f"states must have shape ({n},)")
    if u_star.shape != (m,):
        raise ValueError(f"u_star must have shape ({m},)")

    path = compute_geodesic(cert, x_star, x, n_segments,
                            max_iters=max_iters, tol=tol)
    if gain_at_state:
        feedback = gain_at(cert, x) @ (path.deltas.sum(axis=0) * path.delta_s)
    else:
        nodes = path.nodes[1:]
        M = _metrics_on(cert, nodes)
        L = cert.l_at(nodes)
        feedback = path.delta_s * np.einsum(
            "iab,ibc,ic->a", L, M, path.deltas)
    return ControlDecision(u=u_star + feedback, geodesic=path,
                           u_star=u_star, feedback_term=feedback)
