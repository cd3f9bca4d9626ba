"""Dense semidefinite programming in linear-matrix-inequality form.

Solves  min c'y  subject to  F0_j + sum_i y_i F_ij  >= 0  for every block j,
optionally with linear equalities A y = b.  The built-in solver is a
primal-dual interior-point method of the usual predictor-corrector kind:

  * search directions from the Schur complement
        M_ik = 1/2 tr(F_i (S^-1 F_k X + X F_k S^-1)),
    which keeps M symmetric positive definite for X, S > 0;
  * Mehrotra centering: an affine predictor step sets
        sigma = (gap_aff / gap)^3,
    then the corrector re-solves with the centering and second-order terms;
  * step lengths from the generalized eigenvalue problem dX v = lambda X v,
    cut back by a fixed fraction to stay inside the cone.

Equality constraints are eliminated up front: a particular solution comes
from least squares and the residual freedom is reparametrized through an
orthonormal null-space basis, so the core method only ever sees the
unconstrained LMI form.

Infeasibility is reported on either of two signals: a Farkas certificate
(the primal iterate X, normalized, annihilates every F_i while pairing
negatively with F0) or a dual residual that stalls above tolerance for 50
consecutive iterations.

The module is deliberately dense-matrix-based and refuses problems beyond
a size cap; pass ``solver="cvxpy"`` in SdpOptions to route the same
problem description to an external conic solver instead.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import SolverCapacityError

__all__ = [
    "SdpStatus",
    "LmiBlock",
    "SdpProblem",
    "SdpOptions",
    "SdpSolution",
    "solve_sdp",
    "psd_check",
    "dump_problem",
    "load_problem",
]


class SdpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class LmiBlock:
    """One constraint block F0 + sum_i y_i F_i >= 0.

    ``fs`` holds one matrix per decision variable; entries may be dense
    arrays or scipy.sparse matrices (sparse is densified by the built-in
    solver, subject to its capacity cap).
    """

    f0: np.ndarray
    fs: list

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=float)
        if self.f0.ndim != 2 or self.f0.shape[0] != self.f0.shape[1]:
            raise ValueError("f0 must be square")
        d = self.f0.shape[0]
        if np.max(np.abs(self.f0 - self.f0.T), initial=0.0) > 1e-9 * (1 + np.abs(self.f0).max(initial=0.0)):
            raise ValueError("f0 must be symmetric")
        for i, F in enumerate(self.fs):
            if F.shape != (d, d):
                raise ValueError(f"fs[{i}] has shape {F.shape}, expected {(d, d)}")

    @property
    def dim(self):
        return self.f0.shape[0]


@dataclass
class SdpProblem:
    num_vars: int
    objective: np.ndarray
    blocks: list
    equalities: tuple | None = None  # (A, b) with A of shape (p, num_vars)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        if self.objective.shape[0] != self.num_vars:
            raise ValueError("objective length must equal num_vars")
        if not self.blocks:
            raise ValueError("need at least one LMI block")
        for blk in self.blocks:
            if len(blk.fs) != self.num_vars:
                raise ValueError("every block needs one coefficient matrix per variable")
        if self.equalities is not None:
            A, b = self.equalities
            if not scipy.sparse.issparse(A):
                A = np.asarray(A, dtype=float)
            b = np.asarray(b, dtype=float).ravel()
            if A.ndim != 2 or A.shape != (b.shape[0], self.num_vars):
                raise ValueError("equalities must be (A, b) with A of shape (p, num_vars)")
            self.equalities = (A, b)


@dataclass
class SdpOptions:
    feas_tol: float = 1e-7
    gap_tol: float = 1e-7
    max_iters: int = 200
    solver: str = "reference"
    step_fraction: float = 0.97
    stall_iters: int = 50
    max_dense_entries: int = 200_000_000  # cap on num_vars * sum(d_j^2)
    verbose: bool = False


@dataclass
class SdpSolution:
    status: SdpStatus
    y: np.ndarray
    objective_value: float
    min_block_eigenvalue: float
    iterations: int
    eq_residual: float = 0.0
    message: str = ""

    @property
    def optimal(self):
        return self.status is SdpStatus.OPTIMAL


def psd_check(S, tol=0.0):
    """(is_psd, lambda_min) for a symmetric matrix; rejects asymmetric input."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("expected a square matrix")
    scale = np.abs(S).max(initial=0.0)
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-9 * (1.0 + scale):
        raise ValueError("matrix is not symmetric")
    lam = float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])
    return lam >= -tol, lam


# --------------------------------------------------------------------- helpers


def _densify(block, num_vars):
    """Stack a block's coefficient matrices into one (num_vars, d, d) tensor."""
    d = block.dim
    F = np.empty((num_vars, d, d))
    for i, Fi in enumerate(block.fs):
        F[i] = Fi.toarray() if scipy.sparse.issparse(Fi) else np.asarray(Fi, dtype=float)
        F[i] = 0.5 * (F[i] + F[i].T)
    return F


def _step_to_boundary(P, dP):
    """Largest alpha with P + alpha dP >= 0, for P > 0 (may be inf)."""
    if P.shape[0] == 1:
        p, dp = P[0, 0], dP[0, 0]
        return np.inf if dp >= 0 else -p / dp
    try:
        lam_min = scipy.linalg.eigh(dP, P, eigvals_only=True,
                                    subset_by_index=[0, 0])[0]
    except scipy.linalg.LinAlgError:
        return 0.0
    if lam_min >= -1e-14:
        return np.inf
    return -1.0 / lam_min


def _min_eig_at(blocks_dense, y):
    """Smallest eigenvalue of F0 + sum_i y_i F_i across all blocks."""
    worst = np.inf
    for F0, F in blocks_dense:
        Sy = F0 + np.tensordot(y, F, axes=([0], [0]))
        worst = min(worst, float(np.linalg.eigvalsh(0.5 * (Sy + Sy.T))[0]))
    return worst


def solve_sdp(problem, options=None):
    options = options or SdpOptions()
    if options.solver == "reference":
        return _solve_reference(problem, options)
    if options.solver.startswith("cvxpy"):
        from . import _cvxpy_backend

        return _cvxpy_backend.solve(problem, options)
    raise ValueError(f"unknown solver {options.solver!r}")


# --------------------------------------------------------------- reference IPM


def _solve_reference(problem, options):
    c_full = problem.objective
    n_full = problem.num_vars

    entries = n_full * sum(b.dim ** 2 for b in problem.blocks)
    if entries > options.max_dense_entries:
        raise SolverCapacityError(
            f"problem needs {entries} dense coefficient entries, cap is "
            f"{options.max_dense_entries}; use SdpOptions(solver='cvxpy')"
        )

    blocks_full = [(0.5 * (B.f0 + B.f0.T), _densify(B, n_full)) for B in problem.blocks]

    # ---- eliminate equalities: y = y0 + N t with N orthonormal null basis
    if problem.equalities is not None and problem.equalities[0].shape[0] > 0:
        A, b = problem.equalities
        if scipy.sparse.issparse(A):
            A = A.toarray()
        y0, *_ = np.linalg.lstsq(A, b, rcond=None)
        if np.max(np.abs(A @ y0 - b), initial=0.0) > 1e-8 * (1.0 + np.abs(b).max(initial=0.0)):
            return SdpSolution(
                status=SdpStatus.INFEASIBLE, y=y0, objective_value=float(c_full @ y0),
                min_block_eigenvalue=_min_eig_at(blocks_full, y0), iterations=0,
                eq_residual=float(np.max(np.abs(A @ y0 - b))),
                message="equality constraints are inconsistent",
            )
        N = scipy.linalg.null_space(A)
    else:
        A = None
        y0 = np.zeros(n_full)
        N = np.eye(n_full)

    def finish(t, status, iters, message=""):
        y = y0 + N @ t if N.shape[1] else y0.copy()
        eq_res = 0.0
        if A is not None:
            eq_res = float(np.max(np.abs(A @ y - problem.equalities[1]), initial=0.0))
        return SdpSolution(
            status=status, y=y, objective_value=float(c_full @ y),
            min_block_eigenvalue=_min_eig_at(blocks_full, y),
            iterations=iters, eq_residual=eq_res, message=message,
        )

    # ---- reduced problem data
    blocks = []
    for F0, F in blocks_full:
        F0r = F0 + np.tensordot(y0, F, axes=([0], [0]))
        Fr = np.tensordot(N, F, axes=([0], [0])) if N.shape[1] else np.zeros((0,) + F0.shape)
        blocks.append((0.5 * (F0r + F0r.T), Fr))
    c = N.T @ c_full

    n_y = N.shape[1]
    if n_y == 0:
        lam = _min_eig_at([(F0r, Fr) for F0r, Fr in blocks], np.zeros(0))
        status = SdpStatus.OPTIMAL if lam >= -options.feas_tol else SdpStatus.INFEASIBLE
        return finish(np.zeros(0), status,
                      0, "fully determined by equality constraints")

    # ---- drop variables that touch no block
    norms = np.zeros(n_y)
    for _, F in blocks:
        norms += np.sqrt(np.einsum("iab,iab->i", F, F))
    active = norms > 0.0
    if not active.all():
        if np.any(np.abs(c[~active]) > 1e-12 * (1.0 + np.abs(c).max(initial=0.0))):
            return finish(np.zeros(n_y), SdpStatus.NUMERICAL_FAILURE, 0,
                          "objective is unbounded along an unconstrained variable")
        idx = np.flatnonzero(active)
        blocks = [(F0r, Fr[idx]) for F0r, Fr in blocks]
        c_red = c[idx]
    else:
        idx = np.arange(n_y)
        c_red = c

    t_red, status, iters, msg = _ipm(blocks, c_red, options)
    t = np.zeros(n_y)
    t[idx] = t_red
    return finish(t, status, iters, msg)


def _ipm(blocks, c, options):
    """Core predictor-corrector loop on min c't s.t. F0_j + sum F_ij t_i >= 0."""
    n = c.shape[0]
    dims = [F0.shape[0] for F0, _ in blocks]
    total_dim = sum(dims)

    f0_scale = max(max(np.linalg.norm(F0) for F0, _ in blocks), 1e-12)
    f_scale = max(max(np.sqrt(np.einsum("iab,iab->i", F, F)).max(initial=0.0)
                      for _, F in blocks), 1e-12)

    s0 = max(10.0, 1.5 * f0_scale, 1.5 * f_scale, np.abs(c).max(initial=0.0))
    y = np.zeros(n)
    X = [s0 * np.eye(d) for d in dims]
    S = [s0 * np.eye(d) for d in dims]

    F_flat = [F.reshape(n, -1) for _, F in blocks]

    best_rd = np.inf
    stall = 0
    # best dual-feasible iterate, kept as a fallback: problems with an
    # unbounded optimal face (e.g. a capped objective) can diverge after
    # effectively converging
    best = None
    rp_min = np.inf

    def finish_with_best(reason):
        y_b, gap_b = best
        if gap_b <= 1e3 * options.gap_tol:
            return y_b, SdpStatus.OPTIMAL, it, (
                f"{reason}; returned best iterate, relative gap {gap_b:.1e}")
        return y_b, SdpStatus.MAX_ITERATIONS, it, (
            f"{reason}; best iterate only reached relative gap {gap_b:.1e}")

    for it in range(1, options.max_iters + 1):
        Sinv, Rd, rd_norm = [], [], 0.0
        for j, (F0, F) in enumerate(blocks):
            Sy = F0 + np.tensordot(y, F, axes=([0], [0]))
            R = Sy - S[j]
            Rd.append(R)
            rd_norm = max(rd_norm, np.linalg.norm(R))
            try:
                L = scipy.linalg.cho_factor(S[j], lower=True, check_finite=False)
                Sinv.append(scipy.linalg.cho_solve(L, np.eye(dims[j]), check_finite=False))
            except scipy.linalg.LinAlgError:
                return y, SdpStatus.NUMERICAL_FAILURE, it, "dual slack lost positive definiteness"

        aX = np.zeros(n)
        for j in range(len(blocks)):
            aX += F_flat[j] @ X[j].ravel()
        rp = c - aX
        gap = sum(float(np.sum(X[j] * S[j])) for j in range(len(blocks)))
        mu = gap / total_dim

        p_obj = float(c @ y)
        d_obj = -sum(float(np.sum(F0 * X[j])) for j, (F0, _) in enumerate(blocks))
        rel_gap = gap / (1.0 + abs(p_obj) + abs(d_obj))
        rp_norm = np.abs(rp).max(initial=0.0) / (1.0 + np.abs(c).max(initial=0.0))

        if not np.isfinite(gap) or not np.isfinite(rd_norm):
            if best is not None:
                return finish_with_best("iterates diverged")
            return y, SdpStatus.NUMERICAL_FAILURE, it, "iterates diverged"

        if rd_norm <= options.feas_tol and rp_norm <= options.feas_tol and rel_gap <= options.gap_tol:
            return y, SdpStatus.OPTIMAL, it, ""

        if rd_norm <= options.feas_tol and (best is None or rel_gap < best[1]):
            best = (y.copy(), rel_gap)
        rp_min = min(rp_min, rp_norm)
        if best is not None and rp_norm > 1e4 * max(rp_min, options.feas_tol):
            return finish_with_best("primal residual diverged after dual convergence")

        # Farkas-style certificate of infeasibility carried by the primal iterate
        trX = sum(float(np.trace(X[j])) for j in range(len(blocks)))
        if trX > 0:
            a_res = np.abs(aX).max(initial=0.0) / (trX * f_scale)
            f0_pair = sum(float(np.sum(F0 * X[j])) for j, (F0, _) in enumerate(blocks)) / (trX * f0_scale)
            if a_res <= 1e-9 and f0_pair <= -1e-7:
                return y, SdpStatus.INFEASIBLE, it, "Farkas certificate found"

        if rd_norm > options.feas_tol:
            if rd_norm < 0.99 * best_rd:
                best_rd, stall = rd_norm, 0
            else:
                stall += 1
                if stall >= options.stall_iters:
                    return y, SdpStatus.INFEASIBLE, it, (
                        f"dual residual stalled at {rd_norm:.2e} for {stall} iterations")
        else:
            best_rd, stall = min(best_rd, rd_norm), 0

        # Schur complement, shared by predictor and corrector
        M = np.zeros((n, n))
        XFS = []
        for j in range(len(blocks)):
            _, F = blocks[j]
            G = np.matmul(np.matmul(X[j], F), Sinv[j])  # G_k = X F_k S^-1
            XFS.append(G)
            P = F_flat[j] @ G.reshape(n, -1).T
            M += 0.5 * (P + P.T)

        try:
            ridge = 1e-13 * (1.0 + np.trace(M) / n)
            Mf = scipy.linalg.cho_factor(M + ridge * np.eye(n), check_finite=False)
            solve_M = lambda rhs: scipy.linalg.cho_solve(Mf, rhs, check_finite=False)
        except scipy.linalg.LinAlgError:
            try:
                ridge = 1e-8 * (1.0 + np.trace(M) / n)
                Mf = scipy.linalg.cho_factor(M + ridge * np.eye(n), check_finite=False)
                solve_M = lambda rhs: scipy.linalg.cho_solve(Mf, rhs, check_finite=False)
            except scipy.linalg.LinAlgError:
                solve_M = lambda rhs: np.linalg.lstsq(M, rhs, rcond=None)[0]

        def directions(sigma_mu, second_order):
            rhs = -rp.copy()
            Z = []
            for j in range(len(blocks)):
                _, F = blocks[j]
                W = X[j] @ Rd[j]
                if second_order is not None:
                    W = W + second_order[j]
                W = W @ Sinv[j]
                Zj = -X[j] - 0.5 * (W + W.T)
                if sigma_mu > 0.0:
                    Zj = Zj + sigma_mu * Sinv[j]
                Z.append(Zj)
                rhs += F_flat[j] @ Zj.ravel()
            dy = solve_M(rhs)
            dS, dX = [], []
            for j in range(len(blocks)):
                _, F = blocks[j]
                Fdy = np.tensordot(dy, F, axes=([0], [0]))
                dS.append(Rd[j] + Fdy)
                V = np.tensordot(dy, XFS[j], axes=([0], [0]))
                dXj = Z[j] - 0.5 * (V + V.T)
                dX.append(0.5 * (dXj + dXj.T))
            return dy, dX, dS

        def step_lengths(dX, dS):
            ap = ad = 1.0
            for j in range(len(blocks)):
                ap = min(ap, options.step_fraction * _step_to_boundary(X[j], dX[j]))
                ad = min(ad, options.step_fraction * _step_to_boundary(S[j], dS[j]))
            return min(ap, 1.0), min(ad, 1.0)

        dy_p, dX_p, dS_p = directions(0.0, None)
        ap, ad = step_lengths(dX_p, dS_p)
        gap_aff = sum(
            float(np.sum((X[j] + ap * dX_p[j]) * (S[j] + ad * dS_p[j])))
            for j in range(len(blocks))
        )
        sigma = min(1.0, max(1e-10, (max(gap_aff, 0.0) / gap) ** 3))

        second = [dX_p[j] @ dS_p[j] for j in range(len(blocks))]
        dy, dX, dS = directions(sigma * mu, second)
        ap, ad = step_lengths(dX, dS)

        if max(ap, ad) < 1e-13:
            if best is not None:
                return finish_with_best("step length collapsed")
            return y, SdpStatus.NUMERICAL_FAILURE, it, "step length collapsed"

        y = y + ad * dy
        for j in range(len(blocks)):
            X[j] = 0.5 * ((X[j] + ap * dX[j]) + (X[j] + ap * dX[j]).T)
            S[j] = 0.5 * ((S[j] + ad * dS[j]) + (S[j] + ad * dS[j]).T)

        if options.verbose:
            print(f"  it {it:3d}  mu {mu:9.2e}  rd {rd_norm:9.2e}  rp {rp_norm:9.2e} "
                  f" gap {rel_gap:9.2e}  obj {p_obj:+.6e}")

    it = options.max_iters
    if best is not None:
        return finish_with_best("iteration limit reached")
    return y, SdpStatus.MAX_ITERATIONS, options.max_iters, "iteration limit reached"


# ----------------------------------------------------------------- debug dumps


def dump_problem(problem, path):
    """Write the full problem data as JSON for offline inspection."""

    def mat(F):
        if scipy.sparse.issparse(F):
            F = F.toarray()
        return np.asarray(F, dtype=float).tolist()

    obj = {
        "num_vars": problem.num_vars,
        "objective": problem.objective.tolist(),
        "blocks": [{"f0": mat(b.f0), "fs": [mat(F) for F in b.fs]} for b in problem.blocks],
    }
    if problem.equalities is not None:
        A, b = problem.equalities
        if scipy.sparse.issparse(A):
            A = A.toarray()
        obj["equalities"] = {"a": A.tolist(), "b": b.tolist()}
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_problem(path):
    with open(path) as fh:
        obj = json.load(fh)
    blocks = [
        LmiBlock(np.array(b["f0"]), [np.array(F) for F in b["fs"]])
        for b in obj["blocks"]
    ]
    eqs = None
    if "equalities" in obj:
        eqs = (np.array(obj["equalities"]["a"]), np.array(obj["equalities"]["b"]))
    return SdpProblem(num_vars=obj["num_vars"], objective=np.array(obj["objective"]),
                      blocks=blocks, equalities=eqs)
