"""Optional conic-solver backend (requires cvxpy).

Routes the same LMI-form problem to an external SDP solver.  Used for
problem sizes beyond the built-in dense method and as an independent
cross-check of it in the test suite.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse

from .errors import SolverFailure
from .sdpcore import SdpSolution, SdpStatus


def _vec_columns(block, num_vars):
    """Sparse (d*d, num_vars) matrix whose column i is vec(F_i)."""
    cols = []
    for F in block.fs:
        if scipy.sparse.issparse(F):
            cols.append(F.tocoo().reshape((F.shape[0] * F.shape[1], 1)))
        else:
            cols.append(scipy.sparse.coo_matrix(np.asarray(F, dtype=float).reshape(-1, 1)))
    return scipy.sparse.hstack(cols, format="csc")


def solve(problem, options):
    try:
        import cvxpy as cp
    except ImportError as exc:
        raise SolverFailure(
            "solver='cvxpy' requested but cvxpy is not installed "
            "(pip install dccmkit[altsolver])") from exc

    name = options.solver.split(":", 1)
    preferred = name[1].upper() if len(name) == 2 else None

    y = cp.Variable(problem.num_vars)
    constraints = []
    for block in problem.blocks:
        d = block.dim
        Fm = _vec_columns(block, problem.num_vars)
        expr = cp.reshape(Fm @ y, (d, d), order="C") + block.f0
        constraints.append((expr + expr.T) / 2 >> 0)
    if problem.equalities is not None:
        A, b = problem.equalities
        if A.shape[0] > 0:
            constraints.append(A @ y == b)

    objective = cp.Minimize(problem.objective @ y)
    prob = cp.Problem(objective, constraints)

    candidates = [preferred] if preferred else ["CLARABEL", "SCS"]
    last_error = None
    for solver_name in candidates:
        if solver_name not in cp.installed_solvers():
            continue
        try:
            kwargs = {}
            if solver_name == "SCS":
                kwargs = {"eps": min(options.feas_tol, options.gap_tol) * 0.1,
                          "max_iters": max(10_000, options.max_iters)}
            prob.solve(solver=solver_name, **kwargs)
        except cp.error.SolverError as exc:
            last_error = exc
            continue
        if prob.status is not None:
            break
    else:
        raise SolverFailure(f"no usable cvxpy solver: {last_error}")

    status_map = {
        "optimal": SdpStatus.OPTIMAL,
        "optimal_inaccurate": SdpStatus.MAX_ITERATIONS,
        "infeasible": SdpStatus.INFEASIBLE,
        "infeasible_inaccurate": SdpStatus.INFEASIBLE,
        "unbounded": SdpStatus.NUMERICAL_FAILURE,
        "unbounded_inaccurate": SdpStatus.NUMERICAL_FAILURE,
    }
    status = status_map.get(prob.status, SdpStatus.NUMERICAL_FAILURE)

    if y.value is None:
        yv = np.zeros(problem.num_vars)
        obj = float("nan")
        min_eig = float("nan")
    else:
        yv = np.asarray(y.value, dtype=float).ravel()
        obj = float(problem.objective @ yv)
        min_eig = np.inf
        for block in problem.blocks:
            Fm = _vec_columns(block, problem.num_vars)
            Sy = np.asarray(Fm @ yv).reshape(block.dim, block.dim) + block.f0
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (Sy + Sy.T))[0]))

    eq_res = 0.0
    if problem.equalities is not None and y.value is not None:
        A, b = problem.equalities
        if A.shape[0] > 0:
            eq_res = float(np.max(np.abs(A @ yv - b), initial=0.0))

    return SdpSolution(
        status=status, y=yv, objective_value=obj, min_block_eigenvalue=min_eig,
        iterations=int(prob.solver_stats.num_iters or 0) if prob.solver_stats else 0,
        eq_residual=eq_res, message=f"cvxpy status: {prob.status}",
    )
