"""Closed-loop rollout, grid-based certificate verification, and the
reactor benchmark schedule.

The simulator replays the plant exactly as logged (no hidden state), the
verifier scans a box grid with two independent formulations of the
contraction condition, and both report enough to audit every number
downstream.
"""

from dataclasses import dataclass, field

import numpy as np

from .ctrl import control_input
from .errors import DccmError, SimulationAborted
from .jsonutil import JsonCursor
from .sysmodel import Box

_STEADY_TOL = 1e-9


@dataclass
class ScheduleSegment:
    start_step: int
    x_star: np.ndarray
    u_star: np.ndarray


class ReferenceSchedule:
    """Piecewise-constant reference, switching at given step indices.

    Segments must be ordered by start_step with the first at step 0.
    Each (x_star, u_star) pair is required to be a steady state of the
    plant; ``validate`` checks that to 1e-9 and the file loader runs it
    automatically when given the system.
    """

    def __init__(self, segments, total_steps):
        self.segments = [ScheduleSegment(int(s.start_step),
                                         np.asarray(s.x_star, dtype=float),
                                         np.asarray(s.u_star, dtype=float))
                         if isinstance(s, ScheduleSegment)
                         else ScheduleSegment(int(s[0]),
                                              np.asarray(s[1], dtype=float),
                                              np.asarray(s[2], dtype=float))
                         for s in segments]
        self.total_steps = int(total_steps)
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        starts = [s.start_step for s in self.segments]
        if starts[0] != 0:
            raise ValueError("first segment must start at step 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segments must be strictly ordered by start_step")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        self._starts = np.array(starts)

    def steady_state_residuals(self, sys):
        """Per-segment residual of x* against step(sys, x*, u*)."""
        return [float(np.abs(sys.step(s.x_star, s.u_star) - s.x_star).max())
                for s in self.segments]

    def validate(self, sys):
        for i, res in enumerate(self.steady_state_residuals(sys)):
            if not res <= _STEADY_TOL:
                raise ValueError(
                    f"segment {i} reference is not a steady state: "
                    f"residual {res:.3e} exceeds {_STEADY_TOL:.0e}")

    def reference_at(self, k):
        """Active (x_star, u_star) at step k."""
        idx = int(np.searchsorted(self._starts, k, side="right")) - 1
        seg = self.segments[max(idx, 0)]
        return seg.x_star, seg.u_star

    def switch_steps(self):
        return [s.start_step for s in self.segments]


def cstr_schedule(total_steps=100):
    """The benchmark reference: three setpoints over 100 steps."""
    return ReferenceSchedule([
        (0, [0.0, 0.0], [0.0]),
        (33, [1.0, 1.0], [0.0]),
        (66, [0.5, 0.5], [-0.025]),
    ], total_steps)


def schedule_from_dict(obj, sys=None, path="<dict>"):
    return _schedule_from_cursor(JsonCursor(obj, path), sys)


def load_schedule(path, sys=None):
    return _schedule_from_cursor(JsonCursor.load(path), sys)


def _schedule_from_cursor(cur, sys):
    seg_cur = cur.child("segments")
    items = seg_cur.items()
    if not items:
        seg_cur.fail("expected at least one segment")
    segments = []
    for item in items:
        segments.append((
            item.child("start_step").as_int(),
            item.child("x_star").as_float_list(),
            item.child("u_star").as_float_list(),
        ))
    total = cur.child("total_steps").as_int()
    try:
        sched = ReferenceSchedule(segments, total)
    except ValueError as exc:
        seg_cur.fail(str(exc))
    if sys is not None:
        for i, res in enumerate(sched.steady_state_residuals(sys)):
            if not res <= _STEADY_TOL:
                seg_cur.child(i).fail(
                    f"reference is not a steady state of the system: "
                    f"residual {res:.3e} exceeds {_STEADY_TOL:.0e}")
    return sched


def schedule_to_dict(sched):
    return {
        "segments": [
            {"start_step": s.start_step,
             "x_star": [float(v) for v in s.x_star],
             "u_star": [float(v) for v in s.u_star]}
            for s in sched.segments
        ],
        "total_steps": sched.total_steps,
    }


# ------------------------------------------------------------------ simulation


@dataclass
class TrajectoryLog:
    """Everything the closed loop did, one row per step.

    ``x[k]`` is the state the controller saw at step k and ``u[k]`` the
    input it applied; ``final_state`` is the state after the last step,
    so the whole rollout can be replayed through the plant exactly.
    ``geodesics[k]`` keeps the path behind ``energy[k]`` and
    ``length[k]`` for independent recomputation.
    """

    x: np.ndarray
    u: np.ndarray
    x_star: np.ndarray
    u_star: np.ndarray
    energy: np.ndarray
    length: np.ndarray
    iterations: np.ndarray
    final_state: np.ndarray
    geodesics: list = field(default_factory=list, repr=False)

    @property
    def num_steps(self):
        return self.x.shape[0]

    def replay_residual(self, sys):
        """Max deviation between logged successors and the plant map."""
        succ = np.vstack([self.x[1:], self.final_state[None, :]])
        stepped = sys.step(self.x, self.u)
        return float(np.abs(succ - stepped).max())

    def tracking_error(self):
        """Per-step max-norm state tracking error."""
        return np.abs(self.x - self.x_star).max(axis=1)

    def to_csv_text(self):
        n = self.x.shape[1]
        m = self.u.shape[1]
        header = (["k"] + [f"x{i + 1}" for i in range(n)]
                  + [f"u{j + 1}" for j in range(m)]
                  + [f"x{i + 1}_star" for i in range(n)]
                  + [f"u{j + 1}_star" for j in range(m)]
                  + ["energy", "length"])
        lines = [",".join(header)]
        for k in range(self.num_steps):
            vals = [*self.x[k], *self.u[k], *self.x_star[k], *self.u_star[k],
                    self.energy[k], self.length[k]]
            lines.append(str(k) + "," + ",".join(f"{v:.17g}" for v in vals))
        return "\n".join(lines) + "\n"

    def save_csv(self, dest):
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())


def simulate(sys, cert, schedule, x0=None, n_geo=30, gain_at_state=False):
    """Roll the tracking controller forward for the whole schedule.

    Runs control_input at each step with the active reference, applies
    the plant map, and logs states, inputs, references, and geodesic
    summaries.  Deterministic given its inputs.  A metric or geodesic
    failure mid-run raises SimulationAborted carrying the step index and
    the rows logged so far.
    """
    schedule.validate(sys)
    x = (np.array(schedule.segments[0].x_star, dtype=float) if x0 is None
         else np.asarray(x0, dtype=float))
    if x.shape != (sys.n,):
        raise ValueError(f"x0 must have shape ({sys.n},)")
    steps = schedule.total_steps
    xs_log = np.zeros((steps, sys.n))
    u_log = np.zeros((steps, sys.m))
    ref_x = np.zeros((steps, sys.n))
    ref_u = np.zeros((steps, sys.m))
    energy = np.zeros(steps)
    length = np.zeros(steps)
    iters = np.zeros(steps, dtype=int)
    paths = []

    def partial(k):
        return TrajectoryLog(xs_log[:k].copy(), u_log[:k].copy(),
                             ref_x[:k].copy(), ref_u[:k].copy(),
                             energy[:k].copy(), length[:k].copy(),
                             iters[:k].copy(), x.copy(), paths[:k])

    for k in range(steps):
        x_star, u_star = schedule.reference_at(k)
        try:
            dec = control_input(cert, sys, x, x_star, u_star, n_geo,
                                gain_at_state=gain_at_state)
        except DccmError as exc:
            raise SimulationAborted(k, partial(k), exc) from exc
        xs_log[k] = x
        u_log[k] = dec.u
        ref_x[k] = x_star
        ref_u[k] = u_star
        energy[k] = dec.geodesic.energy
        length[k] = dec.geodesic.length
        iters[k] = dec.geodesic.iterations
        paths.append(dec.geodesic)
        x = sys.step(x, dec.u)

    return TrajectoryLog(xs_log, u_log, ref_x, ref_u, energy, length,
                         iters, x.copy(), paths)


# ------------------------------------------------------------------ verification


@dataclass
class VerificationReport:
    """Outcome of the grid scan of the contraction conditions.

    ``max_lemma_eig`` is the largest eigenvalue over the grid of the
    one-step differential contraction matrix (negative everywhere means
    the closed loop contracts); ``min_metric_eig`` and
    ``max_metric_eig`` bound the metric's eigenvalues over the state
    grid, estimating its uniform bounds.  ``sign_disagreements`` counts
    grid points where the eigenvalue test and the block-matrix test
    disagreed, which should never happen for a sound compilation.
    """

    state_box: Box
    input_box: Box
    resolution: int
    num_points: int
    max_lemma_eig: float
    min_metric_eig: float
    max_metric_eig: float
    metric_failures: int
    sign_disagreements: int
    passed: bool

    def to_dict(self):
        def _f(v):
            return float(v) if np.isfinite(v) else None
        return {
            "state_box": {"lo": [float(v) for v in self.state_box.lo],
                          "hi": [float(v) for v in self.state_box.hi]},
            "input_box": {"lo": [float(v) for v in self.input_box.lo],
                          "hi": [float(v) for v in self.input_box.hi]},
            "resolution": self.resolution,
            "num_points": self.num_points,
            "max_lemma_eig": _f(self.max_lemma_eig),
            "min_metric_eig": _f(self.min_metric_eig),
            "max_metric_eig": _f(self.max_metric_eig),
            "metric_failures": self.metric_failures,
            "sign_disagreements": self.sign_disagreements,
            "pass": bool(self.passed),
        }


def _grid(box, resolution):
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(box.lo, box.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def verify_contraction(sys, cert, box, u_box, resolution=21, cond_cap=1e12):
    """Scan the contraction conditions over a state-input grid.

    At every grid point the one-step condition is evaluated two ways:
    as the largest eigenvalue of the differential closed-loop test
    (needs the metric, so W is inverted) and as the smallest eigenvalue
    of the block matrix in the synthesis constraint (no inversion).
    The two must agree in sign everywhere; points where W cannot be
    soundly inverted are counted as failures and the scan continues.
    """
    beta = cert.template.beta
    n, m = sys.n, sys.m
    Xs = _grid(box, resolution)
    Us = _grid(u_box, resolution)
    px, pu = Xs.shape[0], Us.shape[0]

    Wx = cert.w_at(Xs)
    Wx = 0.5 * (Wx + np.transpose(Wx, (0, 2, 1)))
    lam_x = np.linalg.eigvalsh(Wx)
    ok_x = lam_x[:, 0] > 0.0
    cond_ok_x = ok_x & (lam_x[:, -1] <= cond_cap * np.maximum(lam_x[:, 0], 1e-300))

    # Metric eigenvalue bounds over the state grid.  Where W is positive
    # definite the metric eigenvalues are the reciprocals of W's; a
    # non-positive W eigenvalue is itself the honest "metric not
    # positive" witness.
    metric_min = np.where(ok_x, 1.0 / lam_x[:, -1], lam_x[:, 0])
    metric_max = np.where(ok_x, 1.0 / np.maximum(lam_x[:, 0], 1e-300), np.inf)
    min_metric = float(metric_min.min())
    max_metric = float(metric_max.max())

    Mx = np.zeros_like(Wx)
    Mx[cond_ok_x] = np.linalg.inv(Wx[cond_ok_x])
    Mx = 0.5 * (Mx + np.transpose(Mx, (0, 2, 1)))
    Lx = cert.l_at(Xs)
    Kx = np.einsum("pab,pbc->pac", Lx, Mx)
    Bx = sys.b_at(Xs)

    ix = np.repeat(np.arange(px), pu)
    iu = np.tile(np.arange(pu), px)
    XX = Xs[ix]
    UU = Us[iu]
    X_next = sys.step(XX, UU)
    W_next = cert.w_at(X_next)
    W_next = 0.5 * (W_next + np.transpose(W_next, (0, 2, 1)))
    lam_next = np.linalg.eigvalsh(W_next)
    ok_next = lam_next[:, 0] > 0.0
    cond_ok_next = ok_next & (
        lam_next[:, -1] <= cond_cap * np.maximum(lam_next[:, 0], 1e-300))

    A = sys.a_at(XX, UU)
    Acl = A + np.einsum("pab,pbc->pac", Bx[ix], Kx[ix])

    lemma_ok = cond_ok_x[ix] & cond_ok_next
    M_next = np.zeros_like(W_next)
    M_next[cond_ok_next] = np.linalg.inv(W_next[cond_ok_next])
    M_next = 0.5 * (M_next + np.transpose(M_next, (0, 2, 1)))
    V = (np.einsum("pba,pbc,pcd->pad", Acl, M_next, Acl)
         - (1.0 - beta) * Mx[ix])
    V = 0.5 * (V + np.transpose(V, (0, 2, 1)))
    lemma = np.where(lemma_ok, np.linalg.eigvalsh(V)[:, -1], np.inf)

    TR = (np.einsum("pab,pbc->pac", A, Wx[ix])
          + np.einsum("pab,pbc->pac", Bx[ix], Lx[ix]))
    omega = np.empty((px * pu, 2 * n, 2 * n))
    omega[:, :n, :n] = W_next
    omega[:, :n, n:] = TR
    omega[:, n:, :n] = np.transpose(TR, (0, 2, 1))
    omega[:, n:, n:] = (1.0 - beta) * Wx[ix]
    block_min = np.linalg.eigvalsh(omega)[:, 0]

    disagree = int(np.sum((lemma[lemma_ok] < 0.0)
                          != (block_min[lemma_ok] > 0.0)))
    failures = int(np.sum(~lemma_ok))
    max_lemma = float(lemma.max())
    passed = bool(failures == 0 and max_lemma < 0.0 and min_metric > 0.0)
    return VerificationReport(
        state_box=box, input_box=u_box, resolution=resolution,
        num_points=px * pu, max_lemma_eig=max_lemma,
        min_metric_eig=min_metric, max_metric_eig=max_metric,
        metric_failures=failures, sign_disagreements=disagree,
        passed=passed)
