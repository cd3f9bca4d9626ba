"""Metric and gain synthesis for discrete-time contraction control.

The object being searched for is a pair of polynomial matrix functions
(W(x), L(x)) with W symmetric.  W is the inverse of the contraction
metric M(x) = W(x)^-1 and L encodes the differential feedback gain
K(x) = L(x) W(x)^-1.  The pair certifies exponential incremental
stabilizability at rate beta when the block matrix

    Omega(x, u) = [ W(f(x) + g(x) u)        A(x,u) W(x) + B(x) L(x) ]
                  [ (A W + B L)'            (1 - beta) W(x)         ]

is positive semidefinite for all (x, u), together with positivity of W
itself.  Both conditions are enforced globally by sum-of-squares
certificates: with z = v(x,u) (x) w (all products of a monomial vector v
and the 2n-dimensional test vector w),

    w' (Omega(x,u) - r I) w  =  z' G z,   G >= 0,  r >= epsilon,

and similarly for w' (W(x) - r_W I) w on the state variables alone.
The Gram matrices, the coefficient vectors of W and L, and the margins
r, r_W are stacked into one LMI-form SDP solved by sdpcore.  Matching
the two polynomial sides coefficient-by-coefficient gives the equality
constraints; monomials the Gram parametrization cannot reach raise
immediately rather than silently constraining the certificate.

Maximizing r (capped, since the margin scales with W) is the default
objective; feasibility-only mode pins r at epsilon instead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .errors import (
    NonPositiveMetric,
    SingularMetric,
    SolverFailure,
    SynthesisInfeasible,
)
from .jsonutil import JsonCursor
from .polyalg import MonomialBasis, PolyMatrix, Polynomial
from .sdpcore import LmiBlock, SdpOptions, SdpProblem, SdpStatus, solve_sdp

__all__ = [
    "ObjectiveMode",
    "CertificateTemplate",
    "DccmCertificate",
    "ContractionMatrix",
    "SynthesisOptions",
    "SosLayout",
    "build_contraction_matrix",
    "compile_sos",
    "sos_layout",
    "synthesize",
    "check_lemma_condition",
    "contraction_block_at",
    "metric_from_w",
    "constant_certificate",
    "certificate_to_dict",
    "certificate_from_dict",
    "load_certificate",
    "save_certificate",
]


class ObjectiveMode(enum.Enum):
    MAXIMIZE_MARGIN = "maximize_margin"
    FEASIBILITY_ONLY = "feasibility_only"


@dataclass
class CertificateTemplate:
    """Shape of the certificate: polynomial degrees and contraction rate."""

    n: int
    m: int
    metric_degree: int
    gain_degree: int
    beta: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if self.metric_degree < 0 or self.gain_degree < 0:
            raise ValueError("degrees must be nonnegative")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        self.basis = MonomialBasis(self.n, self.metric_degree)
        self.gain_basis = MonomialBasis(self.n, self.gain_degree)
        self.w_pairs = [(i, j) for i in range(self.n) for j in range(i, self.n)]
        self.l_entries = [(a, b) for a in range(self.m) for b in range(self.n)]

    @property
    def n_pairs(self):
        return len(self.w_pairs)

    @property
    def n_theta(self):
        return self.n_pairs * len(self.basis) + len(self.l_entries) * len(self.gain_basis)


class DccmCertificate:
    """Synthesized (W, L) pair plus the margin the solver achieved.

    ``w_coeffs[p, k]`` is the coefficient of the k-th metric-basis
    monomial in the upper-triangular entry ``template.w_pairs[p]`` of W;
    ``l_coeffs[r, k]`` likewise for the row-major entries of L over the
    gain basis.
    """

    def __init__(self, template, w_coeffs, l_coeffs, margin):
        self.template = template
        self.w_coeffs = np.asarray(w_coeffs, dtype=float)
        self.l_coeffs = np.asarray(l_coeffs, dtype=float)
        self.margin = float(margin)
        # Strongest contraction rate the synthesis certified for this pair,
        # >= template.beta when the rate search ran.  Not serialized.
        self.certified_rate = None
        if self.w_coeffs.shape != (template.n_pairs, len(template.basis)):
            raise ValueError(
                f"w_coeffs must have shape {(template.n_pairs, len(template.basis))}")
        if self.l_coeffs.shape != (len(template.l_entries), len(template.gain_basis)):
            raise ValueError(
                f"l_coeffs must have shape {(len(template.l_entries), len(template.gain_basis))}")
        self._w_matrix = None
        self._l_matrix = None
        self._dw = None

    @classmethod
    def from_theta(cls, template, theta, margin):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (template.n_theta,):
            raise ValueError(f"theta must have length {template.n_theta}")
        nw = template.n_pairs * len(template.basis)
        w = theta[:nw].reshape(template.n_pairs, len(template.basis))
        l = theta[nw:].reshape(len(template.l_entries), len(template.gain_basis))
        return cls(template, w, l, margin)

    @property
    def theta(self):
        return np.concatenate([self.w_coeffs.ravel(), self.l_coeffs.ravel()])

    # ------------------------------------------------------------ symbolic forms

    def w_matrix(self):
        """W as a symmetric PolyMatrix over the n state variables."""
        if self._w_matrix is None:
            t = self.template
            entries = [[None] * t.n for _ in range(t.n)]
            for p_idx, (i, j) in enumerate(t.w_pairs):
                poly = Polynomial(t.n, {
                    mono.exponents: self.w_coeffs[p_idx, k]
                    for k, mono in enumerate(t.basis)
                })
                entries[i][j] = poly
                entries[j][i] = poly
            self._w_matrix = PolyMatrix(entries)
        return self._w_matrix

    def l_matrix(self):
        if self._l_matrix is None:
            t = self.template
            entries = [[None] * t.n for _ in range(t.m)]
            for r_idx, (a, b) in enumerate(t.l_entries):
                entries[a][b] = Polynomial(t.n, {
                    mono.exponents: self.l_coeffs[r_idx, k]
                    for k, mono in enumerate(t.gain_basis)
                })
            self._l_matrix = PolyMatrix(entries)
        return self._l_matrix

    def dw_matrices(self):
        """List over j of the entrywise partial dW/dx_j."""
        if self._dw is None:
            W = self.w_matrix()
            n = self.template.n
            self._dw = [
                PolyMatrix([[W[i, k].diff(j) for k in range(n)] for i in range(n)])
                for j in range(n)
            ]
        return self._dw

    # ------------------------------------------------------------ numeric forms

    def w_at(self, x):
        return self.w_matrix().evaluate(x)

    def l_at(self, x):
        return self.l_matrix().evaluate(x)

    def dw_at(self, x):
        """(n, n, n) with [j] = dW/dx_j at a point, or (k, n, n, n) for a batch."""
        mats = [D.evaluate(x) for D in self.dw_matrices()]
        x = np.asarray(x)
        axis = 0 if x.ndim == 1 else 1
        return np.stack(mats, axis=axis)


def constant_certificate(W, L, beta):
    """Degree-0 certificate from constant matrices (margin not synthesized)."""
    W = np.asarray(W, dtype=float)
    L = np.asarray(L, dtype=float)
    n = W.shape[0]
    m = L.shape[0]
    if W.shape != (n, n) or np.max(np.abs(W - W.T), initial=0.0) > 1e-12:
        raise ValueError("W must be square symmetric")
    if L.shape != (m, n):
        raise ValueError("L must have shape (m, n)")
    t = CertificateTemplate(n=n, m=m, metric_degree=0, gain_degree=0, beta=beta)
    w_coeffs = np.array([[W[i, j]] for (i, j) in t.w_pairs])
    l_coeffs = np.array([[L[a, b]] for (a, b) in t.l_entries])
    return DccmCertificate(t, w_coeffs, l_coeffs, margin=0.0)


# ----------------------------------------------------------------- LMI assembly


@dataclass
class ContractionMatrix:
    """The block matrix Omega as an affine function of the certificate
    coefficients theta: Omega(theta) = const + sum_t theta_t * contribs[t].

    All entries are polynomials over the joint (x, u) variables.
    """

    template: CertificateTemplate
    n_vars: int
    size: int
    contribs: list
    const: PolyMatrix

    @property
    def n_theta(self):
        return len(self.contribs)

    def max_degree(self):
        d = self.const.degree()
        for C in self.contribs:
            d = max(d, C.degree())
        return d

    def evaluate(self, theta, x, u):
        theta = np.asarray(theta, dtype=float)
        z = np.concatenate([np.asarray(x, dtype=float), np.asarray(u, dtype=float)])
        out = self.const.evaluate(z)
        for t, C in enumerate(self.contribs):
            if theta[t] != 0.0:
                out = out + theta[t] * C.evaluate(z)
        return out


def _assemble_block(n, nm, TL, TR, BR):
    size = 2 * n
    zero = Polynomial.zero(nm)
    entries = [[zero] * size for _ in range(size)]
    for i in range(n):
        for j in range(n):
            entries[i][j] = TL[i][j]
            entries[i][n + j] = TR[i][j]
            entries[n + j][i] = TR[i][j]
            entries[n + i][n + j] = BR[i][j]
    return PolyMatrix(entries)


def build_contraction_matrix(sys, template):
    """Omega as an affine function of theta for the given plant and template."""
    if sys.n != template.n or sys.m != template.m:
        raise ValueError("system dimensions do not match the template")
    n, m = sys.n, sys.m
    nm = n + m
    A, B = sys.linearize()
    h = sys.closed_loop_polys()

    # powers of the one-step map components, shared across basis monomials
    pows = []
    for i in range(n):
        row = [Polynomial.constant(nm, 1.0)]
        for _ in range(template.metric_degree):
            row.append(row[-1] * h[i])
        pows.append(row)
    composed = []
    for mono in template.basis:
        p = Polynomial.constant(nm, 1.0)
        for i, e in enumerate(mono.exponents):
            if e:
                p = p * pows[i][e]
        composed.append(p)

    zero_n = [[Polynomial.zero(nm)] * n for _ in range(n)]
    contribs = []
    for (i, j) in template.w_pairs:
        for k, mono in enumerate(template.basis):
            # W with a single symmetric unit entry carrying this basis monomial
            mono_poly = mono.as_poly().extend(nm)
            W_entries = [row[:] for row in zero_n]
            W_entries[i][j] = mono_poly
            W_entries[j][i] = mono_poly
            W_theta = PolyMatrix(W_entries)
            # top-left: the same entry composed with the one-step map
            TL = [row[:] for row in zero_n]
            TL[i][j] = composed[k]
            TL[j][i] = composed[k]
            TR = A @ W_theta
            BR = W_theta.scale(1.0 - template.beta)
            contribs.append(_assemble_block(n, nm, TL, TR.entries, BR.entries))
    for (a, b) in template.l_entries:
        for mono in template.gain_basis:
            L_entries = [[Polynomial.zero(nm)] * n for _ in range(m)]
            L_entries[a][b] = mono.as_poly().extend(nm)
            TR = B @ PolyMatrix(L_entries)
            contribs.append(_assemble_block(n, nm, zero_n, TR.entries,
                                            [row[:] for row in zero_n]))
    const = PolyMatrix.zeros(2 * n, 2 * n, nm)
    return ContractionMatrix(template=template, n_vars=nm, size=2 * n,
                             contribs=contribs, const=const)


# ----------------------------------------------------------------- SOS compile


@dataclass
class SosLayout:
    """Where each quantity lives inside the stacked SDP variable vector."""

    template: CertificateTemplate
    gram_degree: int
    gram_w_degree: int
    epsilon: float
    r_cap: float
    objective_mode: ObjectiveMode
    basis_v: MonomialBasis        # monomial vector v(x, u), contraction side
    basis_vw: MonomialBasis       # monomial vector on the state-only W side
    z_dim: int
    zw_dim: int
    n_theta: int
    r_index: int | None
    rw_index: int
    gram_offset: int
    gramw_offset: int
    num_vars: int

    def theta_of(self, y):
        return np.asarray(y)[: self.n_theta]

    def margins_of(self, y):
        r = self.epsilon if self.r_index is None else float(y[self.r_index])
        return r, float(y[self.rw_index])

    def gram_of(self, y):
        """Reconstruct the two Gram matrices from the solution vector."""
        y = np.asarray(y, dtype=float)
        G = _sym_from_vech(y[self.gram_offset:self.gram_offset + _vech_len(self.z_dim)],
                           self.z_dim)
        GW = _sym_from_vech(y[self.gramw_offset:self.gramw_offset + _vech_len(self.zw_dim)],
                            self.zw_dim)
        return G, GW


def _vech_len(d):
    return d * (d + 1) // 2

def _vech_index(i, j, d):
    # row-major upper triangle including the diagonal, i <= j
    return i * d - (i * (i - 1)) // 2 + (j - i)

def _sym_from_vech(v, d):
    M = np.zeros((d, d))
    idx = 0
    for i in range(d):
        for j in range(i, d):
            M[i, j] = M[j, i] = v[idx]
            idx += 1
    return M


def sos_layout(cm, gram_degree, epsilon=1e-4,
               objective_mode=ObjectiveMode.MAXIMIZE_MARGIN, r_cap=10.0):
    t = cm.template
    basis_v = MonomialBasis(cm.n_vars, gram_degree)
    gram_w_degree = math.ceil(t.metric_degree / 2)
    basis_vw = MonomialBasis(t.n, gram_w_degree)
    z_dim = len(basis_v) * cm.size
    zw_dim = len(basis_vw) * t.n
    n_theta = cm.n_theta

    pos = n_theta
    if objective_mode is ObjectiveMode.MAXIMIZE_MARGIN:
        r_index = pos
        pos += 1
    else:
        r_index = None
    rw_index = pos
    pos += 1
    gram_offset = pos
    pos += _vech_len(z_dim)
    gramw_offset = pos
    pos += _vech_len(zw_dim)
    return SosLayout(
        template=t, gram_degree=gram_degree, gram_w_degree=gram_w_degree,
        epsilon=epsilon, r_cap=r_cap, objective_mode=objective_mode,
        basis_v=basis_v, basis_vw=basis_vw, z_dim=z_dim, zw_dim=zw_dim,
        n_theta=n_theta, r_index=r_index, rw_index=rw_index,
        gram_offset=gram_offset, gramw_offset=gramw_offset, num_vars=pos,
    )


def compile_sos(cm, gram_degree, epsilon=1e-4,
                objective_mode=ObjectiveMode.MAXIMIZE_MARGIN, r_cap=10.0):
    """Compile the SOS conditions into one LMI-form SdpProblem.

    Variable stacking follows sos_layout: certificate coefficients theta,
    the margin(s), then the upper triangles of the two Gram matrices.
    Coefficient matching between w'(Omega - r I)w and z'Gz (and the W
    positivity analogue) supplies the equality constraints.
    """
    lay = sos_layout(cm, gram_degree, epsilon, objective_mode, r_cap)
    t = cm.template
    n, size, nm = t.n, cm.size, cm.n_vars

    big = MonomialBasis(nm, 2 * gram_degree)
    pairs = [(p, q) for p in range(size) for q in range(p, size)]
    pair_index = {pq: k for k, pq in enumerate(pairs)}
    n_rows_c = len(big) * len(pairs)

    bigw = MonomialBasis(n, 2 * lay.gram_w_degree)
    pairs_w = [(p, q) for p in range(n) for q in range(p, n)]
    pair_w_index = {pq: k for k, pq in enumerate(pairs_w)}
    n_rows_w = len(bigw) * len(pairs_w)

    n_rows = n_rows_c + n_rows_w
    rows, cols, vals = [], [], []
    b = np.zeros(n_rows)

    def row_c(mu_idx, p, q):
        return mu_idx * len(pairs) + pair_index[(p, q)]

    def row_w(nu_idx, p, q):
        return n_rows_c + nu_idx * len(pairs_w) + pair_w_index[(p, q)]

    # --- Gram side of the contraction identity: z'Gz, z_(a,p) = v_a w_p
    V = len(lay.basis_v)
    prod_idx = np.empty((V, V), dtype=np.int64)
    for a in range(V):
        for bb in range(a, V):
            mu = lay.basis_v[a] * lay.basis_v[bb]
            prod_idx[a, bb] = prod_idx[bb, a] = big.index(mu)
    for I in range(lay.z_dim):
        a, p = divmod(I, size)
        for J in range(I, lay.z_dim):
            bb, q = divmod(J, size)
            pq = (p, q) if p <= q else (q, p)
            rows.append(row_c(prod_idx[a, bb], *pq))
            cols.append(lay.gram_offset + _vech_index(I, J, lay.z_dim))
            vals.append(1.0 if I == J else 2.0)

    # --- certificate side: -(2 - delta_pq) * coeff of each Omega contribution
    for t_idx, C in enumerate(cm.contribs):
        for p in range(size):
            for q in range(p, size):
                mult = 1.0 if p == q else 2.0
                for exps, coeff in C[p, q].terms.items():
                    if sum(exps) > 2 * gram_degree:
                        raise ValueError(
                            f"gram_degree {gram_degree} cannot reach monomial {exps} "
                            f"of the contraction matrix; increase it")
                    rows.append(row_c(big.index(exps), p, q))
                    cols.append(t_idx)
                    vals.append(-mult * coeff)
    for p in range(size):
        for q in range(p, size):
            mult = 1.0 if p == q else 2.0
            for exps, coeff in cm.const[p, q].terms.items():
                b[row_c(big.index(exps), p, q)] += mult * coeff

    # --- the margin enters only the diagonal constant rows
    one_idx = big.index((0,) * nm)
    for p in range(size):
        if lay.r_index is not None:
            rows.append(row_c(one_idx, p, p))
            cols.append(lay.r_index)
            vals.append(1.0)
        else:
            b[row_c(one_idx, p, p)] += -epsilon

    # --- W positivity side: w'(W(x) - r_W I)w = z_W' G_W z_W
    VW = len(lay.basis_vw)
    prodw_idx = np.empty((VW, VW), dtype=np.int64)
    for a in range(VW):
        for bb in range(a, VW):
            nu = lay.basis_vw[a] * lay.basis_vw[bb]
            prodw_idx[a, bb] = prodw_idx[bb, a] = bigw.index(nu)
    for I in range(lay.zw_dim):
        a, p = divmod(I, n)
        for J in range(I, lay.zw_dim):
            bb, q = divmod(J, n)
            pq = (p, q) if p <= q else (q, p)
            rows.append(row_w(prodw_idx[a, bb], *pq))
            cols.append(lay.gramw_offset + _vech_index(I, J, lay.zw_dim))
            vals.append(1.0 if I == J else 2.0)
    for p_idx, (i, j) in enumerate(t.w_pairs):
        mult = 1.0 if i == j else 2.0
        for k, mono in enumerate(t.basis):
            rows.append(row_w(bigw.index(mono), i, j))
            cols.append(p_idx * len(t.basis) + k)
            vals.append(-mult)
    onew_idx = bigw.index((0,) * n)
    for p in range(n):
        rows.append(row_w(onew_idx, p, p))
        cols.append(lay.rw_index)
        vals.append(1.0)

    A = scipy.sparse.coo_matrix((vals, (rows, cols)),
                                shape=(n_rows, lay.num_vars)).tocsr()

    # --- LMI blocks
    def unit_sym(d, i, j):
        if i == j:
            return scipy.sparse.coo_matrix(([1.0], ([i], [j])), shape=(d, d))
        return scipy.sparse.coo_matrix(([1.0, 1.0], ([i, j], [j, i])), shape=(d, d))

    blocks = []
    zero_g = scipy.sparse.coo_matrix((lay.z_dim, lay.z_dim))
    fs = [zero_g] * lay.num_vars
    for I in range(lay.z_dim):
        for J in range(I, lay.z_dim):
            fs[lay.gram_offset + _vech_index(I, J, lay.z_dim)] = unit_sym(lay.z_dim, I, J)
    blocks.append(LmiBlock(np.zeros((lay.z_dim, lay.z_dim)), fs))

    zero_gw = scipy.sparse.coo_matrix((lay.zw_dim, lay.zw_dim))
    fsw = [zero_gw] * lay.num_vars
    for I in range(lay.zw_dim):
        for J in range(I, lay.zw_dim):
            fsw[lay.gramw_offset + _vech_index(I, J, lay.zw_dim)] = unit_sym(lay.zw_dim, I, J)
    blocks.append(LmiBlock(np.zeros((lay.zw_dim, lay.zw_dim)), fsw))

    def scalar_block(var_index, sign, offset):
        # sign * y_var + offset >= 0
        fs1 = [np.zeros((1, 1))] * lay.num_vars
        fs1[var_index] = np.array([[float(sign)]])
        return LmiBlock(np.array([[float(offset)]]), fs1)

    if lay.r_index is not None:
        blocks.append(scalar_block(lay.r_index, +1.0, -epsilon))   # r >= epsilon
        blocks.append(scalar_block(lay.r_index, -1.0, r_cap))      # r <= r_cap
    blocks.append(scalar_block(lay.rw_index, +1.0, -epsilon))      # r_W >= epsilon
    blocks.append(scalar_block(lay.rw_index, -1.0, r_cap))         # r_W <= r_cap

    c = np.zeros(lay.num_vars)
    if lay.r_index is not None:
        c[lay.r_index] = -1.0  # maximize the margin

    return SdpProblem(num_vars=lay.num_vars, objective=c, blocks=blocks,
                      equalities=(A, b))


# ------------------------------------------------------------------- synthesis


@dataclass
class SynthesisOptions:
    epsilon: float = 1e-4
    r_cap: float = 10.0
    objective_mode: ObjectiveMode = ObjectiveMode.MAXIMIZE_MARGIN
    gram_degree: int | None = None
    # Margin mode searches for the strongest rate the template admits
    # (bisection over beta_hat in [beta, rate_ceiling]) before certifying
    # the margin at the requested beta.  The search is what gives the
    # closed loop its speed: the margin alone does not distinguish between
    # sluggish and deadbeat-like gains, because any feasible pair scales to
    # the same capped margin.
    search_strongest_rate: bool = True
    rate_ceiling: float = 0.95
    rate_tolerance: float = 0.025
    sdp: SdpOptions = field(default_factory=SdpOptions)


def _monomial_mean(exponents, lo, hi):
    """Mean of the monomial x^e over the axis-aligned box [lo, hi]."""
    out = 1.0
    for e, a, b in zip(exponents, lo, hi):
        width = b - a
        if width == 0.0:
            out *= a ** e
        else:
            out *= (b ** (e + 1) - a ** (e + 1)) / (width * (e + 1))
    return out


def _scale_normalization(template, num_vars, domain):
    """Equality row fixing the box-averaged trace of W to n.

    Any positive multiple of a valid (W, L) pair is again valid with the
    margins scaled to match, so without this row the feasible set contains
    an unbounded ray and the solver's answer on it is arbitrary.  The
    gains K = L W^-1 are unchanged by the normalization.
    """
    if domain is not None:
        lo, hi = domain.lo, domain.hi
    else:
        lo = -np.ones(template.n)
        hi = np.ones(template.n)
    row = np.zeros(num_vars)
    nb = len(template.basis)
    for p_idx, (i, j) in enumerate(template.w_pairs):
        if i != j:
            continue
        for k, mono in enumerate(template.basis):
            row[p_idx * nb + k] = _monomial_mean(mono.exponents, lo, hi)
    return row, float(template.n)


def _with_equalities(problem, rows, rhs):
    """Copy of an SdpProblem with extra equality rows appended."""
    A, b = problem.equalities
    if not scipy.sparse.issparse(rows):
        rows = scipy.sparse.csr_matrix(np.atleast_2d(rows))
    A2 = scipy.sparse.vstack([scipy.sparse.csr_matrix(A), rows]).tocsr()
    b2 = np.concatenate([np.asarray(b, dtype=float), np.atleast_1d(rhs)])
    return SdpProblem(num_vars=problem.num_vars, objective=problem.objective,
                      blocks=problem.blocks, equalities=(A2, b2))


def _theta_pins(n_theta, num_vars):
    idx = np.arange(n_theta)
    return scipy.sparse.coo_matrix(
        (np.ones(n_theta), (idx, idx)), shape=(n_theta, num_vars)).tocsr()


_STIFFEST_WEIGHT = 0.1


def _rescaled(cert, domain):
    """Certificate scaled so the stiffest metric direction has weight 0.1.

    Scaling (W, L) by a positive constant leaves the gains K = L W^-1
    unchanged and multiplies the certified margin by the same constant, so
    the choice of scale is free.  The solver's normalization pins the
    average trace of W, which can leave min eig W(x) tiny and the metric
    M = W^-1 huge; geodesic energies then sit at 1e3 or more, where double
    precision cannot resolve the optimizer's stopping test and the O(Δs)
    bias of the discretized energy exceeds the absolute tolerances used by
    downstream checks.  Rescaling so max eig M(center) = 0.1 puts box-size
    geodesic energies at O(0.1), an order below those tolerances.
    """
    center = (0.5 * (domain.lo + domain.hi) if domain is not None
              else np.zeros(cert.template.n))
    lam = float(np.linalg.eigvalsh(cert.w_at(center)).min())
    if not np.isfinite(lam) or not 1e-12 < lam < 1e12:
        return cert
    s = 1.0 / (_STIFFEST_WEIGHT * lam)
    out = DccmCertificate(cert.template, s * cert.w_coeffs, s * cert.l_coeffs,
                          margin=s * cert.margin)
    out.certified_rate = cert.certified_rate
    return out


def synthesize(sys, template, options=None):
    """Search for a certificate of the template's shape on the given plant.

    In margin mode the synthesis first finds the strongest contraction
    rate the template supports (up to ``options.rate_ceiling``), keeps the
    coefficients found there, and then reports the margin those
    coefficients achieve at the requested ``template.beta``.  A pair that
    contracts at a fast rate also contracts at every slower rate, so the
    result is a valid, generously-margined certificate at the requested
    beta whose gains make the closed loop settle quickly.  Setting
    ``search_strongest_rate=False`` maximizes the margin at
    ``template.beta`` directly instead.

    Raises SynthesisInfeasible when no certificate exists at the
    requested rate and SolverFailure when the solver stops without an
    answer.
    """
    options = options or SynthesisOptions()
    cm = build_contraction_matrix(sys, template)
    gram_degree = options.gram_degree
    if gram_degree is None:
        gram_degree = max(0, math.ceil(cm.max_degree() / 2))
    domain = getattr(sys, "domain", None)

    def solve_mode(cm_x, epsilon, mode, extra_rows=None, extra_rhs=None):
        lay = sos_layout(cm_x, gram_degree, epsilon, mode, options.r_cap)
        prob = compile_sos(cm_x, gram_degree, epsilon, mode, options.r_cap)
        if extra_rows is None:
            row, rhs = _scale_normalization(template, lay.num_vars, domain)
            prob = _with_equalities(prob, row, rhs)
        else:
            prob = _with_equalities(prob, extra_rows, extra_rhs)
        return lay, solve_sdp(prob, options.sdp)

    def fail(sol):
        if sol.status is SdpStatus.INFEASIBLE:
            raise SynthesisInfeasible(
                f"no degree-({template.metric_degree},{template.gain_degree}) "
                f"certificate at beta={template.beta} "
                f"(solver: {sol.message or 'infeasible'})")
        raise SolverFailure(
            f"SDP solver stopped with {sol.status.value}: {sol.message}")

    if options.objective_mode is ObjectiveMode.FEASIBILITY_ONLY:
        lay, sol = solve_mode(cm, options.epsilon, ObjectiveMode.FEASIBILITY_ONLY)
        if sol.status is not SdpStatus.OPTIMAL:
            fail(sol)
        r, _ = lay.margins_of(sol.y)
        cert = DccmCertificate.from_theta(template, lay.theta_of(sol.y), margin=r)
        cert.certified_rate = template.beta
        return _rescaled(cert, domain)

    if not options.search_strongest_rate:
        lay, sol = solve_mode(cm, options.epsilon, ObjectiveMode.MAXIMIZE_MARGIN)
        if sol.status is not SdpStatus.OPTIMAL:
            fail(sol)
        r, _ = lay.margins_of(sol.y)
        cert = DccmCertificate.from_theta(template, lay.theta_of(sol.y), margin=r)
        cert.certified_rate = template.beta
        return _rescaled(cert, domain)

    # --- rate search: feasibility solves at trial rates beta_hat
    eps_search = min(options.epsilon, 1e-6)

    def attempt(beta_hat):
        if beta_hat == template.beta:
            cm_hat = cm
        else:
            tmpl_hat = CertificateTemplate(template.n, template.m,
                                           template.metric_degree,
                                           template.gain_degree, beta_hat)
            cm_hat = build_contraction_matrix(sys, tmpl_hat)
        lay_hat, sol = solve_mode(cm_hat, eps_search, ObjectiveMode.FEASIBILITY_ONLY)
        if sol.status is SdpStatus.OPTIMAL:
            return lay_hat.theta_of(sol.y), sol
        return None, sol

    ceiling = min(max(options.rate_ceiling, template.beta), 0.999)
    theta, sol = attempt(ceiling)
    if theta is not None:
        best_theta, best_rate = theta, ceiling
    else:
        theta, sol = attempt(template.beta)
        if theta is None:
            fail(sol)
        best_theta, best_rate = theta, template.beta
        lo, hi = template.beta, ceiling
        while hi - lo > options.rate_tolerance:
            mid = 0.5 * (lo + hi)
            theta, _ = attempt(mid)
            if theta is None:
                hi = mid
            else:
                best_theta, best_rate, lo = theta, mid, mid

    # --- margin certification at the requested rate, coefficients pinned
    lay = sos_layout(cm, gram_degree, options.epsilon,
                     ObjectiveMode.MAXIMIZE_MARGIN, options.r_cap)
    lay, sol = solve_mode(cm, options.epsilon, ObjectiveMode.MAXIMIZE_MARGIN,
                          extra_rows=_theta_pins(lay.n_theta, lay.num_vars),
                          extra_rhs=best_theta)
    if sol.status is not SdpStatus.OPTIMAL:
        raise SolverFailure(
            f"margin certification at beta={template.beta} stopped with "
            f"{sol.status.value}: {sol.message}")
    r, _ = lay.margins_of(sol.y)
    cert = DccmCertificate.from_theta(template, best_theta, margin=r)
    cert.certified_rate = best_rate
    return _rescaled(cert, domain)


# ------------------------------------------------------------- pointwise checks


def metric_from_w(W, x=None, cond_cap=1e12):
    """Invert W(x) into the metric M(x), guarding conditioning and sign."""
    W = np.asarray(W, dtype=float)
    lams = np.linalg.eigvalsh(0.5 * (W + W.T))
    if lams[0] <= 0.0:
        raise NonPositiveMetric(
            f"W has eigenvalue {lams[0]:.3e} <= 0, the metric is not positive", x)
    if lams[-1] / lams[0] > cond_cap:
        raise SingularMetric(
            f"W condition number {lams[-1] / lams[0]:.3e} exceeds {cond_cap:.0e}", x)
    M = np.linalg.inv(0.5 * (W + W.T))
    return 0.5 * (M + M.T)


def check_lemma_condition(sys, cert, x, u):
    """Largest eigenvalue of (A+BK)' M+ (A+BK) - (1-beta) M at one point.

    Negative value = the differential closed loop contracts at this (x, u).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    M = metric_from_w(cert.w_at(x), x)
    x_next = sys.step(x, u)
    M_next = metric_from_w(cert.w_at(x_next), x_next)
    K = cert.l_at(x) @ M
    Acl = sys.a_at(x, u) + sys.b_at(x) @ K
    V = Acl.T @ M_next @ Acl - (1.0 - cert.template.beta) * M
    return float(np.linalg.eigvalsh(0.5 * (V + V.T))[-1])


def contraction_block_at(sys, cert, x, u):
    """Numeric Omega(x, u) evaluated directly from the plant and certificate."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    W = cert.w_at(x)
    TR = sys.a_at(x, u) @ W + sys.b_at(x) @ cert.l_at(x)
    W_next = cert.w_at(sys.step(x, u))
    top = np.hstack([W_next, TR])
    bottom = np.hstack([TR.T, (1.0 - cert.template.beta) * W])
    return np.vstack([top, bottom])


# ------------------------------------------------------------------ file format


def certificate_to_dict(cert):
    t = cert.template
    if t.n > 9:
        raise ValueError("certificate files index entries by digit pairs; n <= 9 only")
    obj = {
        "template": {
            "n": t.n, "m": t.m,
            "metric_degree": t.metric_degree,
            "gain_degree": t.gain_degree,
            "beta": t.beta,
            "ordering": "grlex",
        },
        "w": {
            f"{i + 1}{j + 1}": list(cert.w_coeffs[p_idx])
            for p_idx, (i, j) in enumerate(t.w_pairs)
        },
        "l": {
            str(r_idx + 1): list(cert.l_coeffs[r_idx])
            for r_idx in range(len(t.l_entries))
        },
        "margin": cert.margin,
    }
    return obj


def certificate_from_dict(obj):
    return _certificate_from_cursor(JsonCursor(obj, "<dict>"))


def load_certificate(path):
    return _certificate_from_cursor(JsonCursor.load(path))


def save_certificate(cert, path):
    import json

    with open(path, "w") as fh:
        json.dump(certificate_to_dict(cert), fh, indent=2)
        fh.write("\n")


def _certificate_from_cursor(cur):
    tc = cur.child("template")
    if tc.child("ordering").as_str() != "grlex":
        tc.child("ordering").fail("unsupported ordering (only 'grlex')")
    try:
        template = CertificateTemplate(
            n=tc.child("n").as_int(), m=tc.child("m").as_int(),
            metric_degree=tc.child("metric_degree").as_int(),
            gain_degree=tc.child("gain_degree").as_int(),
            beta=tc.child("beta").as_float(),
        )
    except ValueError as exc:
        tc.fail(str(exc))
    wc = cur.child("w")
    w_coeffs = np.zeros((template.n_pairs, len(template.basis)))
    for p_idx, (i, j) in enumerate(template.w_pairs):
        key = f"{i + 1}{j + 1}"
        w_coeffs[p_idx] = wc.child(key).as_float_list(len(template.basis))
    lc = cur.child("l")
    l_coeffs = np.zeros((len(template.l_entries), len(template.gain_basis)))
    for r_idx in range(len(template.l_entries)):
        l_coeffs[r_idx] = lc.child(str(r_idx + 1)).as_float_list(len(template.gain_basis))
    margin = cur.child("margin").as_float()
    return DccmCertificate(template, w_coeffs, l_coeffs, margin)
