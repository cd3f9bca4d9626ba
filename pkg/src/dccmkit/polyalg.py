"""Sparse multivariate polynomial algebra.

Everything downstream (plant models, contraction constraints, sum-of-squares
compilation) is built from the three objects here: ``Monomial``, a bare
exponent tuple with ordering helpers; ``Polynomial``, a sparse map from
monomials to float coefficients; and ``PolyMatrix``, a dense matrix of
polynomials supporting the usual ring operations.

Monomial order is graded lexicographic (grlex): ascending total degree,
and within a degree block the variable with the lowest index dominates,
so for two variables the order is 1, x1, x2, x1^2, x1*x2, x2^2, ...
Coefficient vectors exchanged through JSON are flat, zero-included, and
indexed by this order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Monomial",
    "Polynomial",
    "PolyMatrix",
    "MonomialBasis",
    "monomial_basis",
    "evaluate",
    "poly_mul",
    "jacobian",
    "compose",
    "poly_to_dict",
    "poly_from_dict",
    "poly_coeffs",
    "poly_from_coeffs",
]


@dataclass(frozen=True)
class Monomial:
    """Product of variables given by an exponent tuple, one slot per variable."""

    exponents: tuple

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        object.__setattr__(self, "exponents", exps)

    @property
    def n_vars(self):
        return len(self.exponents)

    def degree(self):
        return sum(self.exponents)

    def grlex_key(self):
        # ascending degree, then lexicographic with x1 dominating
        return (self.degree(), tuple(-e for e in self.exponents))

    def __mul__(self, other):
        if len(self.exponents) != len(other.exponents):
            raise ValueError("monomials over different variable counts")
        return Monomial(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def as_poly(self, coeff=1.0):
        return Polynomial(len(self.exponents), {self.exponents: float(coeff)})

    def __repr__(self):
        if self.degree() == 0:
            return "1"
        parts = []
        for i, e in enumerate(self.exponents):
            if e == 1:
                parts.append(f"x{i + 1}")
            elif e > 1:
                parts.append(f"x{i + 1}^{e}")
        return "*".join(parts)


def _mul_term_dicts(da, db):
    """Convolve two exponent-tuple -> coeff maps."""
    out = {}
    for ea, ca in da.items():
        for eb, cb in db.items():
            key = tuple(x + y for x, y in zip(ea, eb))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


class Polynomial:
    """Sparse polynomial with float coefficients.

    Stored as a map from exponent tuples to coefficients; terms with
    coefficient exactly 0.0 are never kept, so the zero polynomial has an
    empty map and two equal polynomials have identical term dicts.
    Instances are treated as immutable.
    """

    __slots__ = ("n_vars", "terms", "_packed")

    def __init__(self, n_vars, terms=None):
        self.n_vars = int(n_vars)
        if self.n_vars < 1:
            raise ValueError("need at least one variable")
        clean = {}
        for exps, coeff in (terms or {}).items():
            if isinstance(exps, Monomial):
                exps = exps.exponents
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.n_vars:
                raise ValueError(
                    f"exponent tuple {exps} does not match n_vars={self.n_vars}"
                )
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            c = float(coeff)
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + c
                if clean[exps] == 0.0:
                    del clean[exps]
        self.terms = clean
        self._packed = None

    # ---------------------------------------------------------------- constructors

    @classmethod
    def zero(cls, n_vars):
        return cls(n_vars, {})

    @classmethod
    def constant(cls, n_vars, value):
        return cls(n_vars, {(0,) * n_vars: float(value)})

    @classmethod
    def variable(cls, n_vars, index):
        if not 0 <= index < n_vars:
            raise ValueError(f"variable index {index} out of range for n={n_vars}")
        exps = [0] * n_vars
        exps[index] = 1
        return cls(n_vars, {tuple(exps): 1.0})

    # ---------------------------------------------------------------- queries

    def degree(self):
        """Total degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(e) for e in self.terms)

    def is_zero(self):
        return not self.terms

    def monomials(self):
        return [Monomial(e) for e in sorted(self.terms, key=lambda e: Monomial(e).grlex_key())]

    def coeff(self, exps):
        if isinstance(exps, Monomial):
            exps = exps.exponents
        return self.terms.get(tuple(exps), 0.0)

    # ---------------------------------------------------------------- ring ops

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0.0) + c
            if s == 0.0:
                out.pop(e, None)
            else:
                out[e] = s
        return Polynomial(self.n_vars, out)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self.__add__(self._coerce(other).__neg__())

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __neg__(self):
        return Polynomial(self.n_vars, {e: -c for e, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            s = float(other)
            if s == 0.0:
                return Polynomial.zero(self.n_vars)
            return Polynomial(self.n_vars, {e: c * s for e, c in self.terms.items()})
        other = self._coerce(other)
        return Polynomial(self.n_vars, _mul_term_dicts(self.terms, other.terms))

    def __rmul__(self, other):
        return self.__mul__(other)

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.n_vars != self.n_vars:
                raise ValueError(
                    f"mixing polynomials over {self.n_vars} and {other.n_vars} variables"
                )
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.n_vars, float(other))
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and other.n_vars == self.n_vars
            and other.terms == self.terms
        )

    __hash__ = None

    # ---------------------------------------------------------------- calculus

    def diff(self, index):
        """Partial derivative with respect to variable ``index``."""
        if not 0 <= index < self.n_vars:
            raise ValueError(f"variable index {index} out of range")
        out = {}
        for e, c in self.terms.items():
            if e[index] == 0:
                continue
            ne = list(e)
            ne[index] -= 1
            out[tuple(ne)] = c * e[index]
        return Polynomial(self.n_vars, out)

    def compose(self, subst):
        """Substitute ``subst[i]`` for variable i; all subst share one var space."""
        if len(subst) != self.n_vars:
            raise ValueError(
                f"need {self.n_vars} substitution polynomials, got {len(subst)}"
            )
        m = subst[0].n_vars
        for q in subst:
            if q.n_vars != m:
                raise ValueError("substitution polynomials over mismatched variables")
        # cache powers of each substitution polynomial as raw term dicts
        one = {(0,) * m: 1.0}
        powers = [{0: one} for _ in range(self.n_vars)]

        def power(i, k):
            cache = powers[i]
            if k not in cache:
                kk = max(j for j in cache if j <= k)
                acc = cache[kk]
                while kk < k:
                    acc = _mul_term_dicts(acc, subst[i].terms)
                    kk += 1
                    cache[kk] = acc
            return cache[k]

        total = {}
        for e, c in self.terms.items():
            term = {(0,) * m: c}
            for i, k in enumerate(e):
                if k > 0:
                    term = _mul_term_dicts(term, power(i, k))
            for key, val in term.items():
                total[key] = total.get(key, 0.0) + val
        return Polynomial(m, total)

    def extend(self, new_n_vars):
        """Reinterpret over a larger variable space (new variables appended)."""
        if new_n_vars < self.n_vars:
            raise ValueError("cannot shrink the variable space")
        pad = (0,) * (new_n_vars - self.n_vars)
        return Polynomial(new_n_vars, {e + pad: c for e, c in self.terms.items()})

    # ---------------------------------------------------------------- evaluation

    def _pack(self):
        if self._packed is None:
            if self.terms:
                # canonical term order so equal polynomials evaluate to the
                # same bits regardless of how their term dicts were built
                keys = sorted(self.terms, key=lambda e: Monomial(e).grlex_key())
                exps = np.array(keys, dtype=np.int64)
                coef = np.array([self.terms[e] for e in keys], dtype=float)
            else:
                exps = np.zeros((0, self.n_vars), dtype=np.int64)
                coef = np.zeros(0, dtype=float)
            self._packed = (exps, coef)
        return self._packed

    def evaluate(self, x):
        """Evaluate at a point ``(n,)`` -> float or a batch ``(k, n)`` -> ``(k,)``."""
        x = np.asarray(x, dtype=float)
        exps, coef = self._pack()
        if x.ndim == 1:
            if x.shape[0] != self.n_vars:
                raise ValueError(f"point has {x.shape[0]} coords, expected {self.n_vars}")
            if coef.size == 0:
                return 0.0
            return float(np.prod(x[None, :] ** exps, axis=1) @ coef)
        if x.ndim == 2:
            if x.shape[1] != self.n_vars:
                raise ValueError(f"batch has {x.shape[1]} coords, expected {self.n_vars}")
            if coef.size == 0:
                return np.zeros(x.shape[0])
            return np.prod(x[:, None, :] ** exps[None, :, :], axis=2) @ coef
        raise ValueError("expected a 1-d point or a 2-d batch of points")

    def __call__(self, x):
        return self.evaluate(x)

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for m in self.monomials():
            c = self.terms[m.exponents]
            parts.append(f"{c:g}" if m.degree() == 0 else f"{c:g}*{m!r}")
        return "Polynomial(" + " + ".join(parts) + ")"


class MonomialBasis:
    """All monomials in ``n_vars`` variables up to ``max_degree``, grlex-ordered."""

    def __init__(self, n_vars, max_degree):
        self.n_vars = int(n_vars)
        self.max_degree = int(max_degree)
        if self.n_vars < 1 or self.max_degree < 0:
            raise ValueError("need n_vars >= 1 and max_degree >= 0")

        def exps_summing_to(n, d):
            if n == 1:
                yield (d,)
                return
            for e in range(d + 1):
                for rest in exps_summing_to(n - 1, d - e):
                    yield (e,) + rest

        monos = []
        for d in range(self.max_degree + 1):
            block = [Monomial(e) for e in exps_summing_to(self.n_vars, d)]
            block.sort(key=lambda m: m.grlex_key())
            monos.extend(block)
        self.monomials = monos
        self._index = {m.exponents: i for i, m in enumerate(monos)}

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, i):
        return self.monomials[i]

    def index(self, mono):
        exps = mono.exponents if isinstance(mono, Monomial) else tuple(mono)
        if exps not in self._index:
            raise KeyError(f"monomial {exps} not in basis (n={self.n_vars}, d<={self.max_degree})")
        return self._index[exps]

    def contains(self, mono):
        exps = mono.exponents if isinstance(mono, Monomial) else tuple(mono)
        return exps in self._index


def monomial_basis(n_vars, max_degree):
    return MonomialBasis(n_vars, max_degree)


class PolyMatrix:
    """Dense matrix with Polynomial entries, all over the same variables."""

    __slots__ = ("n_vars", "shape", "entries")

    def __init__(self, entries):
        if not entries or not entries[0]:
            raise ValueError("PolyMatrix cannot be empty")
        rows = len(entries)
        cols = len(entries[0])
        n_vars = entries[0][0].n_vars
        for row in entries:
            if len(row) != cols:
                raise ValueError("ragged rows")
            for p in row:
                if not isinstance(p, Polynomial) or p.n_vars != n_vars:
                    raise ValueError("entries must be Polynomials over the same variables")
        self.entries = [list(row) for row in entries]
        self.shape = (rows, cols)
        self.n_vars = n_vars

    @classmethod
    def zeros(cls, rows, cols, n_vars):
        z = Polynomial.zero(n_vars)
        return cls([[z] * cols for _ in range(rows)])

    @classmethod
    def from_constant(cls, array, n_vars):
        array = np.asarray(array, dtype=float)
        return cls(
            [[Polynomial.constant(n_vars, array[i, j]) for j in range(array.shape[1])]
             for i in range(array.shape[0])]
        )

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def __add__(self, other):
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return PolyMatrix(
            [[self.entries[i][j] + other.entries[i][j] for j in range(self.shape[1])]
             for i in range(self.shape[0])]
        )

    def __sub__(self, other):
        return self.__add__(other.scale(-1.0))

    def __matmul__(self, other):
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        out = []
        for i in range(self.shape[0]):
            row = []
            for j in range(other.shape[1]):
                acc = Polynomial.zero(self.n_vars)
                for k in range(self.shape[1]):
                    a = self.entries[i][k]
                    b = other.entries[k][j]
                    if a.is_zero() or b.is_zero():
                        continue
                    acc = acc + a * b
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    def scale(self, factor):
        """Multiply every entry by a scalar or a Polynomial."""
        return PolyMatrix(
            [[p * factor for p in row] for row in self.entries]
        )

    def transpose(self):
        return PolyMatrix(
            [[self.entries[i][j] for i in range(self.shape[0])]
             for j in range(self.shape[1])]
        )

    @property
    def T(self):
        return self.transpose()

    def extend(self, new_n_vars):
        return PolyMatrix([[p.extend(new_n_vars) for p in row] for row in self.entries])

    def degree(self):
        return max(p.degree() for row in self.entries for p in row)

    def is_symmetric(self):
        if self.shape[0] != self.shape[1]:
            return False
        return all(
            self.entries[i][j] == self.entries[j][i]
            for i in range(self.shape[0])
            for j in range(i + 1, self.shape[1])
        )

    def evaluate(self, x):
        """Point ``(n,)`` -> ``(r, c)``; batch ``(k, n)`` -> ``(k, r, c)``."""
        x = np.asarray(x, dtype=float)
        r, c = self.shape
        if x.ndim == 1:
            out = np.empty((r, c))
            for i in range(r):
                for j in range(c):
                    out[i, j] = self.entries[i][j].evaluate(x)
            return out
        out = np.empty((x.shape[0], r, c))
        for i in range(r):
            for j in range(c):
                out[:, i, j] = self.entries[i][j].evaluate(x)
        return out

    def __repr__(self):
        return f"PolyMatrix({self.shape[0]}x{self.shape[1]}, n_vars={self.n_vars})"


# -------------------------------------------------------------------- functional API


def evaluate(p, x):
    return p.evaluate(x)


def poly_mul(a, b):
    return a * b


def compose(p, subst):
    return p.compose(subst)


def jacobian(polys, n_vars=None):
    """Jacobian of a list of polynomials: entry (i, j) is d polys[i] / d x_j."""
    if not polys:
        raise ValueError("need at least one polynomial")
    n = polys[0].n_vars if n_vars is None else n_vars
    for p in polys:
        if p.n_vars != n:
            raise ValueError("polynomials over mismatched variables")
    return PolyMatrix([[p.diff(j) for j in range(n)] for p in polys])


# -------------------------------------------------------------------- serialization


def poly_to_dict(p, max_degree=None):
    """Flat grlex coefficient form: zeros included, float round-trip exact."""
    d = p.degree()
    if max_degree is None:
        max_degree = max(d, 0)
    if d > max_degree:
        raise ValueError(f"polynomial degree {d} exceeds max_degree {max_degree}")
    basis = MonomialBasis(p.n_vars, max_degree)
    coeffs = [0.0] * len(basis)
    for e, c in p.terms.items():
        coeffs[basis.index(e)] = c
    return {
        "n_vars": p.n_vars,
        "ordering": "grlex",
        "max_degree": max_degree,
        "coeffs": coeffs,
    }


def poly_from_dict(obj):
    if obj.get("ordering") != "grlex":
        raise ValueError(f"unsupported ordering {obj.get('ordering')!r}")
    n_vars = int(obj["n_vars"])
    max_degree = int(obj["max_degree"])
    coeffs = obj["coeffs"]
    basis = MonomialBasis(n_vars, max_degree)
    if len(coeffs) != len(basis):
        raise ValueError(
            f"expected {len(basis)} coefficients for n={n_vars}, d<={max_degree}, "
            f"got {len(coeffs)}"
        )
    return poly_from_coeffs(basis, coeffs)


def poly_coeffs(basis, p):
    """Coefficient vector of ``p`` in ``basis`` (error if p has terms outside)."""
    if p.n_vars != basis.n_vars:
        raise ValueError("polynomial and basis over different variables")
    out = np.zeros(len(basis))
    for e, c in p.terms.items():
        out[basis.index(e)] = c
    return out

def poly_from_coeffs(basis, coeffs):
    coeffs = list(coeffs)
    if len(coeffs) != len(basis):
        raise ValueError(f"expected {len(basis)} coefficients, got {len(coeffs)}")
    terms = {}
    for m, c in zip(basis.monomials, coeffs):
        if float(c) != 0.0:
            terms[m.exponents] = float(c)
    return Polynomial(basis.n_vars, terms)
