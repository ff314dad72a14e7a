"""Exact multivariate polynomials over program variables.

Coefficients are arbitrary-precision rationals so that checker-side
equalities like ``Q == Q' + c`` hold or fail exactly; float drift never
produces spurious verdicts.  Monomials are stored sparsely and kept
canonical (no zero coefficients, exponents >= 1, variables sorted), so
two polynomials are equal iff their underlying maps are equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Union

from .syntax import Add, Const, DiscreteFinite, Dist, Expr, Mul, Uniform, Var

Monomial = tuple[tuple[str, int], ...]  # ((var, exp), ...), vars sorted, exp >= 1
Scalar = Union[int, Fraction]

_ONE: Monomial = ()


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    exps: dict[str, int] = dict(a)
    for v, e in b:
        exps[v] = exps.get(v, 0) + e
    return tuple(sorted(exps.items()))


def _mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def _grlex_key(m: Monomial):
    # graded lexicographic: total degree first, then the exponent vector
    return (_mono_degree(m), tuple((v, -e) for v, e in m))


class Poly:
    """Immutable sparse polynomial with Fraction coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        clean: dict[Monomial, Fraction] = {}
        if terms:
            for m, c in terms.items():
                c = Fraction(c)
                if c != 0:
                    clean[m] = c
        self._terms = clean
        self._hash: int | None = None

    # construction -----------------------------------------------------------

    @staticmethod
    def zero() -> "Poly":
        return Poly()

    @staticmethod
    def constant(c: Scalar) -> "Poly":
        return Poly({_ONE: Fraction(c)})

    @staticmethod
    def var(name: str, exp: int = 1) -> "Poly":
        if exp < 0:
            raise ValueError("exponents must be nonnegative")
        if exp == 0:
            return Poly.constant(1)
        return Poly({((name, exp),): Fraction(1)})

    @staticmethod
    def from_expr(e: Expr) -> "Poly":
        if isinstance(e, Var):
            return Poly.var(e.name)
        if isinstance(e, Const):
            return Poly.constant(e.value)
        if isinstance(e, Add):
            return Poly.from_expr(e.left) + Poly.from_expr(e.right)
        if isinstance(e, Mul):
            return Poly.from_expr(e.left) * Poly.from_expr(e.right)
        raise TypeError(f"not an expression: {e!r}")

    # basic queries -----------------------------------------------------------

    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return not self._terms or (len(self._terms) == 1 and _ONE in self._terms)

    def constant_value(self) -> Fraction:
        """The value of a constant polynomial (raises otherwise)."""
        if not self.is_constant():
            raise ValueError(f"not a constant polynomial: {self}")
        return self._terms.get(_ONE, Fraction(0))

    def constant_term(self) -> Fraction:
        return self._terms.get(_ONE, Fraction(0))

    def degree(self) -> int:
        """Max total degree; 0 for constants (including zero)."""
        if not self._terms:
            return 0
        return max(_mono_degree(m) for m in self._terms)

    def degree_in(self, name: str) -> int:
        deg = 0
        for m in self._terms:
            for v, e in m:
                if v == name:
                    deg = max(deg, e)
        return deg

    def variables(self) -> set[str]:
        return {v for m in self._terms for v, _ in m}

    # ring operations ----------------------------------------------------------

    def __add__(self, other: "Poly | Scalar") -> "Poly":
        other = _as_poly(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, Fraction(0)) + c
            if s == 0:
                out.pop(m, None)
            else:
                out[m] = s
        return Poly(out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self._terms.items()})

    def __sub__(self, other: "Poly | Scalar") -> "Poly":
        return self + (-_as_poly(other))

    def __rsub__(self, other: Scalar) -> "Poly":
        return _as_poly(other) - self

    def __mul__(self, other: "Poly | Scalar") -> "Poly":
        other = _as_poly(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mono_mul(m1, m2)
                s = out.get(m, Fraction(0)) + c1 * c2
                if s == 0:
                    out.pop(m, None)
                else:
                    out[m] = s
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("negative power")
        out = Poly.constant(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Poly.constant(other)
        if not isinstance(other, Poly):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # substitution, evaluation, expectation -------------------------------------

    def substitute(self, name: str, replacement: "Poly") -> "Poly":
        """Replace every occurrence of ``name`` by ``replacement``, expanded."""
        out = Poly.zero()
        powers: dict[int, Poly] = {0: Poly.constant(1)}

        def power(k: int) -> Poly:
            if k not in powers:
                powers[k] = power(k - 1) * replacement
            return powers[k]

        for m, c in self._terms.items():
            exp = 0
            rest: list[tuple[str, int]] = []
            for v, e in m:
                if v == name:
                    exp = e
                else:
                    rest.append((v, e))
            term = Poly({tuple(rest): c})
            out = out + (term * power(exp) if exp else term)
        return out

    def eval_exact(self, valuation: Mapping[str, Scalar]) -> Fraction:
        """Exact value at a rational point; absent variables read as 0."""
        total = Fraction(0)
        for m, c in self._terms.items():
            v = c
            for name, e in m:
                v *= Fraction(valuation.get(name, 0)) ** e
            total += v
        return total

    def eval_float(self, valuation: Mapping[str, float]) -> float:
        """binary64 value at a float point (simulation-side boundary)."""
        total = 0.0
        for m, c in self._terms.items():
            v = float(c)
            for name, e in m:
                v *= valuation.get(name, 0.0) ** e
            total += v
        return total

    def compile_float(self, var_index: Mapping[str, int]) -> Callable:
        """Evaluator over an indexed vector (list or ndarray row/matrix)."""
        items = [(float(c), [(var_index[v], e) for v, e in m])
                 for m, c in self._terms.items()]

        def run(values):
            total = 0.0
            for coef, mono in items:
                v = coef
                for idx, e in mono:
                    v = v * values[idx] ** e
                total = total + v
            return total

        return run

    def expectation(self, name: str, table: "MomentTable") -> "Poly":
        """Integrate out ``name`` against the table's distribution.

        Each monomial c * name^i * M becomes c * m_i * M; the result no
        longer mentions ``name``.
        """
        out: dict[Monomial, Fraction] = {}
        for m, c in self._terms.items():
            exp = 0
            rest: list[tuple[str, int]] = []
            for v, e in m:
                if v == name:
                    exp = e
                else:
                    rest.append((v, e))
            coef = c * table.moment(exp)
            key = tuple(rest)
            s = out.get(key, Fraction(0)) + coef
            if s == 0:
                out.pop(key, None)
            else:
                out[key] = s
        return Poly(out)

    # formatting -----------------------------------------------------------------

    def to_text(self) -> str:
        """Canonical text form, parseable by the annotation grammar."""
        if not self._terms:
            return "0"
        ordered = sorted(self._terms.items(), key=lambda kv: _grlex_key(kv[0]), reverse=True)
        parts: list[str] = []
        for i, (m, c) in enumerate(ordered):
            mono = "*".join(v if e == 1 else f"{v}^{e}" for v, e in m)
            mag = abs(c)
            if not mono:
                body = str(mag)
            elif mag == 1:
                body = mono
            else:
                body = f"{mag}*{mono}"
            if i == 0:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(f"+ {body}" if c > 0 else f"- {body}")
        return " ".join(parts)

    def __str__(self) -> str:
        return self.to_text()

    def __repr__(self) -> str:
        return f"Poly({self.to_text()!r})"


def _as_poly(x: "Poly | Scalar") -> Poly:
    if isinstance(x, Poly):
        return x
    return Poly.constant(x)


def affine(p: Scalar, q1: Poly, q2: Poly) -> Poly:
    """p * q1 + (1 - p) * q2 with p in [0, 1]."""
    p = Fraction(p)
    if p < 0 or p > 1:
        raise ValueError(f"mixing weight {p} outside [0, 1]")
    return q1 * p + q2 * (1 - p)


def add_const(q: Poly, c: Scalar) -> Poly:
    return q + Fraction(c)


# ---------------------------------------------------------------------------
# raw moments


@dataclass(frozen=True)
class MomentTable:
    """Raw moments m_i = E[x^i] of a distribution, i = 0..order, exact."""

    dist: Dist
    values: tuple[Fraction, ...]

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def moment(self, i: int) -> Fraction:
        if i < 0 or i >= len(self.values):
            raise MissingMomentError(
                f"moment of order {i} not available (table has 0..{self.order})")
        return self.values[i]


class MissingMomentError(Exception):
    pass


def moments(dist: Dist, k: int) -> MomentTable:
    """Raw moments m_0..m_k of a sampling distribution, exactly.

    Uniform(a, b): m_i = (b^(i+1) - a^(i+1)) / ((i+1) * (b - a)).
    DiscreteFinite: m_i = sum_j p_j * v_j^i.
    """
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if isinstance(dist, Uniform):
        a, b = Fraction(dist.a), Fraction(dist.b)
        vals = tuple((b ** (i + 1) - a ** (i + 1)) / ((i + 1) * (b - a))
                     for i in range(k + 1))
    elif isinstance(dist, DiscreteFinite):
        vals = tuple(sum((p * v ** i for v, p in dist.items), Fraction(0))
                     for i in range(k + 1))
    else:
        raise TypeError(f"not a distribution: {dist!r}")
    return MomentTable(dist, vals)


def expectation(q: Poly, name: str, dist_or_table: "Dist | MomentTable") -> Poly:
    """E over ``name`` drawn from a distribution; table built lazily."""
    if isinstance(dist_or_table, MomentTable):
        table = dist_or_table
    else:
        table = moments(dist_or_table, q.degree_in(name))
    return q.expectation(name, table)
