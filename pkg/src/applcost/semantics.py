"""Small-step operational semantics with continuations.

A configuration is the quadruple (valuation, statement, continuation,
cost accumulator); one step maps a configuration to a distribution over
successor configurations.  Non-probabilistic statements step to a Dirac
distribution, probabilistic branching steps to a two-point distribution,
and sampling pushes the sampling distribution forward through a builder
that writes the drawn value into the valuation.

Termination configurations are exactly (_, skip, Kstop, _) and
self-loop, so the accumulated cost is frozen from the stopping time on.

The arithmetic is polymorphic: run it on float-valued valuations for
simulation, or on Fraction-valued valuations for exact enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Union

from .syntax import (SKIP, Add, And, Assign, Call, Cond, Const,
                     DiscreteFinite, Dist, Expr, IfThenElse, Le, Mul, Not,
                     ProbBranch, Program, Sample, Seq, Skip, Stmt, Tick,
                     TrueCond, Uniform, Var, While)

Number = Union[float, Fraction, int]
Valuation = Mapping[str, Number]


# ---------------------------------------------------------------------------
# continuations and configurations


class Continuation:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Kstop(Continuation):
    pass


@dataclass(frozen=True, slots=True)
class Kloop(Continuation):
    cond: Cond
    body: Stmt
    next: Continuation


@dataclass(frozen=True, slots=True)
class Kseq(Continuation):
    stmt: Stmt
    next: Continuation


KSTOP = Kstop()


@dataclass(frozen=True)
class Configuration:
    gamma: Valuation
    stmt: Stmt
    cont: Continuation
    cost: Number

    def is_terminal(self) -> bool:
        return isinstance(self.stmt, Skip) and isinstance(self.cont, Kstop)

    def key(self):
        """Hashable identity: exact equality of (gamma, stmt, cont, cost)."""
        return (frozenset(self.gamma.items()), self.stmt, self.cont, self.cost)


def initial_configuration(program: Program,
                          overrides: Mapping[str, Number] | None = None,
                          exact: bool = False) -> Configuration:
    """Start of execution: all variables zero, cost zero.

    ``overrides`` initializes precondition parameters (the bridge for
    program families like a walk parameterized by its target distance).
    """
    zero: Number = Fraction(0) if exact else 0.0
    gamma = {v: zero for v in program.vars}
    for name, value in (overrides or {}).items():
        if name not in gamma:
            raise KeyError(f"cannot set undeclared variable {name!r}")
        gamma[name] = Fraction(value) if exact else float(value)
    return Configuration(gamma, program.main, KSTOP, zero)


# ---------------------------------------------------------------------------
# big-step evaluation of expressions and conditions (deterministic, total)


def eval_expr(gamma: Valuation, e: Expr) -> Number:
    if isinstance(e, Var):
        return gamma.get(e.name, 0)
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Add):
        return eval_expr(gamma, e.left) + eval_expr(gamma, e.right)
    if isinstance(e, Mul):
        return eval_expr(gamma, e.left) * eval_expr(gamma, e.right)
    raise TypeError(f"not an expression: {e!r}")


def eval_expr_float(gamma: Mapping[str, float], e: Expr) -> float:
    if isinstance(e, Var):
        return gamma.get(e.name, 0.0)
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Add):
        return eval_expr_float(gamma, e.left) + eval_expr_float(gamma, e.right)
    if isinstance(e, Mul):
        return eval_expr_float(gamma, e.left) * eval_expr_float(gamma, e.right)
    raise TypeError(f"not an expression: {e!r}")


def eval_cond(gamma: Valuation, c: Cond) -> bool:
    if isinstance(c, TrueCond):
        return True
    if isinstance(c, Not):
        return not eval_cond(gamma, c.body)
    if isinstance(c, And):
        return eval_cond(gamma, c.left) and eval_cond(gamma, c.right)
    if isinstance(c, Le):
        return eval_expr(gamma, c.left) <= eval_expr(gamma, c.right)
    raise TypeError(f"not a condition: {c!r}")


# ---------------------------------------------------------------------------
# one-step distributions


@dataclass(frozen=True)
class Finite:
    """Finitely supported step distribution; weights sum to 1."""

    entries: tuple[tuple[Number, Configuration], ...]

    def is_dirac(self) -> bool:
        return len(self.entries) == 1 and self.entries[0][0] == 1


@dataclass(frozen=True)
class Pushforward:
    """Image of a sampling distribution under a configuration builder."""

    dist: Dist
    builder: Callable[[Number], Configuration]


StepDistribution = Union[Finite, Pushforward]


def dirac(cfg: Configuration) -> Finite:
    return Finite(((1, cfg),))


def _updated(gamma: Valuation, name: str, value: Number) -> Valuation:
    out = dict(gamma)
    out[name] = value
    return out


def step(funcs: Mapping[str, Stmt], sigma: Configuration) -> StepDistribution:
    """One evaluation step: total on all configurations.

    Rule by rule: a terminal configuration self-loops; skip pops its
    continuation (re-testing the guard of a loop continuation); tick
    adds its constant to the accumulator; assignment and sampling write
    the variable and leave skip; call inlines the function body with the
    continuation untouched; probabilistic branching yields the
    two-point distribution; conditionals and loops route on the guard,
    with loops parking their body in a loop continuation.
    """
    gamma, s, k, alpha = sigma.gamma, sigma.stmt, sigma.cont, sigma.cost
    if isinstance(s, Skip):
        if isinstance(k, Kstop):
            return dirac(sigma)
        if isinstance(k, Kloop):
            if eval_cond(gamma, k.cond):
                return dirac(Configuration(gamma, k.body, k, alpha))
            return dirac(Configuration(gamma, s, k.next, alpha))
        if isinstance(k, Kseq):
            return dirac(Configuration(gamma, k.stmt, k.next, alpha))
        raise TypeError(f"not a continuation: {k!r}")
    if isinstance(s, Tick):
        return dirac(Configuration(gamma, SKIP, k, alpha + s.cost))
    if isinstance(s, Assign):
        r = eval_expr(gamma, s.expr)
        return dirac(Configuration(_updated(gamma, s.var, r), SKIP, k, alpha))
    if isinstance(s, Sample):
        var = s.var

        def build(r: Number, _g=gamma, _k=k, _a=alpha, _v=var) -> Configuration:
            return Configuration(_updated(_g, _v, r), SKIP, _k, _a)

        return Pushforward(s.dist, build)
    if isinstance(s, Call):
        return dirac(Configuration(gamma, funcs[s.fid], k, alpha))
    if isinstance(s, ProbBranch):
        p = s.p
        return Finite(((p, Configuration(gamma, s.left, k, alpha)),
                       (1 - p, Configuration(gamma, s.right, k, alpha))))
    if isinstance(s, IfThenElse):
        branch = s.then if eval_cond(gamma, s.cond) else s.orelse
        return dirac(Configuration(gamma, branch, k, alpha))
    if isinstance(s, While):
        return dirac(Configuration(gamma, SKIP, Kloop(s.cond, s.body, k), alpha))
    if isinstance(s, Seq):
        return dirac(Configuration(gamma, s.first, Kseq(s.second, k), alpha))
    raise TypeError(f"not a statement: {s!r}")


def expand_finite(funcs: Mapping[str, Stmt], sigma: Configuration,
                  exact: bool) -> Finite:
    """Step distribution as a finite table; rejects continuous sampling.

    Discrete sampling expands the pushforward over its (finite)
    support, in exact rationals when requested.
    """
    mu = step(funcs, sigma)
    if isinstance(mu, Finite):
        return mu
    if isinstance(mu.dist, DiscreteFinite):
        entries = []
        for value, prob in mu.dist.items:
            v: Number = value if exact else float(value)
            entries.append((prob if exact else float(prob), mu.builder(v)))
        return Finite(tuple(entries))
    raise ContinuousDistributionError(
        "configuration steps through a continuous distribution")


class ContinuousDistributionError(Exception):
    pass


# ---------------------------------------------------------------------------
# sampling one step


def sample_value(rng, dist: Dist) -> float:
    """Draw once: inverse CDF for uniform, categorical for discrete.

    ``rng`` is anything with a ``random()`` method returning a float in
    [0, 1); a fixed generator makes the draw reproducible bit for bit.
    """
    u = rng.random()
    if isinstance(dist, Uniform):
        a, b = float(dist.a), float(dist.b)
        return a + u * (b - a)
    if isinstance(dist, DiscreteFinite):
        acc = 0.0
        for value, prob in dist.items:
            acc += float(prob)
            if u < acc:
                return float(value)
        return float(dist.items[-1][0])
    raise TypeError(f"not a distribution: {dist!r}")


def sample_step(rng, funcs: Mapping[str, Stmt], sigma: Configuration) -> Configuration:
    """Draw one successor of sigma; Dirac steps return it directly."""
    mu = step(funcs, sigma)
    if isinstance(mu, Pushforward):
        return mu.builder(sample_value(rng, mu.dist))
    entries = mu.entries
    if len(entries) == 1:
        return entries[0][1]
    u = rng.random()
    acc = 0.0
    for weight, cfg in entries:
        acc += float(weight)
        if u < acc:
            return cfg
    return entries[-1][1]
