"""Logical contexts: conjunctions of polynomial inequalities.

A context is a finite conjunction of atoms ``P >= 0``, ``P > 0`` or
``P == 0`` over program variables; the empty conjunction is true.
Contexts describe the reachable states assumed at a program point and
are the hypotheses handed to the entailment engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .polynomials import Poly
from .syntax import And, Cond, Le, Not, Site, TrueCond

GE, GT, EQ = ">=", ">", "=="
_REL_TEXT = {GE: ">=", GT: ">", EQ: "=="}


@dataclass(frozen=True)
class Atom:
    """poly rel 0."""

    poly: Poly
    rel: str  # GE | GT | EQ

    def __post_init__(self) -> None:
        if self.rel not in (GE, GT, EQ):
            raise ValueError(f"bad relation {self.rel!r}")

    def holds_exact(self, valuation: Mapping[str, Fraction]) -> bool:
        v = self.poly.eval_exact(valuation)
        if self.rel == GE:
            return v >= 0
        if self.rel == GT:
            return v > 0
        return v == 0

    def substitute(self, name: str, replacement: Poly) -> "Atom":
        return Atom(self.poly.substitute(name, replacement), self.rel)

    def to_text(self) -> str:
        return f"{self.poly.to_text()} {_REL_TEXT[self.rel]} 0"


@dataclass(frozen=True)
class LogicalContext:
    """Conjunction of atoms; empty means tt."""

    atoms: tuple[Atom, ...] = ()

    def is_true(self) -> bool:
        return not self.atoms

    def conjoin(self, *atoms: Atom) -> "LogicalContext":
        new = [a for a in atoms if a not in self.atoms]
        if not new:
            return self
        return LogicalContext(self.atoms + tuple(new))

    def conjoin_ctx(self, other: "LogicalContext") -> "LogicalContext":
        return self.conjoin(*other.atoms)

    def substitute(self, name: str, replacement: Poly) -> "LogicalContext":
        return LogicalContext(tuple(a.substitute(name, replacement) for a in self.atoms))

    def drop_var(self, name: str) -> "LogicalContext":
        return LogicalContext(tuple(a for a in self.atoms if name not in a.poly.variables()))

    def variables(self) -> set[str]:
        out: set[str] = set()
        for a in self.atoms:
            out |= a.poly.variables()
        return out

    def holds_exact(self, valuation: Mapping[str, Fraction]) -> bool:
        return all(a.holds_exact(valuation) for a in self.atoms)

    def to_text(self) -> str:
        if not self.atoms:
            return "tt"
        return " and ".join(a.to_text() for a in self.atoms)

    def __str__(self) -> str:
        return self.to_text()


TT_CTX = LogicalContext()
FALSE_ATOM = Atom(Poly.constant(-1), GE)  # unsatisfiable


def cond_atoms(c: Cond, negate: bool = False) -> Optional[list[Atom]]:
    """Conjunction of atoms equivalent to c (or not-c), if one exists.

    Negated conjunctions are disjunctions and have no conjunctive form;
    None tells the caller to conjoin nothing, which is a sound
    weakening of the context.
    """
    if isinstance(c, TrueCond):
        return [FALSE_ATOM] if negate else []
    if isinstance(c, Not):
        return cond_atoms(c.body, not negate)
    if isinstance(c, Le):
        lhs = Poly.from_expr(c.left)
        rhs = Poly.from_expr(c.right)
        if negate:
            return [Atom(lhs - rhs, GT)]  # not (l <= r)  <=>  l - r > 0
        return [Atom(rhs - lhs, GE)]
    if isinstance(c, And):
        if negate:
            return None
        left = cond_atoms(c.left, False)
        right = cond_atoms(c.right, False)
        if left is None or right is None:
            return None
        return left + right
    raise TypeError(f"not a condition: {c!r}")


def conjoin_cond(ctx: LogicalContext, c: Cond, negate: bool = False) -> LogicalContext:
    atoms = cond_atoms(c, negate)
    if atoms is None:
        return ctx
    return ctx.conjoin(*atoms)


# ---------------------------------------------------------------------------
# user annotations


@dataclass(frozen=True)
class FuncSpec:
    """One pre/post specification for a function."""

    pre_ctx: LogicalContext
    pre_q: Poly
    post_ctx: LogicalContext
    post_q: Poly

    def shifted(self, c: Fraction) -> "FuncSpec":
        return FuncSpec(self.pre_ctx, self.pre_q + c, self.post_ctx, self.post_q + c)

    def to_text(self, fid: str) -> str:
        return (f"spec {fid} : {{{self.pre_ctx.to_text()} ; {self.pre_q.to_text()}}}"
                f" -> {{{self.post_ctx.to_text()} ; {self.post_q.to_text()}}}")


@dataclass(frozen=True)
class AnnotationSet:
    """Potential annotations riding on a program.

    specs maps function ids to one or more pre/post specifications;
    loop_invariants and weaken_sites are keyed by statement site.
    """

    specs: Mapping[str, tuple[FuncSpec, ...]] = field(default_factory=dict)
    loop_invariants: Mapping[Site, tuple[LogicalContext, Poly]] = field(default_factory=dict)
    weaken_sites: Mapping[Site, tuple[LogicalContext, Poly]] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.specs and not self.loop_invariants and not self.weaken_sites

    def max_degree(self) -> int:
        """Max total degree across every annotation polynomial."""
        deg = 0
        for entries in self.specs.values():
            for sp in entries:
                deg = max(deg, sp.pre_q.degree(), sp.post_q.degree())
        for _, q in self.loop_invariants.values():
            deg = max(deg, q.degree())
        for _, q in self.weaken_sites.values():
            deg = max(deg, q.degree())
        return deg

    def variables(self) -> set[str]:
        out: set[str] = set()
        for entries in self.specs.values():
            for sp in entries:
                out |= sp.pre_ctx.variables() | sp.pre_q.variables()
                out |= sp.post_ctx.variables() | sp.post_q.variables()
        for ctx, q in list(self.loop_invariants.values()) + list(self.weaken_sites.values()):
            out |= ctx.variables() | q.variables()
        return out


EMPTY_ANNOTATIONS = AnnotationSet()
