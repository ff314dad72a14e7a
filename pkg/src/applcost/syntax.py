"""AST for the APPL probabilistic language.

Expressions, conditions, distributions, and statements are immutable
trees.  Statements inside a function body are addressed by *paths*:
tuples of child indices rooted at the body statement (``Seq`` children
are 0/1, branch statements use 0 for then/left and 1 for else/right,
``While`` bodies are child 0).  A *site* is ``(fid, *path)`` and is the
stable key used for loop invariants, weaken annotations, and
diagnostics, so it survives pretty-print round trips.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Union

Rat = Fraction

# ---------------------------------------------------------------------------
# expressions


class Expr:
    """Base class for arithmetic expressions (variables, constants, +, *)."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: Rat

    def __post_init__(self) -> None:
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True, slots=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    left: Expr
    right: Expr


def const(v) -> Const:
    return Const(Fraction(v))


def neg(e: Expr) -> Expr:
    """-e, encoded as (-1) * e (constants fold)."""
    if isinstance(e, Const):
        return Const(-e.value)
    return Mul(Const(Fraction(-1)), e)


def sub(a: Expr, b: Expr) -> Expr:
    """a - b, encoded as a + (-b)."""
    return Add(a, neg(b))


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, (Add, Mul)):
        return expr_vars(e.left) | expr_vars(e.right)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# conditions


class Cond:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class TrueCond(Cond):
    pass


@dataclass(frozen=True, slots=True)
class Not(Cond):
    body: Cond


@dataclass(frozen=True, slots=True)
class And(Cond):
    left: Cond
    right: Cond


@dataclass(frozen=True, slots=True)
class Le(Cond):
    """left <= right."""

    left: Expr
    right: Expr


TT = TrueCond()


def lt(a: Expr, b: Expr) -> Cond:
    """a < b, encoded as not (b <= a)."""
    return Not(Le(b, a))


def cond_vars(c: Cond) -> set[str]:
    if isinstance(c, TrueCond):
        return set()
    if isinstance(c, Not):
        return cond_vars(c.body)
    if isinstance(c, And):
        return cond_vars(c.left) | cond_vars(c.right)
    if isinstance(c, Le):
        return expr_vars(c.left) | expr_vars(c.right)
    raise TypeError(f"not a condition: {c!r}")


# ---------------------------------------------------------------------------
# distributions


class Dist:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Uniform(Dist):
    """Continuous uniform on [a, b]; requires a < b."""

    a: Rat
    b: Rat

    def __post_init__(self) -> None:
        if not self.a < self.b:
            raise ValueError(f"uniform requires a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True, slots=True)
class DiscreteFinite(Dist):
    """Finite support distribution: tuple of (value, probability) pairs.

    Probabilities are exact rationals in [0, 1] summing to exactly 1.
    """

    items: tuple[tuple[Rat, Rat], ...]

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("discrete distribution needs at least one outcome")
        total = Fraction(0)
        for value, prob in self.items:
            if prob < 0 or prob > 1:
                raise ValueError(f"probability {prob} outside [0, 1]")
            total += prob
        if total != 1:
            raise ValueError(f"discrete probabilities sum to {total}, not 1")


def dist_support_bounds(d: Dist) -> tuple[Rat, Rat]:
    """Smallest closed interval containing the support."""
    if isinstance(d, Uniform):
        return d.a, d.b
    if isinstance(d, DiscreteFinite):
        values = [v for v, _ in d.items]
        return min(values), max(values)
    raise TypeError(f"not a distribution: {d!r}")


# ---------------------------------------------------------------------------
# statements


class Stmt:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Skip(Stmt):
    pass


@dataclass(frozen=True, slots=True)
class Tick(Stmt):
    cost: Rat

    def __post_init__(self) -> None:
        if not isinstance(self.cost, Fraction):
            object.__setattr__(self, "cost", Fraction(self.cost))


@dataclass(frozen=True, slots=True)
class Assign(Stmt):
    var: str
    expr: Expr


@dataclass(frozen=True, slots=True)
class Sample(Stmt):
    var: str
    dist: Dist


@dataclass(frozen=True, slots=True)
class Call(Stmt):
    fid: str


@dataclass(frozen=True, slots=True)
class While(Stmt):
    cond: Cond
    body: Stmt


@dataclass(frozen=True, slots=True)
class ProbBranch(Stmt):
    """prob(p) { left } { right }: left with probability p."""

    p: Rat
    left: Stmt
    right: Stmt

    def __post_init__(self) -> None:
        if self.p < 0 or self.p > 1:
            raise ValueError(f"branch probability {self.p} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class IfThenElse(Stmt):
    cond: Cond
    then: Stmt
    orelse: Stmt


@dataclass(frozen=True, slots=True)
class Seq(Stmt):
    first: Stmt
    second: Stmt


SKIP = Skip()

Path = tuple[int, ...]
Site = tuple  # (fid, *path)


def seq_of(stmts: list[Stmt]) -> Stmt:
    """Right-nested sequence of statements (empty list is skip)."""
    if not stmts:
        return SKIP
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


def children(s: Stmt) -> tuple[Stmt, ...]:
    if isinstance(s, Seq):
        return (s.first, s.second)
    if isinstance(s, While):
        return (s.body,)
    if isinstance(s, ProbBranch):
        return (s.left, s.right)
    if isinstance(s, IfThenElse):
        return (s.then, s.orelse)
    return ()


def walk(s: Stmt, path: Path = ()) -> Iterator[tuple[Path, Stmt]]:
    """Yield (path, node) for every statement node, preorder."""
    yield path, s
    for i, c in enumerate(children(s)):
        yield from walk(c, path + (i,))


def stmt_at(s: Stmt, path: Path) -> Stmt:
    for i in path:
        s = children(s)[i]
    return s


def stmt_vars(s: Stmt) -> set[str]:
    out: set[str] = set()
    for _, node in walk(s):
        if isinstance(node, Assign):
            out.add(node.var)
            out |= expr_vars(node.expr)
        elif isinstance(node, Sample):
            out.add(node.var)
        elif isinstance(node, While):
            out |= cond_vars(node.cond)
        elif isinstance(node, IfThenElse):
            out |= cond_vars(node.cond)
    return out


def called_fids(s: Stmt) -> set[str]:
    return {node.fid for _, node in walk(s) if isinstance(node, Call)}


# ---------------------------------------------------------------------------
# programs


@dataclass(frozen=True)
class Program:
    """An APPL program: function table, main body, declared variables.

    ``precondition`` is a conjunction of polynomial atoms over the
    declared variables (see :mod:`applcost.logic`); it defaults to the
    empty conjunction (true).  All calls must resolve into ``funcs`` and
    every variable mentioned anywhere must be declared.
    """

    funcs: Mapping[str, Stmt]
    main: Stmt
    vars: tuple[str, ...]
    precondition: object = None  # LogicalContext; None means tt

    def bodies(self) -> Iterator[tuple[str, Stmt]]:
        """All function bodies, main last, in declaration order."""
        for fid, body in self.funcs.items():
            yield fid, body
        yield "main", self.main

    def body_of(self, fid: str) -> Stmt:
        if fid == "main":
            return self.main
        return self.funcs[fid]

    def sites(self) -> Iterator[tuple[Site, Stmt]]:
        for fid, body in self.bodies():
            for path, node in walk(body):
                yield (fid, *path), node


def site_str(site: Site) -> str:
    fid = site[0]
    if len(site) == 1:
        return fid
    return fid + ":" + ".".join(str(i) for i in site[1:])


def parse_site(text: str) -> Site:
    if ":" not in text:
        return (text,)
    fid, rest = text.split(":", 1)
    return (fid, *(int(p) for p in rest.split(".")))


# ---------------------------------------------------------------------------
# pretty printer
#
# The printer is the exact inverse of the parser on ASTs: parsing its
# output reproduces the input tree node for node.  Subtraction sugar is
# emitted only for the two shapes the parser desugars to, and unary
# minus never swallows a constant operand (the parser would fold it).

_ADD, _MUL, _ATOM = 0, 1, 2


def pp_expr(e: Expr, prec: int = _ADD) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        s = str(e.value)
        if e.value < 0 and prec >= _MUL:
            return f"({s})"
        return s
    if isinstance(e, Add):
        left = pp_expr(e.left, _ADD)
        r = e.right
        if isinstance(r, Const) and r.value < 0:
            body = f"{left} - {-r.value}"
        elif isinstance(r, Mul) and r.left == Const(Fraction(-1)) and not isinstance(r.right, Const):
            body = f"{left} - {pp_expr(r.right, _MUL)}"
        else:
            body = f"{left} + {pp_expr(r, _MUL)}"
        return f"({body})" if prec > _ADD else body
    if isinstance(e, Mul):
        if e.left == Const(Fraction(-1)) and not isinstance(e.right, Const):
            body = f"-{pp_expr(e.right, _ATOM)}"
            return f"({body})" if prec > _ADD else body
        body = f"{pp_expr(e.left, _MUL)} * {pp_expr(e.right, _ATOM)}"
        return f"({body})" if prec > _MUL else body
    raise TypeError(f"not an expression: {e!r}")


def pp_cond(c: Cond, inner: bool = False) -> str:
    if isinstance(c, TrueCond):
        return "tt"
    if isinstance(c, Le):
        return f"{pp_expr(c.left)} <= {pp_expr(c.right)}"
    if isinstance(c, Not):
        if isinstance(c.body, Le):
            # not (a <= b) is a > b
            return f"{pp_expr(c.body.left)} > {pp_expr(c.body.right)}"
        return f"not ({pp_cond(c.body)})"
    if isinstance(c, And):
        body = f"{pp_cond(c.left, True)} and {pp_cond(c.right, True)}"
        return f"({body})" if inner else body
    raise TypeError(f"not a condition: {c!r}")


def pp_dist(d: Dist) -> str:
    if isinstance(d, Uniform):
        return f"uniform({d.a}, {d.b})"
    if isinstance(d, DiscreteFinite):
        inner = ", ".join(f"{v}: {p}" for v, p in d.items)
        return f"discrete({inner})"
    raise TypeError(f"not a distribution: {d!r}")


def pp_stmt(s: Stmt, indent: int = 0, annots: "Mapping[Path, str] | None" = None,
            path: Path = ()) -> str:
    pad = "    " * indent
    note = ""
    if annots and path in annots:
        note = f"{pad}{annots[path]}\n"
    if isinstance(s, Seq):
        parts: list[str] = []
        node, p = s, path
        while isinstance(node, Seq):
            parts.append(pp_stmt(node.first, indent, annots, p + (0,)))
            node, p = node.second, p + (1,)
        parts.append(pp_stmt(node, indent, annots, p))
        return note + ";\n".join(parts)
    if isinstance(s, Skip):
        return f"{note}{pad}skip"
    if isinstance(s, Tick):
        return f"{note}{pad}tick({s.cost})"
    if isinstance(s, Assign):
        return f"{note}{pad}{s.var} := {pp_expr(s.expr)}"
    if isinstance(s, Sample):
        return f"{note}{pad}{s.var} ~ {pp_dist(s.dist)}"
    if isinstance(s, Call):
        return f"{note}{pad}call {s.fid}"
    if isinstance(s, While):
        body = pp_stmt(s.body, indent + 1, annots, path + (0,))
        return f"{note}{pad}while {pp_cond(s.cond)} {{\n{body}\n{pad}}}"
    if isinstance(s, ProbBranch):
        left = pp_stmt(s.left, indent + 1, annots, path + (0,))
        right = pp_stmt(s.right, indent + 1, annots, path + (1,))
        return f"{note}{pad}prob({s.p}) {{\n{left}\n{pad}}} else {{\n{right}\n{pad}}}"
    if isinstance(s, IfThenElse):
        then = pp_stmt(s.then, indent + 1, annots, path + (0,))
        if isinstance(s.orelse, Skip):
            return f"{note}{pad}if {pp_cond(s.cond)} {{\n{then}\n{pad}}}"
        orelse = pp_stmt(s.orelse, indent + 1, annots, path + (1,))
        return f"{note}{pad}if {pp_cond(s.cond)} {{\n{then}\n{pad}}} else {{\n{orelse}\n{pad}}}"
    raise TypeError(f"not a statement: {s!r}")
