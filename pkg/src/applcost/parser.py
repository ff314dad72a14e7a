"""Lexer, parser and validator for `.appl` source files.

Concrete syntax (see README for a tour):

    vars x, d, t;
    {# pre: d > 0 #}
    {# spec rdwalk : {d > 0 and x <= d + 2 ; 2*(d - x) + 4} -> {tt ; 0} #}
    func rdwalk() {
        if x < d {
            t ~ uniform(-1, 2);
            x := x + t;
            call rdwalk;
            tick(1)
        }
    }
    func main() { x := 0; call rdwalk }

Annotations ride in `{# ... #}` structured comments so the plain program
stays runnable with annotations stripped: `{# pre: G #}` fixes the
program precondition, `{# spec f : {G ; Q} -> {G' ; Q'} #}` declares a
function specification, `{# G ; Q #}` immediately before a `while` is
its loop invariant, and `{# weaken: G ; Q #}` before any statement marks
an explicit weakening seam.  Rational literals only: integers, decimal
fractions, and ratios `a/b`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional

from .contexts import (EQ, GE, GT, AnnotationSet, Atom, FuncSpec,
                       LogicalContext, TT_CTX)
from .polynomials import Poly
from .syntax import (SKIP, Add, Assign, Call, Cond, Const, DiscreteFinite,
                     Dist, Expr, IfThenElse, Le, Mul, Not, Path, ProbBranch,
                     Program, Sample, Seq, Site, Skip, Stmt, Tick, TrueCond,
                     Uniform, Var, While, lt, neg, pp_cond, pp_dist, pp_expr,
                     pp_stmt, site_str, sub, walk)

KEYWORDS = {
    "vars", "func", "skip", "tick", "call", "while", "prob", "if", "else",
    "not", "and", "tt", "uniform", "discrete", "pre", "spec", "weaken",
}

_SYMBOLS = ("->", ":=", "<=", ">=", "==", "~", "<", ">", "=", "(", ")", "{",
            "}", ",", ";", ":", "+", "-", "*", "/", "^")


@dataclass(frozen=True)
class Diagnostic:
    """A reported problem; renders as file:line:col: message."""

    file: str
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "number" | "symbol" | "annot" | "eof"
    text: str
    line: int
    col: int


def _lex(source: str, filename: str, line: int = 1, col: int = 1) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(source)

    def err(msg: str) -> ParseError:
        return ParseError(Diagnostic(filename, line, col, msg))

    def advance(text: str) -> None:
        nonlocal line, col
        for ch in text:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(ch)
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            j = n if j < 0 else j
            advance(source[i:j])
            i = j
            continue
        if source.startswith("{#", i):
            j = source.find("#}", i + 2)
            if j < 0:
                raise err("unterminated annotation comment '{#'")
            tokens.append(Token("annot", source[i + 2:j], line, col))
            advance(source[i:j + 2])
            i = j + 2
            continue
        m = re.match(r"[A-Za-z_][A-Za-z_0-9]*", source[i:])
        if m:
            tokens.append(Token("ident", m.group(0), line, col))
            advance(m.group(0))
            i += m.end()
            continue
        m = re.match(r"[0-9]+(\.[0-9]+)?", source[i:])
        if m:
            tokens.append(Token("number", m.group(0), line, col))
            advance(m.group(0))
            i += m.end()
            continue
        sym = next((s for s in _SYMBOLS if source.startswith(s, i)), None)
        if sym is not None:
            tokens.append(Token("symbol", sym, line, col))
            advance(sym)
            i += len(sym)
            continue
        raise err(f"unexpected character {ch!r}")
    tokens.append(Token("eof", "", line, col))
    return tokens


@dataclass
class ParseResult:
    """A parsed program with its annotations and source positions."""

    program: Program
    annotations: AnnotationSet
    positions: dict[Site, tuple[int, int]]
    filename: str
    source: str


_PendingAnn = tuple  # ("inv"|"weaken", LogicalContext, Poly, Token)


class _Parser:
    def __init__(self, tokens: list[Token], filename: str):
        self.tokens = tokens
        self.pos = 0
        self.filename = filename

    # token plumbing --------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_symbol(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "symbol" and t.text == text

    def at_ident(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == text

    def expect_symbol(self, text: str) -> Token:
        if not self.at_symbol(text):
            raise self.error(f"expected {text!r}, found {self.peek().text!r}")
        return self.next()

    def expect_keyword(self, word: str) -> Token:
        if not self.at_ident(word):
            raise self.error(f"expected {word!r}, found {self.peek().text!r}")
        return self.next()

    def expect_name(self) -> Token:
        t = self.peek()
        if t.kind != "ident" or t.text in KEYWORDS:
            raise self.error(f"expected an identifier, found {t.text!r}")
        return self.next()

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(Diagnostic(self.filename, tok.line, tok.col, message))

    # literals ----------------------------------------------------------------

    def rational(self) -> Fraction:
        """Signed rational literal: 3, -3, 0.5, 5/4, -5/4."""
        sign = 1
        while self.at_symbol("-"):
            self.next()
            sign = -sign
        t = self.peek()
        if t.kind != "number":
            raise self.error(f"expected a number, found {t.text!r}")
        self.next()
        value = Fraction(t.text)
        if self.at_symbol("/"):
            self.next()
            denom = self.peek()
            if denom.kind != "number" or "." in denom.text:
                raise self.error("expected an integer denominator")
            self.next()
            if int(denom.text) == 0:
                raise self.error("zero denominator", denom)
            value = value / int(denom.text)
        return sign * value


# ---------------------------------------------------------------------------
# expressions and conditions (program syntax)


def _parse_expr(p: _Parser, declared: set[str] | None) -> Expr:
    return _parse_additive(p, declared)


def _parse_additive(p: _Parser, declared) -> Expr:
    e = _parse_multiplicative(p, declared)
    while p.at_symbol("+") or p.at_symbol("-"):
        op = p.next().text
        rhs = _parse_multiplicative(p, declared)
        e = Add(e, rhs) if op == "+" else sub(e, rhs)
    return e


def _parse_multiplicative(p: _Parser, declared) -> Expr:
    e = _parse_unary(p, declared)
    while True:
        if p.at_symbol("*"):
            p.next()
            e = Mul(e, _parse_unary(p, declared))
        elif p.at_symbol("/"):
            tok = p.peek()
            p.next()
            d = p.peek()
            if not isinstance(e, Const) or d.kind != "number":
                raise p.error("'/' is only allowed between numeric literals", tok)
            p.next()
            if "." in d.text or int(d.text) == 0:
                raise p.error("expected a nonzero integer denominator", d)
            e = Const(e.value / int(d.text))
        else:
            return e


def _parse_unary(p: _Parser, declared) -> Expr:
    if p.at_symbol("-"):
        p.next()
        e = _parse_unary(p, declared)
        return neg(e)
    return _parse_atom(p, declared)


def _parse_atom(p: _Parser, declared) -> Expr:
    t = p.peek()
    if t.kind == "number":
        p.next()
        return Const(Fraction(t.text))
    if t.kind == "ident" and t.text not in KEYWORDS:
        p.next()
        if declared is not None and t.text not in declared:
            raise p.error(f"unbound variable {t.text!r}", t)
        return Var(t.text)
    if p.at_symbol("("):
        p.next()
        e = _parse_additive(p, declared)
        p.expect_symbol(")")
        return e
    raise p.error(f"expected an expression, found {t.text!r}")


_COMPARISONS = ("<=", ">=", "<", ">")


def _parse_cond(p: _Parser, declared) -> Cond:
    c = _parse_cond_atom(p, declared)
    while p.at_ident("and"):
        p.next()
        c = _make_and(c, _parse_cond_atom(p, declared))
    return c


def _make_and(a: Cond, b: Cond) -> Cond:
    from .syntax import And
    return And(a, b)


def _parse_cond_atom(p: _Parser, declared) -> Cond:
    if p.at_ident("tt"):
        p.next()
        return TrueCond()
    if p.at_ident("not"):
        p.next()
        return Not(_parse_cond_atom(p, declared))
    if p.at_symbol("("):
        # could be parenthesized condition or parenthesized expression
        mark = p.pos
        try:
            p.next()
            c = _parse_cond(p, declared)
            p.expect_symbol(")")
            return c
        except ParseError:
            p.pos = mark
    lhs = _parse_additive(p, declared)
    t = p.peek()
    if t.kind != "symbol" or t.text not in _COMPARISONS:
        raise p.error(f"expected a comparison, found {t.text!r}")
    p.next()
    rhs = _parse_additive(p, declared)
    if t.text == "<=":
        return Le(lhs, rhs)
    if t.text == ">=":
        return Le(rhs, lhs)
    if t.text == "<":
        return lt(lhs, rhs)
    return Not(Le(lhs, rhs))  # a > b


def _parse_dist(p: _Parser) -> Dist:
    t = p.peek()
    if p.at_ident("uniform"):
        p.next()
        p.expect_symbol("(")
        a = p.rational()
        p.expect_symbol(",")
        b = p.rational()
        p.expect_symbol(")")
        if not a < b:
            raise p.error(f"uniform requires a < b, got [{a}, {b}]", t)
        return Uniform(a, b)
    if p.at_ident("discrete"):
        p.next()
        p.expect_symbol("(")
        items: list[tuple[Fraction, Fraction]] = []
        while True:
            v = p.rational()
            p.expect_symbol(":")
            prob = p.rational()
            if prob < 0 or prob > 1:
                raise p.error(f"probability {prob} outside [0, 1]", t)
            items.append((v, prob))
            if p.at_symbol(","):
                p.next()
                continue
            break
        p.expect_symbol(")")
        total = sum(pr for _, pr in items)
        if total != 1:
            raise p.error(f"discrete probabilities sum to {total}, not 1", t)
        return DiscreteFinite(tuple(items))
    raise p.error(f"expected a distribution, found {t.text!r}")


# ---------------------------------------------------------------------------
# annotation payloads (polynomials and contexts)


def _parse_poly(p: _Parser, declared) -> Poly:
    e = _parse_poly_term(p, declared)
    while p.at_symbol("+") or p.at_symbol("-"):
        op = p.next().text
        rhs = _parse_poly_term(p, declared)
        e = e + rhs if op == "+" else e - rhs
    return e


def _parse_poly_term(p: _Parser, declared) -> Poly:
    e = _parse_poly_factor(p, declared)
    while True:
        if p.at_symbol("*"):
            p.next()
            e = e * _parse_poly_factor(p, declared)
        elif p.at_symbol("/"):
            tok = p.next()
            d = p.peek()
            if d.kind != "number" or "." in d.text or int(d.text) == 0:
                raise p.error("expected a nonzero integer denominator", tok)
            p.next()
            e = e * Fraction(1, int(d.text))
        else:
            return e


def _parse_poly_factor(p: _Parser, declared) -> Poly:
    if p.at_symbol("-"):
        p.next()
        return -_parse_poly_factor(p, declared)
    t = p.peek()
    if t.kind == "number":
        p.next()
        base = Poly.constant(Fraction(t.text))
    elif t.kind == "ident" and t.text not in KEYWORDS:
        p.next()
        if declared is not None and t.text not in declared:
            raise p.error(f"unbound variable {t.text!r}", t)
        base = Poly.var(t.text)
    elif p.at_symbol("("):
        p.next()
        base = _parse_poly(p, declared)
        p.expect_symbol(")")
    else:
        raise p.error(f"expected a polynomial, found {t.text!r}")
    if p.at_symbol("^"):
        p.next()
        etok = p.peek()
        if etok.kind != "number" or "." in etok.text:
            raise p.error("expected an integer exponent")
        p.next()
        base = base ** int(etok.text)
    return base


_CTX_RELS = ("<=", ">=", "<", ">", "==", "=")


def _parse_ctx(p: _Parser, declared) -> LogicalContext:
    if p.at_ident("tt"):
        p.next()
        atoms: list[Atom] = []
    else:
        atoms = [_parse_ctx_atom(p, declared)]
    while p.at_ident("and"):
        p.next()
        atoms.append(_parse_ctx_atom(p, declared))
    return LogicalContext(tuple(atoms))


def _parse_ctx_atom(p: _Parser, declared) -> Atom:
    lhs = _parse_poly(p, declared)
    t = p.peek()
    if t.kind != "symbol" or t.text not in _CTX_RELS:
        raise p.error(f"expected a comparison in context, found {t.text!r}")
    p.next()
    rhs = _parse_poly(p, declared)
    if t.text == ">=":
        return Atom(lhs - rhs, GE)
    if t.text == ">":
        return Atom(lhs - rhs, GT)
    if t.text == "<=":
        return Atom(rhs - lhs, GE)
    if t.text == "<":
        return Atom(rhs - lhs, GT)
    return Atom(lhs - rhs, EQ)


def parse_poly_text(text: str, declared: set[str] | None = None) -> Poly:
    """Parse a standalone polynomial like ``2*(d - x) + 4``."""
    p = _Parser(_lex(text, "<poly>"), "<poly>")
    poly = _parse_poly(p, declared)
    if p.peek().kind != "eof":
        raise p.error(f"trailing input {p.peek().text!r}")
    return poly


def parse_context_text(text: str, declared: set[str] | None = None) -> LogicalContext:
    """Parse a standalone context like ``d > 0 and x <= d + 2``."""
    p = _Parser(_lex(text, "<ctx>"), "<ctx>")
    ctx = _parse_ctx(p, declared)
    if p.peek().kind != "eof":
        raise p.error(f"trailing input {p.peek().text!r}")
    return ctx


# ---------------------------------------------------------------------------
# statements


def _seq_paths(count: int) -> list[Path]:
    """Paths of the elements of a right-nested sequence of `count` items."""
    if count == 1:
        return [()]
    return [(1,) * i + ((0,) if i < count - 1 else ()) for i in range(count)]


def _parse_block(p: _Parser, declared: set[str], fids: set[str]
                 ) -> tuple[Stmt, list[tuple[Path, _PendingAnn]], dict[Path, Token]]:
    p.expect_symbol("{")
    items: list[tuple[Stmt, list[tuple[Path, _PendingAnn]], dict[Path, Token], Token]] = []
    while not p.at_symbol("}"):
        pending: list[_PendingAnn] = []
        while p.peek().kind == "annot":
            tok = p.next()
            pending.append(_parse_stmt_annotation(p, tok, declared))
        start = p.peek()
        stmt, anns, toks = _parse_stmt(p, declared, fids)
        for ann in pending:
            if ann[0] == "inv" and not isinstance(stmt, While):
                raise p.error("loop invariant annotation must precede a while loop",
                              ann[3])
            anns = [((), ann)] + anns
        toks = {(): start, **toks}
        items.append((stmt, anns, toks, start))
        if p.at_symbol(";"):
            p.next()
        elif not p.at_symbol("}"):
            raise p.error(f"expected ';' or '}}', found {p.peek().text!r}")
    p.expect_symbol("}")
    if not items:
        return SKIP, [], {}
    if len(items) == 1:
        stmt, anns, toks, _ = items[0]
        return stmt, anns, toks
    from .syntax import seq_of
    stmts = [it[0] for it in items]
    block = seq_of(stmts)
    bases = _seq_paths(len(items))
    anns: list[tuple[Path, _PendingAnn]] = []
    toks: dict[Path, Token] = {}
    for base, (_, sub_anns, sub_toks, _) in zip(bases, items):
        anns.extend((base + rel, ann) for rel, ann in sub_anns)
        toks.update({base + rel: t for rel, t in sub_toks.items()})
    return block, anns, toks


def _parse_stmt(p: _Parser, declared: set[str], fids: set[str]
                ) -> tuple[Stmt, list[tuple[Path, _PendingAnn]], dict[Path, Token]]:
    t = p.peek()
    if p.at_ident("skip"):
        p.next()
        return SKIP, [], {}
    if p.at_ident("tick"):
        p.next()
        p.expect_symbol("(")
        c = p.rational()
        p.expect_symbol(")")
        return Tick(c), [], {}
    if p.at_ident("call"):
        p.next()
        name = p.expect_name()
        if name.text not in fids:
            raise p.error(f"unbound function {name.text!r}", name)
        return Call(name.text), [], {}
    if p.at_ident("while"):
        p.next()
        cond = _parse_cond(p, declared)
        body, anns, toks = _parse_block(p, declared, fids)
        return (While(cond, body),
                [((0,) + rel, a) for rel, a in anns],
                {(0,) + rel: tk for rel, tk in toks.items()})
    if p.at_ident("prob"):
        p.next()
        p.expect_symbol("(")
        prob = p.rational()
        if prob < 0 or prob > 1:
            raise p.error(f"branch probability {prob} outside [0, 1]", t)
        p.expect_symbol(")")
        left, lann, ltok = _parse_block(p, declared, fids)
        if p.at_ident("else"):
            p.next()
        right, rann, rtok = _parse_block(p, declared, fids)
        anns = [((0,) + rel, a) for rel, a in lann] + [((1,) + rel, a) for rel, a in rann]
        toks = {(0,) + rel: tk for rel, tk in ltok.items()}
        toks.update({(1,) + rel: tk for rel, tk in rtok.items()})
        return ProbBranch(prob, left, right), anns, toks
    if p.at_ident("if"):
        p.next()
        cond = _parse_cond(p, declared)
        then, tann, ttok = _parse_block(p, declared, fids)
        orelse: Stmt = SKIP
        eann: list[tuple[Path, _PendingAnn]] = []
        etok: dict[Path, Token] = {}
        if p.at_ident("else"):
            p.next()
            orelse, eann, etok = _parse_block(p, declared, fids)
        anns = [((0,) + rel, a) for rel, a in tann] + [((1,) + rel, a) for rel, a in eann]
        toks = {(0,) + rel: tk for rel, tk in ttok.items()}
        toks.update({(1,) + rel: tk for rel, tk in etok.items()})
        return IfThenElse(cond, then, orelse), anns, toks
    if t.kind == "ident" and t.text not in KEYWORDS:
        name = p.expect_name()
        if name.text not in declared:
            raise p.error(f"unbound variable {name.text!r}", name)
        if p.at_symbol(":="):
            p.next()
            return Assign(name.text, _parse_expr(p, declared)), [], {}
        if p.at_symbol("~"):
            p.next()
            return Sample(name.text, _parse_dist(p)), [], {}
        raise p.error(f"expected ':=' or '~' after {name.text!r}")
    raise p.error(f"expected a statement, found {t.text!r}")


def _parse_stmt_annotation(p: _Parser, tok: Token, declared: set[str]) -> _PendingAnn:
    """Parse the body of a `{# ... #}` that precedes a statement."""
    sub = _Parser(_lex(tok.text, p.filename, tok.line, tok.col + 2), p.filename)
    kind = "inv"
    if sub.at_ident("weaken"):
        sub.next()
        sub.expect_symbol(":")
        kind = "weaken"
    ctx = _parse_ctx(sub, declared)
    sub.expect_symbol(";")
    poly = _parse_poly(sub, declared)
    if sub.peek().kind != "eof":
        raise sub.error(f"trailing input in annotation: {sub.peek().text!r}")
    return (kind, ctx, poly, tok)


# ---------------------------------------------------------------------------
# top level


def parse(source: str, filename: str = "<string>") -> ParseResult:
    """Parse APPL source into a Program plus its AnnotationSet.

    Raises ParseError (carrying a file:line:col diagnostic) on syntax
    errors, unbound variables or functions, probabilities outside
    [0, 1], degenerate uniform bounds and discrete distributions whose
    probabilities do not sum to 1.
    """
    tokens = _lex(source, filename)
    p = _Parser(tokens, filename)

    declared: list[str] = []
    if p.at_ident("vars"):
        p.next()
        if not p.at_symbol(";"):
            declared.append(p.expect_name().text)
            while p.at_symbol(","):
                p.next()
                declared.append(p.expect_name().text)
        p.expect_symbol(";")
    declared_set = set(declared)

    # first pass over the remaining tokens to collect function names
    fids: set[str] = set()
    i = p.pos
    while i < len(tokens) - 1:
        if tokens[i].kind == "ident" and tokens[i].text == "func":
            name = tokens[i + 1]
            if name.kind == "ident" and name.text not in KEYWORDS:
                fids.add(name.text)
        i += 1
    fids.discard("main")

    precondition: LogicalContext | None = None
    specs: dict[str, list[FuncSpec]] = {}
    funcs: dict[str, Stmt] = {}
    main: Stmt | None = None
    loop_invs: dict[Site, tuple[LogicalContext, Poly]] = {}
    weakens: dict[Site, tuple[LogicalContext, Poly]] = {}
    positions: dict[Site, tuple[int, int]] = {}

    while p.peek().kind != "eof":
        if p.peek().kind == "annot":
            tok = p.next()
            sub = _Parser(_lex(tok.text, filename, tok.line, tok.col + 2), filename)
            if sub.at_ident("pre"):
                sub.next()
                sub.expect_symbol(":")
                if precondition is not None:
                    raise p.error("duplicate precondition annotation", tok)
                precondition = _parse_ctx(sub, declared_set)
            elif sub.at_ident("spec"):
                sub.next()
                fname = sub.expect_name()
                if fname.text not in fids:
                    raise sub.error(f"unbound function {fname.text!r} in spec", fname)
                sub.expect_symbol(":")
                sub.expect_symbol("{")
                pre_ctx = _parse_ctx(sub, declared_set)
                sub.expect_symbol(";")
                pre_q = _parse_poly(sub, declared_set)
                sub.expect_symbol("}")
                sub.expect_symbol("->")
                sub.expect_symbol("{")
                post_ctx = _parse_ctx(sub, declared_set)
                sub.expect_symbol(";")
                post_q = _parse_poly(sub, declared_set)
                sub.expect_symbol("}")
                specs.setdefault(fname.text, []).append(
                    FuncSpec(pre_ctx, pre_q, post_ctx, post_q))
            else:
                raise p.error("top-level annotation must be 'pre:' or 'spec'", tok)
            if sub.peek().kind != "eof":
                raise sub.error(f"trailing input in annotation: {sub.peek().text!r}")
            continue
        start = p.expect_keyword("func")
        name = p.expect_name()
        p.expect_symbol("(")
        p.expect_symbol(")")
        body, anns, toks = _parse_block(p, declared_set, fids)
        fid = name.text
        if fid in funcs or (fid == "main" and main is not None):
            raise p.error(f"duplicate function {fid!r}", name)
        if fid == "main":
            main = body
        else:
            funcs[fid] = body
        positions[(fid,)] = (start.line, start.col)
        for rel, tk in toks.items():
            positions[(fid, *rel)] = (tk.line, tk.col)
        for rel, (kind, ctx, poly, tok) in anns:
            site = (fid, *rel)
            target = loop_invs if kind == "inv" else weakens
            if site in target:
                raise p.error(f"duplicate annotation at {site_str(site)}", tok)
            target[site] = (ctx, poly)

    if main is None:
        eof = tokens[-1]
        raise ParseError(Diagnostic(filename, eof.line, eof.col,
                                    "program has no 'func main()'"))

    program = Program(funcs=funcs, main=main, vars=tuple(declared),
                      precondition=precondition or TT_CTX)
    annotations = AnnotationSet(
        specs={f: tuple(entries) for f, entries in specs.items()},
        loop_invariants=loop_invs,
        weaken_sites=weakens)
    return ParseResult(program, annotations, positions, filename, source)


def parse_file(path: str) -> ParseResult:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), path)


# ---------------------------------------------------------------------------
# validation


def validate(program: Program, annotations: AnnotationSet,
             filename: str = "<program>",
             positions: Mapping[Site, tuple[int, int]] | None = None
             ) -> list[Diagnostic]:
    """Structural checks beyond parsing; diagnostics are data, not errors.

    Reports: while loops without invariant annotations, annotations
    (specs, invariants, weaken marks) that reference undeclared
    variables, specs for unknown functions, unresolved call targets, and
    undeclared variables in statements.
    """
    out: list[Diagnostic] = []
    positions = positions or {}
    declared = set(program.vars)

    def diag(site: Site | None, message: str) -> None:
        line, col = positions.get(site, (0, 0)) if site else (0, 0)
        out.append(Diagnostic(filename, line, col, message))

    from .syntax import called_fids, stmt_vars
    for fid, body in program.bodies():
        for path, node in walk(body):
            site = (fid, *path)
            if isinstance(node, While) and site not in annotations.loop_invariants:
                diag(site, f"missing loop invariant annotation at {site_str(site)}")
            if isinstance(node, Call) and node.fid not in program.funcs:
                diag(site, f"unbound function {node.fid!r} at {site_str(site)}")
        undeclared = stmt_vars(body) - declared
        for v in sorted(undeclared):
            diag((fid,), f"unbound variable {v!r} in {fid}")

    for fid, entries in annotations.specs.items():
        if fid not in program.funcs:
            diag(None, f"spec for unknown function {fid!r}")
        for i, sp in enumerate(entries):
            bad = (sp.pre_ctx.variables() | sp.pre_q.variables()
                   | sp.post_ctx.variables() | sp.post_q.variables()) - declared
            for v in sorted(bad):
                diag(None, f"unbound variable {v!r} in spec {i} of {fid}")

    for label, table in (("invariant", annotations.loop_invariants),
                         ("weaken", annotations.weaken_sites)):
        for site, (ctx, poly) in table.items():
            fid = site[0]
            try:
                node = _stmt_at_site(program, site)
            except (KeyError, IndexError):
                diag(site, f"{label} annotation at unknown site {site_str(site)}")
                continue
            if label == "invariant" and not isinstance(node, While):
                diag(site, f"invariant annotation not on a loop at {site_str(site)}")
            bad = (ctx.variables() | poly.variables()) - declared
            for v in sorted(bad):
                diag(site, f"unbound variable {v!r} in {label} at {site_str(site)}")

    if isinstance(program.precondition, LogicalContext):
        bad = program.precondition.variables() - declared
        for v in sorted(bad):
            diag(None, f"unbound variable {v!r} in precondition")
    return out


def _stmt_at_site(program: Program, site: Site) -> Stmt:
    from .syntax import stmt_at
    return stmt_at(program.body_of(site[0]), tuple(site[1:]))


# ---------------------------------------------------------------------------
# program pretty printer (inverse of parse on ASTs)


def pretty_program(program: Program, annotations: AnnotationSet | None = None) -> str:
    annotations = annotations or AnnotationSet()
    lines: list[str] = []
    if program.vars:
        lines.append("vars " + ", ".join(program.vars) + ";")
    pre = program.precondition
    if isinstance(pre, LogicalContext) and not pre.is_true():
        lines.append(f"{{# pre: {pre.to_text()} #}}")
    for fid, entries in annotations.specs.items():
        for sp in entries:
            lines.append("{# " + sp.to_text(fid) + " #}")
    if lines:
        lines.append("")

    def render_func(fid: str, body: Stmt) -> None:
        notes: dict[Path, str] = {}
        for site, (ctx, poly) in annotations.loop_invariants.items():
            if site[0] == fid:
                notes[tuple(site[1:])] = f"{{# {ctx.to_text()} ; {poly.to_text()} #}}"
        for site, (ctx, poly) in annotations.weaken_sites.items():
            if site[0] == fid:
                notes[tuple(site[1:])] = f"{{# weaken: {ctx.to_text()} ; {poly.to_text()} #}}"
        lines.append(f"func {fid}() {{")
        if isinstance(body, Skip) and () not in notes:
            lines.append("}")
            lines.append("")
            return
        lines.append(pp_stmt(body, 1, notes, ()))
        lines.append("}")
        lines.append("")

    for fid, body in program.funcs.items():
        render_func(fid, body)
    render_func("main", program.main)
    return "\n".join(lines).rstrip() + "\n"
