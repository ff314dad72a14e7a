"""Compiled execution engine for trace simulation.

Programs are compiled to a flat instruction graph in which executing
one instruction is exactly one step of the operational semantics, so
step counts, stopping times, and per-step diagnostics agree with the
reference kernel in :mod:`applcost.semantics` configuration for
configuration.  Control state is a program counter plus a stack of
continuation frames (sequence joins and loop heads); function calls
jump into the callee body without pushing a frame, mirroring the
global-state call rule.

Randomness is counter-based: trace ``i`` under master seed ``s`` owns
an independent stream whose ``k``-th draw is a pure 64-bit hash of
``(s, i, k)``.  The scalar and vectorized runners therefore produce
bit-identical traces, and results do not depend on chunking or thread
count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .syntax import (SKIP, Assign, Call, Cond, DiscreteFinite, Dist, Expr,
                     IfThenElse, ProbBranch, Program, Sample, Seq, Site, Skip,
                     Stmt, Tick, Uniform, Var, While, Add, Const, Mul,
                     TrueCond, Not, And, Le)
from . import semantics
from .semantics import Configuration, Kloop, Kseq, KSTOP, Continuation

# ---------------------------------------------------------------------------
# counter-based random streams

_MASK = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_SALT_SEED = 0x165667B19E3779F9
_SALT_TRACE = 0xC2B2AE3D27D4EB4F
_U53 = 2.0 ** -53


def _finalize_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return (z ^ (z >> 31)) & _MASK


def stream_base(seed: int, trace_id: int) -> int:
    h = _finalize_int(seed * _GOLD + _SALT_SEED)
    return _finalize_int(h ^ ((trace_id * _SALT_TRACE + 1) & _MASK))


class Stream:
    """Per-trace deterministic unit-interval generator (scalar side)."""

    __slots__ = ("base", "counter")

    def __init__(self, seed: int, trace_id: int = 0):
        self.base = stream_base(seed, trace_id)
        self.counter = 0

    def random(self) -> float:
        v = _finalize_int(self.base + self.counter * _GOLD)
        self.counter += 1
        return (v >> 11) * _U53


def _finalize_vec(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


def stream_base_vec(seed: int, trace_ids: np.ndarray) -> np.ndarray:
    h = np.uint64(_finalize_int(seed * _GOLD + _SALT_SEED))
    z = trace_ids.astype(np.uint64) * np.uint64(_SALT_TRACE) + np.uint64(1)
    return _finalize_vec(h ^ z)


def draw_vec(base: np.ndarray, counter: np.ndarray) -> np.ndarray:
    v = _finalize_vec(base + counter * np.uint64(_GOLD))
    return (v >> np.uint64(11)).astype(np.float64) * _U53


# ---------------------------------------------------------------------------
# instructions

HALT_PC = 0
COMPLETE = -1  # jump target: pop nothing, continue at the top of the stack

K_HALT, K_TICK, K_ASSIGN, K_SAMPLE, K_CALL, K_SEQ, K_JOIN, K_LOOPENTER, \
    K_LOOPHEAD, K_PROB, K_COND = range(11)

_KIND_NAMES = ["halt", "tick", "assign", "sample", "call", "seq", "join",
               "loop-enter", "loop-head", "prob", "cond"]


@dataclass
class Instr:
    kind: int
    site: Site                      # statement site this instruction realizes
    stmt: Stmt                      # AST node for reconstruction (SKIP at joins)
    cost: Fraction = Fraction(0)    # tick
    var: int = -1                   # assign/sample target column
    expr: Optional[Expr] = None     # assign rhs
    dist: Optional[Dist] = None     # sample distribution
    p: Fraction = Fraction(0)       # prob weight
    a: int = COMPLETE               # primary jump target
    b: int = COMPLETE               # secondary jump target
    join: int = COMPLETE            # frame pushed by seq/loop-enter
    cond: Optional[Cond] = None     # loop-head / cond guard
    frame: Fraction = Fraction(0)   # call frame constant (annotated runs)
    cont_stmt: Optional[Stmt] = None    # join: the statement it resumes
    cont_loop: Optional[While] = None   # loop-head: its loop

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES[self.kind]


@dataclass
class CompiledProgram:
    program: Program
    instrs: list[Instr]
    var_index: dict[str, int]
    var_names: tuple[str, ...]
    entries: dict[str, int]         # function id -> body entry pc (COMPLETE if skip)
    entry_main: int
    site_entry: dict[Site, int]     # statement site -> entry pc

    @property
    def has_calls(self) -> bool:
        return any(i.kind == K_CALL for i in self.instrs)

    def describe(self, pc: int) -> str:
        ins = self.instrs[pc]
        from .syntax import site_str
        return f"pc {pc} ({ins.kind_name} at {site_str(ins.site)})"


def compile_program(program: Program) -> CompiledProgram:
    var_names = tuple(program.vars)
    var_index = {v: i for i, v in enumerate(var_names)}
    instrs: list[Instr] = [Instr(K_HALT, ("main",), SKIP)]
    site_entry: dict[Site, int] = {}

    def emit(ins: Instr) -> int:
        instrs.append(ins)
        return len(instrs) - 1

    def compile_stmt(s: Stmt, site: Site) -> int:
        """Entry pc of s, or COMPLETE when s is skip."""
        if isinstance(s, Skip):
            return COMPLETE
        if isinstance(s, Tick):
            pc = emit(Instr(K_TICK, site, s, cost=s.cost))
        elif isinstance(s, Assign):
            pc = emit(Instr(K_ASSIGN, site, s, var=var_index[s.var], expr=s.expr))
        elif isinstance(s, Sample):
            pc = emit(Instr(K_SAMPLE, site, s, var=var_index[s.var], dist=s.dist))
        elif isinstance(s, Call):
            pc = emit(Instr(K_CALL, site, s))
        elif isinstance(s, Seq):
            second = compile_stmt(s.second, site + (1,))
            join = emit(Instr(K_JOIN, site + (1,), SKIP, a=second,
                              cont_stmt=s.second))
            first = compile_stmt(s.first, site + (0,))
            pc = emit(Instr(K_SEQ, site, s, a=first if first != COMPLETE else join,
                            join=join))
        elif isinstance(s, While):
            head = emit(Instr(K_LOOPHEAD, site, SKIP, cond=s.cond, cont_loop=s))
            body = compile_stmt(s.body, site + (0,))
            instrs[head].a = body if body != COMPLETE else head
            pc = emit(Instr(K_LOOPENTER, site, s, a=head, join=head))
        elif isinstance(s, ProbBranch):
            left = compile_stmt(s.left, site + (0,))
            right = compile_stmt(s.right, site + (1,))
            pc = emit(Instr(K_PROB, site, s, p=s.p, a=left, b=right))
        elif isinstance(s, IfThenElse):
            then = compile_stmt(s.then, site + (0,))
            orelse = compile_stmt(s.orelse, site + (1,))
            pc = emit(Instr(K_COND, site, s, cond=s.cond, a=then, b=orelse))
        else:
            raise TypeError(f"not a statement: {s!r}")
        site_entry[site] = pc
        return pc

    entries: dict[str, int] = {}
    for fid, body in program.bodies():
        entries[fid] = compile_stmt(body, (fid,))
    for ins in instrs:
        if ins.kind == K_CALL:
            ins.a = entries[ins.stmt.fid]
    return CompiledProgram(program, instrs, var_index, var_names, entries,
                           entries["main"], site_entry)


# ---------------------------------------------------------------------------
# expression / condition compilation (vector and scalar share shapes)


# vectorized evaluators operate on (matrix, row-indices)


def _vec_expr(e: Expr, var_index) -> Callable:
    if isinstance(e, Var):
        i = var_index[e.name]
        return lambda m, idx: m[idx, i]
    if isinstance(e, Const):
        c = float(e.value)
        return lambda m, idx: c
    if isinstance(e, Add):
        f, g = _vec_expr(e.left, var_index), _vec_expr(e.right, var_index)
        return lambda m, idx: f(m, idx) + g(m, idx)
    if isinstance(e, Mul):
        f, g = _vec_expr(e.left, var_index), _vec_expr(e.right, var_index)
        return lambda m, idx: f(m, idx) * g(m, idx)
    raise TypeError(f"not an expression: {e!r}")


def _vec_cond(c: Cond, var_index) -> Callable:
    if isinstance(c, TrueCond):
        return lambda m, idx: np.ones(len(idx), dtype=bool)
    if isinstance(c, Not):
        f = _vec_cond(c.body, var_index)
        return lambda m, idx: ~f(m, idx)
    if isinstance(c, And):
        f, g = _vec_cond(c.left, var_index), _vec_cond(c.right, var_index)
        return lambda m, idx: f(m, idx) & g(m, idx)
    if isinstance(c, Le):
        f, g = _vec_expr(c.left, var_index), _vec_expr(c.right, var_index)
        return lambda m, idx: np.less_equal(f(m, idx) + np.zeros(len(idx)),
                                            g(m, idx) + np.zeros(len(idx)))
    raise TypeError(f"not a condition: {c!r}")


def _discrete_tables(d: DiscreteFinite) -> tuple[np.ndarray, np.ndarray]:
    cum: list[float] = []
    acc = 0.0
    for _, prob in d.items:
        acc += float(prob)
        cum.append(acc)
    values = np.array([float(v) for v, _ in d.items])
    return np.array(cum), values


# ---------------------------------------------------------------------------
# vectorized batch runner


@dataclass
class BatchResult:
    """Flat per-trace outcomes of one simulated batch."""

    stop_time: np.ndarray       # int64; censored traces hold horizon + 1
    censored: np.ndarray        # bool
    cost: np.ndarray            # float64, accumulator at min(T, H)
    max_step_delta: np.ndarray  # float64 per variable, max |change| observed


class _VecOps:
    """Per-pc vectorized executors, prepared once per compiled program."""

    def __init__(self, cp: CompiledProgram):
        self.cp = cp
        self.expr = {}
        self.cond = {}
        self.disc = {}
        for pc, ins in enumerate(cp.instrs):
            if ins.kind == K_ASSIGN:
                self.expr[pc] = _vec_expr(ins.expr, cp.var_index)
            elif ins.kind in (K_LOOPHEAD, K_COND):
                self.cond[pc] = _vec_cond(ins.cond, cp.var_index)
            elif ins.kind == K_SAMPLE and isinstance(ins.dist, DiscreteFinite):
                self.disc[pc] = _discrete_tables(ins.dist)


def run_batch(cp: CompiledProgram, seed: int, first_trace: int, n_traces: int,
              horizon: int, overrides: Mapping[str, float] | None = None,
              ops: _VecOps | None = None) -> BatchResult:
    """Advance ``n_traces`` independent traces up to ``horizon`` steps."""
    ops = ops or _VecOps(cp)
    instrs = cp.instrs
    nvars = len(cp.var_names)
    ids = np.arange(first_trace, first_trace + n_traces, dtype=np.uint64)

    vars_ = np.zeros((n_traces, nvars))
    for name, value in (overrides or {}).items():
        vars_[:, cp.var_index[name]] = float(value)
    cost = np.zeros(n_traces)
    base = stream_base_vec(seed, ids)
    ctr = np.zeros(n_traces, dtype=np.uint64)
    pc = np.full(n_traces, cp.entry_main if cp.entry_main != COMPLETE else HALT_PC,
                 dtype=np.int64)
    depth = 16
    stack = np.zeros((n_traces, depth), dtype=np.int64)
    sp = np.ones(n_traces, dtype=np.int64)  # stack[...,0] = HALT sentinel

    out_T = np.zeros(n_traces, dtype=np.int64)
    out_cost = np.zeros(n_traces)
    out_censored = np.zeros(n_traces, dtype=bool)
    max_delta = np.zeros(nvars)
    rows = np.arange(n_traces)          # original trace row of each live slot
    live = pc != HALT_PC
    out_T[~live] = 0
    out_cost[~live] = 0.0
    keep = np.flatnonzero(live)
    vars_, cost, base, ctr, pc = (a[keep] for a in (vars_, cost, base, ctr, pc))
    stack, sp, rows = stack[keep], sp[keep], rows[keep]

    n = 0
    while n < horizon and len(pc):
        n += 1
        for pcval in np.unique(pc):
            ins = instrs[pcval]
            idx = np.flatnonzero(pc == pcval)
            kind = ins.kind
            if kind == K_TICK:
                cost[idx] += float(ins.cost)
                pc[idx] = stack[idx, sp[idx] - 1]
            elif kind == K_ASSIGN:
                new = ops.expr[pcval](vars_, idx) + np.zeros(len(idx))
                old = vars_[idx, ins.var]
                d = np.max(np.abs(new - old)) if len(idx) else 0.0
                if d > max_delta[ins.var]:
                    max_delta[ins.var] = d
                vars_[idx, ins.var] = new
                pc[idx] = stack[idx, sp[idx] - 1]
            elif kind == K_SAMPLE:
                u = draw_vec(base[idx], ctr[idx])
                ctr[idx] += np.uint64(1)
                if isinstance(ins.dist, Uniform):
                    a, b = float(ins.dist.a), float(ins.dist.b)
                    new = a + u * (b - a)
                else:
                    cum, values = ops.disc[pcval]
                    new = values[np.searchsorted(cum, u, side="right")]
                old = vars_[idx, ins.var]
                d = np.max(np.abs(new - old)) if len(idx) else 0.0
                if d > max_delta[ins.var]:
                    max_delta[ins.var] = d
                vars_[idx, ins.var] = new
                pc[idx] = stack[idx, sp[idx] - 1]
            elif kind == K_CALL:
                if ins.a == COMPLETE:
                    pc[idx] = stack[idx, sp[idx] - 1]
                else:
                    pc[idx] = ins.a
            elif kind == K_SEQ:
                if np.max(sp[idx]) >= stack.shape[1]:
                    stack = np.concatenate(
                        [stack, np.zeros_like(stack)], axis=1)
                stack[idx, sp[idx]] = ins.join
                sp[idx] += 1
                pc[idx] = ins.a
            elif kind == K_JOIN:
                sp[idx] -= 1
                if ins.a == COMPLETE:
                    pc[idx] = stack[idx, sp[idx] - 1]
                else:
                    pc[idx] = ins.a
            elif kind == K_LOOPENTER:
                if np.max(sp[idx]) >= stack.shape[1]:
                    stack = np.concatenate(
                        [stack, np.zeros_like(stack)], axis=1)
                stack[idx, sp[idx]] = ins.join
                sp[idx] += 1
                pc[idx] = ins.a
            elif kind == K_LOOPHEAD:
                taken = ops.cond[pcval](vars_, idx)
                tidx = idx[taken]
                fidx = idx[~taken]
                pc[tidx] = ins.a
                sp[fidx] -= 1
                pc[fidx] = stack[fidx, sp[fidx] - 1]
            elif kind == K_PROB:
                u = draw_vec(base[idx], ctr[idx])
                ctr[idx] += np.uint64(1)
                left = u < float(ins.p)
                lidx, ridx = idx[left], idx[~left]
                for part, target in ((lidx, ins.a), (ridx, ins.b)):
                    if target == COMPLETE:
                        pc[part] = stack[part, sp[part] - 1]
                    else:
                        pc[part] = target
            elif kind == K_COND:
                taken = ops.cond[pcval](vars_, idx)
                for part, target in ((idx[taken], ins.a), (idx[~taken], ins.b)):
                    if target == COMPLETE:
                        pc[part] = stack[part, sp[part] - 1]
                    else:
                        pc[part] = target
            else:
                raise AssertionError(f"unexpected instruction {ins.kind_name}")

        done = pc == HALT_PC
        if done.any():
            didx = np.flatnonzero(done)
            out_T[rows[didx]] = n
            out_cost[rows[didx]] = cost[didx]
            keep = np.flatnonzero(~done)
            if len(keep) < len(pc):
                vars_, cost, base, ctr, pc = (a[keep] for a in
                                              (vars_, cost, base, ctr, pc))
                stack, sp, rows = stack[keep], sp[keep], rows[keep]

    if len(pc):
        out_T[rows] = horizon + 1
        out_cost[rows] = cost
        out_censored[rows] = True
    return BatchResult(out_T, out_censored, out_cost, max_delta)


# ---------------------------------------------------------------------------
# scalar runner (shared control logic, python state)


@dataclass
class MachineState:
    """Scalar engine state; one step of the kernel per `step` call."""

    pc: int
    vars: list            # floats (or Fractions in exact mode)
    cost: object          # float or Fraction
    stack: list           # [(join_pc, frame)] with the HALT sentinel at [0]
    frame: object         # running call-frame constant (float or Fraction)

    def copy(self) -> "MachineState":
        return MachineState(self.pc, list(self.vars), self.cost,
                            list(self.stack), self.frame)

    def is_terminal(self) -> bool:
        return self.pc == HALT_PC


def initial_state(cp: CompiledProgram, overrides=None, exact: bool = False) -> MachineState:
    zero = Fraction(0) if exact else 0.0
    vars_ = [zero] * len(cp.var_names)
    for name, value in (overrides or {}).items():
        vars_[cp.var_index[name]] = Fraction(value) if exact else float(value)
    entry = cp.entry_main if cp.entry_main != COMPLETE else HALT_PC
    return MachineState(entry, vars_, zero, [(HALT_PC, zero)], zero)


def _eval_expr_list(e: Expr, vars_: list, var_index) -> object:
    if isinstance(e, Var):
        return vars_[var_index[e.name]]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Add):
        return (_eval_expr_list(e.left, vars_, var_index)
                + _eval_expr_list(e.right, vars_, var_index))
    if isinstance(e, Mul):
        return (_eval_expr_list(e.left, vars_, var_index)
                * _eval_expr_list(e.right, vars_, var_index))
    raise TypeError(f"not an expression: {e!r}")


def _eval_cond_list(c: Cond, vars_: list, var_index) -> bool:
    if isinstance(c, TrueCond):
        return True
    if isinstance(c, Not):
        return not _eval_cond_list(c.body, vars_, var_index)
    if isinstance(c, And):
        return (_eval_cond_list(c.left, vars_, var_index)
                and _eval_cond_list(c.right, vars_, var_index))
    if isinstance(c, Le):
        return (_eval_expr_list(c.left, vars_, var_index)
                <= _eval_expr_list(c.right, vars_, var_index))
    raise TypeError(f"not a condition: {c!r}")


def scalar_step(cp: CompiledProgram, st: MachineState, rng,
                exact: bool = False) -> None:
    """Advance the state by exactly one kernel step, in place."""
    ins = cp.instrs[st.pc]
    kind = ins.kind
    if kind == K_HALT:
        return
    if kind == K_TICK:
        st.cost = st.cost + (ins.cost if exact else float(ins.cost))
        st.pc, st.frame = st.stack[-1]
        return
    if kind == K_ASSIGN:
        value = _eval_expr_list(ins.expr, st.vars, cp.var_index)
        st.vars[ins.var] = value if exact else float(value)
        st.pc, st.frame = st.stack[-1]
        return
    if kind == K_SAMPLE:
        if exact and isinstance(ins.dist, DiscreteFinite):
            u = rng.random()
            acc = 0.0
            value = ins.dist.items[-1][0]
            for v, prob in ins.dist.items:
                acc += float(prob)
                if u < acc:
                    value = v
                    break
            st.vars[ins.var] = value
        else:
            drawn = semantics.sample_value(rng, ins.dist)
            st.vars[ins.var] = Fraction(drawn) if exact else drawn
        st.pc, st.frame = st.stack[-1]
        return
    if kind == K_CALL:
        if ins.a == COMPLETE:
            st.pc, st.frame = st.stack[-1]
        else:
            st.pc = ins.a
            st.frame = st.frame + (ins.frame if exact else float(ins.frame))
        return
    if kind == K_SEQ:
        st.stack.append((ins.join, st.frame))
        st.pc = ins.a
        return
    if kind == K_JOIN:
        st.stack.pop()
        if ins.a == COMPLETE:
            st.pc, st.frame = st.stack[-1]
        else:
            st.pc = ins.a
        return
    if kind == K_LOOPENTER:
        st.stack.append((ins.join, st.frame))
        st.pc = ins.a
        return
    if kind == K_LOOPHEAD:
        if _eval_cond_list(ins.cond, st.vars, cp.var_index):
            st.pc = ins.a
        else:
            st.stack.pop()
            st.pc, st.frame = st.stack[-1]
        return
    if kind == K_PROB:
        target = ins.a if rng.random() < float(ins.p) else ins.b
        if target == COMPLETE:
            st.pc, st.frame = st.stack[-1]
        else:
            st.pc = target
        return
    if kind == K_COND:
        target = ins.a if _eval_cond_list(ins.cond, st.vars, cp.var_index) else ins.b
        if target == COMPLETE:
            st.pc, st.frame = st.stack[-1]
        else:
            st.pc = target
        return
    raise AssertionError(f"unexpected instruction {ins.kind_name}")


# ---------------------------------------------------------------------------
# reconstruction: machine state -> reference configuration


def state_to_configuration(cp: CompiledProgram, st: MachineState) -> Configuration:
    """The reference-semantics configuration a machine state denotes."""
    cont: Continuation = KSTOP
    for join_pc, _frame in st.stack[1:]:
        ins = cp.instrs[join_pc]
        if ins.kind == K_JOIN:
            cont = Kseq(ins.cont_stmt, cont)
        elif ins.kind == K_LOOPHEAD:
            loop = ins.cont_loop
            cont = Kloop(loop.cond, loop.body, cont)
        else:
            raise AssertionError(f"bad frame {ins.kind_name}")
    ins = cp.instrs[st.pc]
    stmt = ins.stmt
    gamma = {name: st.vars[i] for name, i in cp.var_index.items()}
    return Configuration(gamma, stmt, cont, st.cost)
