"""Solution programs: a typed sequence of operator applications.

A program is a list of sub-programs; sub-program ``t`` may refer to earlier
results through cache tokens ``#j`` (``j < t``).  Programs are stored with
resolved symbol ids, so equality is alias-insensitive by construction
(the ``V_j`` spelling is folded into ``#j`` at lookup time).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from . import registry as reg
from .errors import (
    CacheTokenForwardReference,
    DivisionByZero,
    MalformedProgram,
    NonExecutableOperator,
    OperatorInArgPosition,
    Truncated,
    UnboundNumber,
)
from .registry import DslRegistry, ProblemType, SymbolId, SymbolTable


@dataclass(frozen=True)
class SubProgram:
    op: SymbolId
    args: tuple[SymbolId, ...]


@dataclass(frozen=True)
class SolutionProgram:
    subs: tuple[SubProgram, ...]
    problem_type: ProblemType


_OPERAND_KINDS = (reg.CONSTANT, reg.CACHE, reg.NUMBER, reg.ELEMENT)


def validate(program: SolutionProgram, table: SymbolTable) -> None:
    """Check structural invariants; raises a ProgramError subclass on violation."""
    r = table.registry
    if not 1 <= len(program.subs) <= r.max_op:
        raise MalformedProgram(f"program has {len(program.subs)} sub-programs, limit {r.max_op}")
    cache_base = {sid: j for j, sid in enumerate(r.cache_ids)}
    for t, sub in enumerate(program.subs):
        if table.kind(sub.op) != reg.OPERATOR:
            raise MalformedProgram(f"sub-program {t} head {table.surface(sub.op)!r} is not an operator")
        if not 1 <= len(sub.args) <= r.max_oe:
            raise MalformedProgram(f"sub-program {t} has {len(sub.args)} operands, limit {r.max_oe}")
        for a in sub.args:
            kind = table.kind(a)
            if kind == reg.OPERATOR:
                raise OperatorInArgPosition(table.surface(a))
            if kind not in _OPERAND_KINDS:
                raise MalformedProgram(f"{table.surface(a)!r} cannot appear as an operand")
            if kind == reg.CACHE and cache_base[a] >= t:
                raise CacheTokenForwardReference(table.surface(a))


def to_flat(program: SolutionProgram, table: SymbolTable) -> list[str]:
    """Serialize to surface tokens: op, operands, ``eos_operand`` per sub, final ``eop``."""
    out: list[str] = []
    for sub in program.subs:
        out.append(table.surface(sub.op))
        out.extend(table.surface(a) for a in sub.args)
        out.append(reg.EOS_OPERAND)
    out.append(reg.EOP)
    return out


def from_flat(tokens: list[str], table: SymbolTable, problem_type: ProblemType,
              tolerant: bool = False) -> SolutionProgram:
    """Parse surface tokens back into a program.

    Strict mode expects the exact :func:`to_flat` shape.  Tolerant mode also
    accepts legacy sequences without ``eos_operand`` / ``eop`` markers, cutting
    a sub-program at each operator token.
    """
    subs: list[SubProgram] = []
    op: SymbolId | None = None
    args: list[SymbolId] = []
    closed = True  # strict mode: operand list must be closed before the next operator

    def flush():
        nonlocal op, args
        if op is not None:
            if not args:
                raise MalformedProgram(f"operator {table.surface(op)!r} has no operands")
            subs.append(SubProgram(op, tuple(args)))
        op, args = None, []

    for tok in tokens:
        sid = table.lookup(tok)
        kind = table.kind(sid)
        if sid == table.registry.eop_id:
            flush()
            program = SolutionProgram(tuple(subs), problem_type)
            validate(program, table)
            return program
        if sid == table.registry.eos_operand_id:
            if op is None:
                raise MalformedProgram("eos_operand outside a sub-program")
            flush()
            closed = True
            continue
        if kind == reg.OPERATOR:
            if op is not None:
                if not tolerant and not closed:
                    raise OperatorInArgPosition(tok)
                flush()
            op = sid
            closed = False
            continue
        if op is None:
            raise MalformedProgram(f"operand {tok!r} before any operator")
        args.append(sid)

    if not tolerant:
        raise Truncated("token stream ended without eop")
    flush()
    program = SolutionProgram(tuple(subs), problem_type)
    validate(program, table)
    return program


def canonical_equal(a: SolutionProgram, b: SolutionProgram) -> bool:
    """Exact-match comparison over resolved symbol ids.

    Aliases were normalized at parse time; no algebraic identification
    (commutativity etc.) is attempted.  The problem-type tag is not compared.
    """
    return a.subs == b.subs


def operand_count_histogram(corpus) -> dict[int, int]:
    """Histogram of operand-list lengths over all sub-programs of a corpus."""
    counts = Counter()
    for program in corpus:
        for sub in program.subs:
            counts[len(sub.args)] += 1
    return dict(counts)


# --- execution of calculation programs ---

def _fold_div(vals):
    acc = vals[0]
    for v in vals[1:]:
        if v == 0.0:
            raise DivisionByZero()
        acc = acc / v
    return acc


_ARITH = {
    "add": lambda vals, pi: _fold_left(vals, lambda a, b: a + b),
    "sub": lambda vals, pi: _fold_left(vals, lambda a, b: a - b),
    "mul": lambda vals, pi: _fold_left(vals, lambda a, b: a * b),
    "div": lambda vals, pi: _fold_div(vals),
    "pow": lambda vals, pi: _fold_left(vals, lambda a, b: a ** b),
    "Circle_R_Area": lambda vals, pi: pi * vals[0] * vals[0],
    "sin_deg": lambda vals, pi: math.sin(vals[0] * pi / 180.0),
    "cos_deg": lambda vals, pi: math.cos(vals[0] * pi / 180.0),
}


def _fold_left(vals, f):
    acc = vals[0]
    for v in vals[1:]:
        acc = f(acc, v)
    return acc


def execute_cal(program: SolutionProgram, bindings: list[float], table: SymbolTable) -> float:
    """Evaluate a calculation program; the last sub-program's value is the answer.

    ``bindings`` supplies the numeric value of each ``N_j`` in index order.
    Only operators with arithmetic semantics are executable; proof-step
    operators raise :class:`NonExecutableOperator`.
    """
    r = table.registry
    cache_index = {sid: j for j, sid in enumerate(r.cache_ids)}
    pi = r.constant_value("C_pi", math.pi)
    results: list[float] = []
    for t, sub in enumerate(program.subs):
        fn = _ARITH.get(table.surface(sub.op))
        if fn is None:
            raise NonExecutableOperator(table.surface(sub.op))
        vals = []
        for a in sub.args:
            e = table.entry(a)
            if e.kind == reg.CONSTANT:
                vals.append(e.value)
            elif e.kind == reg.NUMBER:
                j = a - r.static_size
                if j >= len(bindings):
                    raise UnboundNumber(e.surface)
                vals.append(bindings[j])
            elif e.kind == reg.CACHE:
                j = cache_index[a]
                if j >= t:
                    raise CacheTokenForwardReference(e.surface)
                vals.append(results[j])
            else:
                raise UnboundNumber(f"{e.surface} has no numeric value")
        try:
            results.append(fn(vals, pi))
        except ZeroDivisionError:
            raise DivisionByZero() from None
    return results[-1]
