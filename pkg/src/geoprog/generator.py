"""Structured program generator with decoupled operator/operand decoding.

Two gated-recurrent cells with separate parameters drive generation: one for
operator positions, one for operand positions.  Only the active cell's hidden
state advances at a step, and both hidden states thread through the entire
decode.  Every step attends over the encoded problem (conditioned on the value
vector of the last emitted symbol), scores the value table, and masks the
distribution by problem type, position kind, and cache availability.

After each completed sub-program its cache token's value row is rewritten so
later sub-programs can reference the intermediate result; the vector written
is chosen by the configured cache-update strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import registry as reg
from .autodiff import Tensor, gru_step
from .autodiff.ops import (
    concat,
    gather_rows,
    linear,
    masked_softmax,
    matmul,
    relu,
    row,
    set_row,
    softmax,
    tile_rows,
)
from .classifier import predict_mask
from .encoder import JointRepresentation, PreprocessedProblem, element_value_vectors, encode
from .program import SolutionProgram, SubProgram
from .registry import ProblemType, SymbolId, SymbolMask

OP_MODE = "op"
OE_MODE = "oe"


@dataclass(frozen=True)
class DecoderState:
    """Immutable per-hypothesis decoder snapshot; steps return new instances."""

    h_op: Tensor
    h_oe: Tensor
    values: Tensor       # (static + dynamic, h) value table, post-projection
    keys: Tensor         # values @ w5.T, refreshed only when a cache row changes
    last: SymbolId       # source of the next step's previous-symbol value vector
    filled: int          # completed sub-programs == writable cache rows below this


@dataclass(frozen=True)
class SubArtifacts:
    """Vectors produced while decoding one sub-program, for the cache update."""

    op_query: Tensor
    last_operand_query: Tensor
    op_id: SymbolId


def initial_state(state, rep: JointRepresentation, problem: PreprocessedProblem) -> DecoderState:
    h = state.config.hidden
    zero = Tensor(np.zeros((1, h)))
    values = build_values(state, rep, problem)
    keys = linear(values, state.params["gen.w5"])
    return DecoderState(zero, zero, values, keys, state.registry.sos_id, 0)


def build_values(state, rep: JointRepresentation, problem: PreprocessedProblem) -> Tensor:
    """Project every symbol's source vector into the shared value space.

    Static symbols use their learned embeddings, except cache tokens, which
    start from the shared unfilled-cache embedding until their sub-program
    completes.  Dynamic symbols use the problem's contextualized vectors.
    """
    r = state.registry
    n_cache = len(r.cache_ids)
    n_plain = r.static_size - n_cache  # cache tokens sit at the end of the table
    parts = [
        gather_rows(state.params["gen.symbols"], list(range(n_plain))),
        tile_rows(state.params["gen.cache_init"], n_cache),
    ]
    parts.extend(element_value_vectors(rep, problem))
    return linear(concat(parts, axis=0), state.params["gen.w_v"])


def attention_pool(state, v_prev: Tensor, rep: JointRepresentation) -> Tensor:
    """Problem-aware context: attention over all rows, scored against v_prev."""
    s = linear(v_prev, state.params["gen.w3"])
    k = linear(rep.rows, state.params["gen.w4"])
    scores = linear(s, k)
    return matmul(softmax(scores), rep.rows)


def query_step(state, dec: DecoderState, rep: JointRepresentation,
               mode: str) -> tuple[Tensor, DecoderState]:
    """Advance the active mode's cell and return its query vector."""
    v_prev = row(dec.values, dec.last)
    p_aware = attention_pool(state, v_prev, rep)
    x = relu(linear(concat([p_aware, v_prev], axis=1), state.params["gen.w2"]))
    if mode == OP_MODE:
        q = gru_step(state.cell_op, x, dec.h_op)
        return q, replace(dec, h_op=q)
    q = gru_step(state.cell_oe, x, dec.h_oe)
    return q, replace(dec, h_oe=q)


def step_mask(state, type_mask: SymbolMask, table_size: int, mode: str,
              t: int, operand_index: int, filled: int) -> np.ndarray:
    """Combine the type mask with position-kind and cache-availability rules.

    Operator positions allow the type's operators, plus ``eop`` once at least
    one sub-program exists.  Operand positions allow constants, dynamics, and
    already-filled cache tokens, plus ``eos_operand`` once the operand list is
    non-empty (an empty program or empty operand list is never emittable).
    """
    r = state.registry
    allowed = np.zeros(table_size, dtype=bool)
    if mode == OP_MODE:
        for sid in r.operator_ids:
            allowed[sid] = True
        if t > 0:
            allowed[r.eop_id] = True
    else:
        for sid in r.constant_ids:
            allowed[sid] = True
        allowed[r.static_size:] = True
        for j in range(min(filled, len(r.cache_ids))):
            allowed[r.cache_ids[j]] = True
        if operand_index > 0:
            allowed[r.eos_operand_id] = True
    return allowed & type_mask.allowed


def symbol_distribution(state, q: Tensor, keys: Tensor, mask: np.ndarray) -> Tensor:
    """Masked distribution over the symbol table for one query."""
    logits = linear(q, keys)
    return masked_softmax(logits, mask, normalized=state.config.softmax_mode == "normalized")


def decode_step(state, rep: JointRepresentation, dec: DecoderState,
                type_mask: SymbolMask, mode: str, t: int,
                operand_index: int = 0) -> tuple[Tensor, Tensor, DecoderState]:
    """One full decode step: query, mask, distribution.  Selection is the caller's."""
    q, dec = query_step(state, dec, rep, mode)
    mask = step_mask(state, type_mask, dec.values.shape[0], mode, t,
                     operand_index, dec.filled)
    dist = symbol_distribution(state, q, dec.keys, mask)
    return q, dist, dec


def feed(dec: DecoderState, sid: SymbolId) -> DecoderState:
    """Record ``sid`` as the last emitted (or teacher-fed) symbol."""
    return replace(dec, last=sid)


def update_cache(state, dec: DecoderState, t: int, art: SubArtifacts) -> DecoderState:
    """Rewrite cache token ``#t``'s value row after sub-program ``t`` completes."""
    strategy = state.config.cache_strategy
    if strategy == "last_operand_query":
        chosen = art.last_operand_query
    elif strategy == "operator_query":
        chosen = art.op_query
    else:  # operator_embedding
        chosen = row(state.params["gen.symbols"], art.op_id)
    new_row = linear(chosen, state.params["gen.w_v"])
    cache_row = state.registry.cache_id(t)
    values = set_row(dec.values, cache_row, new_row)
    keys = set_row(dec.keys, cache_row, linear(new_row, state.params["gen.w5"]))
    return replace(dec, values=values, keys=keys, filled=t + 1)


def greedy_decode(state, problem: PreprocessedProblem,
                  rep: JointRepresentation | None = None,
                  type_override: ProblemType | None = None,
                  trace: list | None = None) -> SolutionProgram:
    """Argmax decoding: one operator then operands until ``eos_operand`` or the
    operand limit, sub-programs until ``eop`` or the sub-program limit."""
    r = state.registry
    if rep is None:
        rep = encode(state, problem)
    ptype, tmask = predict_mask(state, rep, problem, override=type_override)
    dec = initial_state(state, rep, problem)
    subs: list[SubProgram] = []
    for t in range(r.max_op):
        q, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, t)
        op = int(np.argmax(dist.data[0]))
        if trace is not None:
            trace.append((OP_MODE, t, op, dist.data[0].copy()))
        if op == r.eop_id:
            break
        dec = feed(dec, op)
        art_op_query = q
        args: list[SymbolId] = []
        last_q = q
        for j in range(r.max_oe):
            q, dist, dec = decode_step(state, rep, dec, tmask, OE_MODE, t, j)
            sid = int(np.argmax(dist.data[0]))
            if trace is not None:
                trace.append((OE_MODE, t, sid, dist.data[0].copy()))
            last_q = q
            dec = feed(dec, sid)
            if sid == r.eos_operand_id:
                break
            args.append(sid)
        subs.append(SubProgram(op, tuple(args)))
        dec = update_cache(state, dec, t,
                           SubArtifacts(art_op_query, last_q, op))
    return SolutionProgram(tuple(subs), ptype)
