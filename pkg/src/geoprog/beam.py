"""Hierarchical beam search over sub-programs, plus an exhaustive oracle.

The outer beam ranks (operator, operand-sequence) combinations per sub-program
step; each surviving hypothesis carries its own decoder snapshot, including
its cache rows.  An inner beam expands operand sequences for each candidate
operator.  Hypotheses that emit ``eop`` are frozen and re-enter the final
ranking; ties break deterministically by emission order.

Scores are per-step contributions accumulated over every emitted symbol
(operands' ``eos_operand`` and the final ``eop`` included, when stepped):
``sum_log_prob`` adds log probabilities, ``sum_prob`` adds the raw
probabilities.  The oracle enumerates every complete program with identical
step semantics, which makes beam-vs-oracle equivalence a pure pruning test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import JointRepresentation, PreprocessedProblem, encode
from .errors import GoldSymbolMasked, SpaceTooLarge
from .classifier import predict_mask
from .generator import (
    OE_MODE,
    OP_MODE,
    DecoderState,
    SubArtifacts,
    decode_step,
    feed,
    initial_state,
    update_cache,
)
from .program import SolutionProgram, SubProgram
from .registry import ProblemType, SymbolMask

SCORE_RULES = ("sum_log_prob", "sum_prob")


@dataclass
class BeamConfig:
    beam_size: int = 10
    score_rule: str = "sum_log_prob"

    def validate(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.score_rule not in SCORE_RULES:
            raise ValueError(f"score_rule must be one of {SCORE_RULES}")

    def contribution(self, p: float) -> float:
        return math.log(p) if self.score_rule == "sum_log_prob" else p


@dataclass
class _Hyp:
    subs: tuple[SubProgram, ...]
    score: float
    dec: DecoderState
    serial: int          # emission order, the deterministic tie-break


def _top_symbols(probs: np.ndarray, width: int) -> np.ndarray:
    """Ids of the highest-probability symbols, masked-out ones excluded.

    Stable ordering: equal probabilities resolve to the lower symbol id,
    matching greedy argmax.
    """
    order = np.argsort(-probs, kind="stable")
    order = order[probs[order] > 0.0]
    return order[:width]


def _operand_beam(state, rep, dec0, tmask, t, cfg):
    """Beam over one sub-program's operand sequence.

    Returns up to beam_size tuples (args, score_delta, dec, last_query) for
    completed sequences: either ``eos_operand`` was emitted or the operand
    limit was hit.  ``dec`` already has the terminating symbol fed.
    """
    max_oe = state.registry.max_oe
    eos = state.registry.eos_operand_id
    items = [((), 0.0, dec0, None)]
    complete = []
    for j in range(max_oe):
        grown = []
        for args, delta, dec, _lq in items:
            q, dist, dec2 = decode_step(state, rep, dec, tmask, OE_MODE, t, j)
            probs = dist.data[0]
            for sid in _top_symbols(probs, cfg.beam_size):
                c = delta + cfg.contribution(float(probs[sid]))
                if sid == eos:
                    complete.append((args, c, feed(dec2, sid), q))
                else:
                    grown.append((args + (int(sid),), c, feed(dec2, sid), q))
        grown.sort(key=lambda it: -it[1])
        items = grown[:cfg.beam_size]
        if not items:
            break
    complete.extend(items)  # operand-limit cut: no eos step, no eos contribution
    complete.sort(key=lambda it: -it[1])
    return complete[:cfg.beam_size]


def hbeam_decode(state, problem: PreprocessedProblem, cfg: BeamConfig,
                 rep: JointRepresentation | None = None,
                 type_override: ProblemType | None = None) -> list[tuple[SolutionProgram, float]]:
    """Ranked list of at most beam_size complete programs with their scores."""
    cfg.validate()
    r = state.registry
    if rep is None:
        rep = encode(state, problem)
    ptype, tmask = predict_mask(state, rep, problem, override=type_override)
    serial = 0
    active = [_Hyp((), 0.0, initial_state(state, rep, problem), serial)]
    finished: list[_Hyp] = []
    for t in range(r.max_op):
        if not active:
            break
        grown: list[_Hyp] = []
        for hyp in active:
            q_op, dist, dec_q = decode_step(state, rep, hyp.dec, tmask, OP_MODE, t)
            probs = dist.data[0]
            for op in _top_symbols(probs, cfg.beam_size):
                c = cfg.contribution(float(probs[op]))
                if op == r.eop_id:
                    serial += 1
                    finished.append(_Hyp(hyp.subs, hyp.score + c, dec_q, serial))
                    continue
                seqs = _operand_beam(state, rep, feed(dec_q, int(op)), tmask, t, cfg)
                for args, delta, dec_a, last_q in seqs:
                    dec_b = update_cache(state, dec_a, t,
                                         SubArtifacts(q_op, last_q, int(op)))
                    serial += 1
                    grown.append(_Hyp(hyp.subs + (SubProgram(int(op), args),),
                                      hyp.score + c + delta, dec_b, serial))
        grown.sort(key=lambda h: (-h.score, h.serial))
        active = grown[:cfg.beam_size]
    finished.extend(active)  # hit the sub-program limit: complete without eop
    finished.sort(key=lambda h: (-h.score, h.serial))
    return [(SolutionProgram(h.subs, ptype), h.score) for h in finished[:cfg.beam_size]]


def score_program(state, problem: PreprocessedProblem, program: SolutionProgram,
                  cfg: BeamConfig, rep: JointRepresentation | None = None) -> float:
    """Score of one program under forced decoding, with beam step semantics."""
    cfg.validate()
    r = state.registry
    if rep is None:
        rep = encode(state, problem)
    tmask = r.type_mask(program.problem_type.name, problem)
    dec = initial_state(state, rep, problem)
    total = 0.0

    def take(dist, sid):
        p = float(dist.data[0][sid])
        if p <= 0.0:
            raise GoldSymbolMasked(f"symbol id {sid} has zero probability here")
        return cfg.contribution(p)

    for t, sub in enumerate(program.subs):
        q_op, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, t)
        total += take(dist, sub.op)
        dec = feed(dec, sub.op)
        last_q = q_op
        for j, a in enumerate(sub.args):
            last_q, dist, dec = decode_step(state, rep, dec, tmask, OE_MODE, t, j)
            total += take(dist, a)
            dec = feed(dec, a)
        if len(sub.args) < r.max_oe:
            last_q, dist, dec = decode_step(state, rep, dec, tmask, OE_MODE, t, len(sub.args))
            total += take(dist, r.eos_operand_id)
            dec = feed(dec, r.eos_operand_id)
        dec = update_cache(state, dec, t, SubArtifacts(q_op, last_q, sub.op))
    if len(program.subs) < r.max_op:
        _, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, len(program.subs))
        total += take(dist, r.eop_id)
    return total


def exhaustive_oracle(state, problem: PreprocessedProblem, cfg: BeamConfig,
                      rep: JointRepresentation | None = None,
                      type_override: ProblemType | None = None,
                      space_bound: float = 1e6) -> list[tuple[SolutionProgram, float]]:
    """Rank every complete program by depth-first enumeration.

    Intended for tiny decode spaces; raises :class:`SpaceTooLarge` when the
    loose upper bound (operator candidates ** max_op times operand candidates
    ** (max_op * max_oe)) exceeds ``space_bound``.
    """
    cfg.validate()
    r = state.registry
    if rep is None:
        rep = encode(state, problem)
    ptype, tmask = predict_mask(state, rep, problem, override=type_override)

    n_dyn = len(tmask.allowed) - r.static_size
    n_op = sum(1 for sid in r.operator_ids if tmask.allowed[sid]) + 1  # + eop
    n_oe = (sum(1 for sid in r.constant_ids if tmask.allowed[sid])
            + len(r.cache_ids) + n_dyn + 1)  # + eos_operand
    if (n_op ** r.max_op) * (n_oe ** (r.max_op * r.max_oe)) > space_bound:
        raise SpaceTooLarge(f"{n_op} operator and {n_oe} operand candidates "
                            f"with max_op={r.max_op}, max_oe={r.max_oe}")

    out: list[tuple[SolutionProgram, float]] = []

    def finish(subs, score):
        out.append((SolutionProgram(subs, ptype), score))

    def operator_level(dec, t, subs, score):
        if t == r.max_op:
            finish(subs, score)
            return
        q_op, dist, dec_q = decode_step(state, rep, dec, tmask, OP_MODE, t)
        probs = dist.data[0]
        for op in np.flatnonzero(probs > 0.0):
            c = score + cfg.contribution(float(probs[op]))
            if op == r.eop_id:
                finish(subs, c)
            else:
                operand_level(feed(dec_q, int(op)), t, int(op), q_op, (), c, subs, 0)

    def operand_level(dec, t, op, q_op, args, score, subs, j):
        q, dist, dec2 = decode_step(state, rep, dec, tmask, OE_MODE, t, j)
        probs = dist.data[0]
        for sid in np.flatnonzero(probs > 0.0):
            c = score + cfg.contribution(float(probs[sid]))
            if sid == r.eos_operand_id:
                closed = update_cache(state, feed(dec2, int(sid)), t,
                                      SubArtifacts(q_op, q, op))
                operator_level(closed, t + 1, subs + (SubProgram(op, args),), c)
            else:
                new_args = args + (int(sid),)
                fed = feed(dec2, int(sid))
                if len(new_args) == r.max_oe:
                    closed = update_cache(state, fed, t, SubArtifacts(q_op, q, op))
                    operator_level(closed, t + 1, subs + (SubProgram(op, new_args),), c)
                else:
                    operand_level(fed, t, op, q_op, new_args, c, subs, j + 1)

    operator_level(initial_state(state, rep, problem), 0, (), 0.0)
    order = sorted(range(len(out)), key=lambda i: (-out[i][1], i))
    return [out[i] for i in order]
