"""Training objective, optimization loop, and evaluation.

The loss for one example combines the type classification log-likelihood, the
operator log-likelihoods averaged over operator steps, and the operand
log-likelihoods averaged per sub-program and then over sub-programs; the batch
loss is the example mean.  Termination symbols are real prediction targets:
``eos_operand`` whenever an operand list ends below the operand limit, ``eop``
whenever the program ends below the sub-program limit, mirroring exactly the
steps a free-running decode would take.

Teacher forcing is scheduled per epoch: the fed-in previous symbol is the gold
symbol with probability tf, otherwise the model's own argmax.  The schedule is
a step table over epochs, applied exactly as configured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor
from .autodiff.ops import add, log, pick, scale
from .beam import BeamConfig, hbeam_decode
from .classifier import classify, type_distribution
from .encoder import encode
from .errors import GoldSymbolMasked, NonFiniteLoss
from .generator import (
    OE_MODE,
    OP_MODE,
    SubArtifacts,
    decode_step,
    feed,
    greedy_decode,
    initial_state,
    update_cache,
)
from .program import SolutionProgram, canonical_equal

DEFAULT_SCHEDULE = ((10, 0.0), (20, 0.1), (30, 0.5), (40, 0.8), (100, 0.9))


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 40
    lr: float = 2e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    teacher_forcing: tuple = DEFAULT_SCHEDULE


def tf_prob(epoch: int, schedule=DEFAULT_SCHEDULE) -> float:
    """Gold-feeding probability for an epoch: step table, clamped past the end."""
    for threshold, p in schedule:
        if epoch < threshold:
            return p
    return schedule[-1][1]


def _mean(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return scale(total, 1.0 / len(terms))


def example_loss(state, problem, tf_p: float, rng) -> tuple[Tensor, dict]:
    """Differentiable loss for one problem with gold type and program."""
    r = state.registry
    gold = problem.gold_program
    rep = encode(state, problem)

    tdist = type_distribution(state, rep)
    if tdist.data[0, problem.problem_type.id] <= 0.0:
        raise GoldSymbolMasked(f"gold type {problem.problem_type.name} has zero probability")
    type_term = log(pick(tdist, 0, problem.problem_type.id))

    tmask = r.type_mask(problem.problem_type.name, problem)
    dec = initial_state(state, rep, problem)
    op_terms: list[Tensor] = []
    sub_means: list[Tensor] = []

    def gold_logprob(dist, sid, surface):
        if dist.data[0, sid] <= 0.0:
            raise GoldSymbolMasked(f"gold symbol {surface!r} is masked "
                                   f"(record {problem.uid or '<unnamed>'})")
        return log(pick(dist, 0, sid))

    def next_input(dist, sid):
        model_pick = int(np.argmax(dist.data[0]))
        return sid if rng.random() < tf_p else model_pick

    for t, sub in enumerate(gold.subs):
        q_op, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, t)
        op_terms.append(gold_logprob(dist, sub.op, r.surface(sub.op)))
        dec = feed(dec, next_input(dist, sub.op))
        last_q = q_op
        oe_terms: list[Tensor] = []
        for j, a in enumerate(sub.args):
            last_q, dist, dec = decode_step(state, rep, dec, tmask, OE_MODE, t, j)
            oe_terms.append(gold_logprob(dist, a, "operand"))
            dec = feed(dec, next_input(dist, a))
        if len(sub.args) < r.max_oe:
            last_q, dist, dec = decode_step(state, rep, dec, tmask, OE_MODE, t, len(sub.args))
            oe_terms.append(gold_logprob(dist, r.eos_operand_id, "eos_operand"))
            dec = feed(dec, next_input(dist, r.eos_operand_id))
        sub_means.append(_mean(oe_terms))
        dec = update_cache(state, dec, t, SubArtifacts(q_op, last_q, sub.op))
    if len(gold.subs) < r.max_op:
        _, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, len(gold.subs))
        op_terms.append(gold_logprob(dist, r.eop_id, "eop"))

    type_loss = scale(type_term, -1.0)
    op_loss = scale(_mean(op_terms), -1.0)
    oe_loss = scale(_mean(sub_means), -1.0)
    total = add(add(type_loss, op_loss), oe_loss)
    parts = {"type": type_loss.item(), "op": op_loss.item(), "oe": oe_loss.item()}
    return total, parts


def batch_loss(state, batch, tf_p: float, rng) -> tuple[Tensor, dict]:
    totals, comps = [], {"type": 0.0, "op": 0.0, "oe": 0.0}
    for problem in batch:
        lt, parts = example_loss(state, problem, tf_p, rng)
        totals.append(lt)
        for k in comps:
            comps[k] += parts[k]
    total = _mean(totals)
    if not math.isfinite(total.item()):
        raise NonFiniteLoss(f"batch loss is {total.item()}")
    for k in comps:
        comps[k] /= len(batch)
    return total, comps


class AdamOptimizer:
    """Adaptive-moment optimizer over the model's named parameters."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def clip_gradients(self) -> float:
        """Scale all gradients so their global norm is at most clip_norm."""
        sq = 0.0
        for t in self.params.values():
            if t.grad is not None:
                sq += float(np.vdot(t.grad, t.grad))
        norm = math.sqrt(sq)
        limit = self.cfg.clip_norm
        if limit > 0 and norm > limit:
            factor = limit / norm
            for t in self.params.values():
                if t.grad is not None:
                    t.grad *= factor
        return norm

    def step(self) -> None:
        self.step_count += 1
        c = self.cfg
        bc1 = 1.0 - c.beta1 ** self.step_count
        bc2 = 1.0 - c.beta2 ** self.step_count
        for name, t in self.params.items():
            g = t.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            t.data -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)


def train(state, dataset, cfg: TrainConfig, log_path: str | None = None,
          epoch_callback=None) -> list[dict]:
    """Optimize in place; returns per-epoch loss rows (also streamed to CSV).

    ``epoch_callback(epoch, row)`` may return True to stop early; it must be
    deterministic if reproducible checkpoints are expected.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    for p in dataset:
        if p.gold_program is None or p.problem_type is None:
            raise ValueError(f"record {p.uid or '<unnamed>'} lacks a gold program or type")
    opt = AdamOptimizer(state.params, cfg)
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    history: list[dict] = []
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        if log:
            log.write("epoch,total,type_loss,op_loss,oe_loss\n")
        for epoch in range(cfg.epochs):
            tf_p = tf_prob(epoch, cfg.teacher_forcing)
            order = rng.permutation(len(dataset))
            sums = {"total": 0.0, "type": 0.0, "op": 0.0, "oe": 0.0}
            n_batches = 0
            for at in range(0, len(dataset), cfg.batch_size):
                batch = [dataset[i] for i in order[at:at + cfg.batch_size]]
                state.zero_grad()
                with Tape() as tape:
                    total, comps = batch_loss(state, batch, tf_p, rng)
                    tape.backward(total)
                opt.clip_gradients()
                opt.step()
                sums["total"] += total.item()
                for k in ("type", "op", "oe"):
                    sums[k] += comps[k]
                n_batches += 1
            row = {
                "epoch": epoch,
                "total": sums["total"] / n_batches,
                "type_loss": sums["type"] / n_batches,
                "op_loss": sums["op"] / n_batches,
                "oe_loss": sums["oe"] / n_batches,
            }
            history.append(row)
            if log:
                log.write(f"{row['epoch']},{row['total']:.6f},{row['type_loss']:.6f},"
                          f"{row['op_loss']:.6f},{row['oe_loss']:.6f}\n")
                log.flush()
            if epoch_callback is not None and epoch_callback(epoch, row):
                break
    finally:
        if log:
            log.close()
    return history


# --- evaluation ---

@dataclass
class TopKReport:
    n: int
    k: int
    beam_size: int
    top1: float
    topk: float
    type_accuracy: float
    per_type: dict = field(default_factory=dict)
    rank_histogram: dict = field(default_factory=dict)
    attribution: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "k": self.k, "beam_size": self.beam_size,
            "top1": self.top1, "topk": self.topk,
            "type_accuracy": self.type_accuracy,
            "per_type": self.per_type,
            "rank_histogram": self.rank_histogram,
            "attribution": self.attribution,
        }


def first_divergence(pred: SolutionProgram | None, gold: SolutionProgram) -> str | None:
    """Classify where a wrong prediction first leaves the gold program.

    Walking sub-programs in order, a mismatched (or missing/extra) operator is
    an operator divergence; a mismatched operand or operand-list length is an
    operand divergence.  Returns None when the programs match.
    """
    if pred is None or not pred.subs:
        return "wrong_operator"
    for t in range(max(len(pred.subs), len(gold.subs))):
        if t >= len(pred.subs) or t >= len(gold.subs):
            return "wrong_operator"
        ps, gs = pred.subs[t], gold.subs[t]
        if ps.op != gs.op:
            return "wrong_operator"
        for j in range(max(len(ps.args), len(gs.args))):
            if j >= len(ps.args) or j >= len(gs.args) or ps.args[j] != gs.args[j]:
                return "wrong_operand"
    return None


def evaluate(state, dataset, k: int = 10,
             beam: BeamConfig | None = None,
             collect_predictions: list | None = None) -> TopKReport:
    """Decode each problem with the beam and report exact-match accuracy.

    The problem type is the classifier's prediction (never the gold label);
    gold programs are only used as references.  ``collect_predictions``, if
    given, receives the top-1 program (or None) per problem.
    """
    beam = beam or BeamConfig()
    if k > beam.beam_size:
        raise ValueError(f"k={k} exceeds beam_size={beam.beam_size}")
    n = 0
    top1 = 0
    topk = 0
    type_ok = 0
    per_type: dict[str, dict] = {}
    rank_hist: dict[str, int] = {}
    attribution = {"wrong_operator": 0, "wrong_operand": 0}
    for problem in dataset:
        if problem.gold_program is None:
            raise ValueError(f"record {problem.uid or '<unnamed>'} has no gold program")
        n += 1
        rep = encode(state, problem)
        predicted_type = classify(state, rep).best
        if problem.problem_type is not None and predicted_type.id == problem.problem_type.id:
            type_ok += 1
        if beam.beam_size == 1:
            cands = [(greedy_decode(state, problem, rep=rep), 0.0)]
        else:
            cands = hbeam_decode(state, problem, beam, rep=rep)
        rank = None
        for i, (prog, _score) in enumerate(cands[:k]):
            if canonical_equal(prog, problem.gold_program):
                rank = i
                break
        bucket = per_type.setdefault(problem.problem_type.name,
                                     {"n": 0, "top1": 0, "topk": 0})
        bucket["n"] += 1
        rank_hist[str(rank) if rank is not None else "none"] = \
            rank_hist.get(str(rank) if rank is not None else "none", 0) + 1
        best = cands[0][0] if cands else None
        if rank == 0:
            top1 += 1
            bucket["top1"] += 1
        else:
            attribution[first_divergence(best, problem.gold_program)] += 1
        if rank is not None:
            topk += 1
            bucket["topk"] += 1
        if collect_predictions is not None:
            collect_predictions.append(best)
    for bucket in per_type.values():
        bucket["top1_rate"] = bucket["top1"] / bucket["n"]
        bucket["topk_rate"] = bucket["topk"] / bucket["n"]
    return TopKReport(
        n=n, k=k, beam_size=beam.beam_size,
        top1=top1 / n if n else 0.0,
        topk=topk / n if n else 0.0,
        type_accuracy=type_ok / n if n else 0.0,
        per_type=per_type,
        rank_histogram=rank_hist,
        attribution=attribution,
    )
