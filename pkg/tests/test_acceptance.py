"""Acceptance experiments: eleven pinned checks, one PASS/FAIL line each.

Each test produces a single summary line and then asserts.  The lines print
immediately when capture is off (-s) and are always echoed in an "acceptance
criteria" section at the end of the run via the terminal-summary hook in
conftest.  The training-based checks (5, 6, 7) take several minutes each;
everything else is fast.  Results that feed more than one check are computed
once and cached at module scope.
"""

import itertools
import json
import math
import sys
import time

import numpy as np
import pytest

from geoprog.autodiff.gradcheck import grad_check
from geoprog.beam import BeamConfig, exhaustive_oracle, hbeam_decode
from geoprog.cli import run as cli_run
from geoprog.data import (
    load_checkpoint,
    load_dataset,
    parse_record,
    save_checkpoint,
    save_dataset,
    synth_generate,
    SynthProfile,
)
from geoprog.encoder import encode, Vocabulary, preprocess
from geoprog.errors import DivisionByZero
from geoprog.generator import (
    OE_MODE,
    OP_MODE,
    SubArtifacts,
    decode_step,
    feed,
    greedy_decode,
    initial_state,
    update_cache,
)
from geoprog.model import CACHE_STRATEGIES, ModelConfig, init_model
from geoprog.program import (
    SolutionProgram,
    SubProgram,
    canonical_equal,
    execute_cal,
    from_flat,
    operand_count_histogram,
    to_flat,
)
from geoprog.registry import build_registry
from geoprog.training import TrainConfig, evaluate, example_loss, train

import conftest
from conftest import make_tiny_state, tiny_problem


def _report(num: int, ok: bool, details: str) -> str:
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {details}"
    print(line, file=sys.__stdout__, flush=True)
    conftest.ACCEPTANCE_LINES.append(line)
    return line


# --- shared corpora and training runs ---

OVERFIT_DATA_SEED = 2024
OVERFIT_INIT_SEED = 0
OVERFIT_BATCH = 2

_overfit_runs: dict = {}


@pytest.fixture(scope="module")
def overfit_dataset(tmp_path_factory, registry):
    path = str(tmp_path_factory.mktemp("acc") / "overfit200.jsonl")
    records = synth_generate(200, registry, seed=OVERFIT_DATA_SEED)
    save_dataset(records, path)
    dataset = load_dataset(path, registry, require_program=True)
    assert len(dataset) == 200
    assert sum(1 for p in dataset if p.problem_type.name == "cal") == 100
    return path, dataset


def overfit_run(registry, dataset, strategy: str) -> dict:
    """Train h=64, L=2, lr 2e-4 on the pinned corpus; early-stop at the gate.

    The evaluation callback never touches the training RNG, so stopping early
    is exactly reproducible for a fixed seed.
    """
    if strategy in _overfit_runs:
        return _overfit_runs[strategy]
    t0 = time.monotonic()
    vocab = Vocabulary.build(dataset)
    state = init_model(ModelConfig(hidden=64, layers=2, cache_strategy=strategy),
                       registry, vocab, seed=OVERFIT_INIT_SEED)

    def gate(epoch, row):
        if epoch < 120 or (epoch + 1) % 5 != 0:
            return False
        rep = evaluate(state, dataset, k=1, beam=BeamConfig(beam_size=1))
        return rep.top1 >= 0.95 and rep.type_accuracy >= 1.0

    history = train(state, dataset,
                    TrainConfig(epochs=300, batch_size=OVERFIT_BATCH, lr=2e-4,
                                seed=OVERFIT_INIT_SEED),
                    epoch_callback=gate)
    report = evaluate(state, dataset, k=1, beam=BeamConfig(beam_size=1))
    result = {
        "strategy": strategy,
        "epochs": len(history),
        "top1": report.top1,
        "type_accuracy": report.type_accuracy,
        "wall_s": time.monotonic() - t0,
    }
    _overfit_runs[strategy] = result
    return result


# --- criterion 1: gradient fidelity on the full loss ---

def test_criterion_01_gradient_fidelity(registry):
    t0 = time.monotonic()
    records = synth_generate(200, registry, seed=OVERFIT_DATA_SEED)
    chosen = next(r for r in records
                  if r.type_name == "cal" and len(r.program) >= 2
                  and any(a.startswith("#") for s in r.program for a in s["args"]))
    problem = parse_record(chosen.to_json(), registry)
    vocab = Vocabulary.build([problem])
    state = init_model(ModelConfig(hidden=8, layers=2, patch_dim=16),
                       registry, vocab, seed=1)
    rng = np.random.default_rng(0)

    def loss():
        return example_loss(state, problem, 1.0, rng)[0]

    report = grad_check(loss, state.params, eps=1e-5, samples=12, seed=3)
    worst = max(report.values())
    worst_name = max(report, key=report.get)
    elapsed = time.monotonic() - t0
    ok = worst <= 1e-4 and elapsed < 60.0
    line = _report(1, ok, f"max rel err {worst:.2e} ({worst_name}), "
                          f"{len(report)} parameter groups, {elapsed:.1f}s")
    assert ok, line


# --- criterion 2: beam equals the exhaustive oracle on the tiny instance ---

def test_criterion_02_beam_oracle_equivalence(tiny_registry):
    t0 = time.monotonic()
    problem = tiny_problem()
    cfg = BeamConfig(beam_size=64)
    checked = 0
    for seed in range(20):
        state = make_tiny_state(tiny_registry, seed=seed)
        table = state.registry.table_for(problem)
        beam = hbeam_decode(state, problem, cfg)
        oracle = exhaustive_oracle(state, problem, cfg)[: len(beam)]
        assert len(beam) == len(oracle)
        for (bp, bs), (op_, os_) in zip(beam, oracle):
            assert to_flat(bp, table) == to_flat(op_, table)
            assert abs(bs - os_) <= 1e-9
            checked += 1
    elapsed = time.monotonic() - t0
    ok = elapsed < 30.0
    line = _report(2, ok, f"20 seeds, {checked} ranked entries agree "
                          f"within 1e-9, {elapsed:.1f}s")
    assert ok, line


# --- criterion 3: beam size 1 degenerates to greedy ---

def test_criterion_03_greedy_degeneracy(registry):
    t0 = time.monotonic()
    records = synth_generate(10, registry, seed=4242)
    problems = [parse_record(r.to_json(), registry) for r in records]
    vocab = Vocabulary.build(problems)
    matches = 0
    for seed in range(100):
        state = init_model(ModelConfig(hidden=10, layers=1, patch_dim=16),
                           registry, vocab, seed=seed)
        problem = problems[seed % len(problems)]
        table = registry.table_for(problem)
        greedy = to_flat(greedy_decode(state, problem), table)
        beamed = to_flat(hbeam_decode(state, problem, BeamConfig(beam_size=1))[0][0],
                         table)
        assert greedy == beamed, f"seed {seed} diverged"
        matches += 1
    elapsed = time.monotonic() - t0
    line = _report(3, True, f"{matches}/100 model-problem pairs identical, "
                            f"{elapsed:.1f}s")
    assert matches == 100


# --- criterion 4: masks leak exactly zero probability ---

def _doc_symbol_sets(registry, type_name):
    ops = {registry.lookup(o["surface"]) for o in registry.doc["operators"]
           if type_name in o["types"]}
    consts = {registry.lookup(c["surface"]) for c in registry.doc["constants"]
              if type_name in c["types"]}
    return ops, consts


def _mask_walk(state, problem, type_name, rng, step_budget):
    """Random-choice decode recording every step distribution; returns steps
    as (mode, t, j, filled, probs)."""
    r = state.registry
    rep = encode(state, problem)
    tmask = r.type_mask(type_name, problem)
    steps = []
    dec = initial_state(state, rep, problem)
    for t in range(r.max_op):
        q_op, dist, dec = decode_step(state, rep, dec, tmask, OP_MODE, t)
        steps.append(("op", t, None, t, dist.data[0].copy()))
        support = np.flatnonzero(dist.data[0] > 0.0)
        sid = int(rng.choice(support))
        dec = feed(dec, sid)
        if sid == r.eop_id:
            break
        last_q = q_op
        for j in range(r.max_oe):
            last_q, dist, dec = decode_step(state, rep, dec, tmask, OE_MODE, t, j)
            steps.append(("oe", t, j, t, dist.data[0].copy()))
            support = np.flatnonzero(dist.data[0] > 0.0)
            a = int(rng.choice(support))
            dec = feed(dec, a)
            if a == r.eos_operand_id:
                break
        dec = update_cache(state, dec, t, SubArtifacts(q_op, last_q, sid))
        if len(steps) >= step_budget:
            break
    return steps


def test_criterion_04_mask_soundness(registry):
    t0 = time.monotonic()
    per_type_counts = {}
    for type_name in ("cal", "prv"):
        ops, consts = _doc_symbol_sets(registry, type_name)
        profile = SynthProfile(cal_fraction=1.0 if type_name == "cal" else 0.0)
        records = synth_generate(12, registry, seed=911, profile=profile)
        problems = [parse_record(r.to_json(), registry) for r in records]
        vocab = Vocabulary.build(problems)
        rng = np.random.default_rng(55)
        counted = 0
        model_seed = 0
        while counted < 1000:
            state = init_model(ModelConfig(hidden=10, layers=1, patch_dim=16),
                               registry, vocab, seed=model_seed)
            model_seed += 1
            for problem in problems:
                table = registry.table_for(problem)
                dynamic_ids = set(range(registry.static_size, len(table)))
                for mode, t, j, filled, probs in _mask_walk(
                        state, problem, type_name, rng, 40):
                    if mode == "op":
                        allowed = set(ops)
                        if t > 0:
                            allowed.add(registry.eop_id)
                    else:
                        allowed = set(consts) | dynamic_ids
                        allowed |= set(registry.cache_ids[:filled])
                        if j > 0:
                            allowed.add(registry.eos_operand_id)
                    outside = [i for i in range(len(probs))
                               if i not in allowed and probs[i] != 0.0]
                    assert not outside, (type_name, mode, t, j, outside)
                    assert abs(probs.sum() - 1.0) <= 1e-6
                    counted += 1
                if counted >= 1000:
                    break
        per_type_counts[type_name] = counted
    elapsed = time.monotonic() - t0
    line = _report(4, True, f"steps checked cal={per_type_counts['cal']} "
                            f"prv={per_type_counts['prv']}, zero leaked mass, "
                            f"{elapsed:.1f}s")
    assert all(v >= 1000 for v in per_type_counts.values())


# --- criterion 5: the pinned overfit experiment ---

def test_criterion_05_overfit(registry, overfit_dataset):
    _path, dataset = overfit_dataset
    result = overfit_run(registry, dataset, "last_operand_query")
    ok = (result["top1"] >= 0.95 and result["type_accuracy"] == 1.0
          and result["epochs"] <= 300 and result["wall_s"] < 600.0)
    line = _report(5, ok, f"top1 {result['top1']:.3f}, type "
                          f"{result['type_accuracy']:.2f}, stopped at epoch "
                          f"{result['epochs'] - 1}, {result['wall_s']:.0f}s")
    assert ok, line


# --- criterion 6: beam uplift over greedy on held-out data ---

UPLIFT_SEEDS = (0, 1, 2, 3, 4)


def test_criterion_06_beam_uplift(registry, tmp_path):
    t0 = time.monotonic()
    train_path = str(tmp_path / "uplift_train.jsonl")
    held_path = str(tmp_path / "uplift_held.jsonl")
    save_dataset(synth_generate(200, registry, seed=OVERFIT_DATA_SEED), train_path)
    save_dataset(synth_generate(60, registry, seed=2025), held_path)
    train_ds = load_dataset(train_path, registry, require_program=True)
    held_ds = load_dataset(held_path, registry, require_program=True)
    vocab = Vocabulary.build(train_ds)
    rows = []
    for seed in UPLIFT_SEEDS:
        state = init_model(ModelConfig(hidden=64, layers=2), registry, vocab,
                           seed=seed)
        train(state, train_ds,
              TrainConfig(epochs=50, batch_size=OVERFIT_BATCH, lr=2e-4, seed=seed))
        greedy = evaluate(state, held_ds, k=1, beam=BeamConfig(beam_size=1))
        beam = evaluate(state, held_ds, k=10, beam=BeamConfig(beam_size=10))
        rows.append((seed, greedy.top1, beam.topk))
    weak = all(b >= g for _, g, b in rows)
    strict = sum(1 for _, g, b in rows if b > g)
    elapsed = time.monotonic() - t0
    ok = weak and strict >= 3
    detail = " ".join(f"s{s}:{g:.3f}->{b:.3f}" for s, g, b in rows)
    line = _report(6, ok, f"{detail}, strict uplift {strict}/5, {elapsed:.0f}s")
    assert ok, line


# --- criterion 7: every cache strategy completes the overfit experiment ---

def test_criterion_07_cache_strategies(registry, overfit_dataset):
    _path, dataset = overfit_dataset
    results = [overfit_run(registry, dataset, s) for s in CACHE_STRATEGIES]
    ok = all(r["epochs"] <= 300 and 0.0 <= r["top1"] <= 1.0 for r in results)
    detail = ", ".join(f"{r['strategy']}: top1 {r['top1']:.3f} "
                       f"({r['epochs']} epochs)" for r in results)
    line = _report(7, ok, detail)
    assert ok, line


# --- criterion 8: flat round-trip and checkpoint round-trip ---

def _random_program(rng, registry, table, type_name, n_dynamic):
    ops, consts = _doc_symbol_sets(registry, type_name)
    ops = sorted(ops)
    operand_pool_base = sorted(consts) + list(
        range(registry.static_size, registry.static_size + n_dynamic))
    n_subs = int(rng.integers(1, registry.max_op + 1))
    subs = []
    for t in range(n_subs):
        pool = operand_pool_base + list(registry.cache_ids[:t])
        k = int(rng.integers(1, registry.max_oe + 1))
        args = tuple(int(pool[rng.integers(0, len(pool))]) for _ in range(k))
        subs.append(SubProgram(int(ops[rng.integers(0, len(ops))]), args))
    return SolutionProgram(tuple(subs), registry.problem_type(type_name))


def test_criterion_08_serialization(registry, tmp_path):
    t0 = time.monotonic()
    rng = np.random.default_rng(13)
    cal_problem = preprocess("calculate sum of first and second given 3 and 4 and 5 .")
    prv_problem = preprocess("prove that △ A B C ≅ △ D E F holds .")
    tables = {"cal": (registry.table_for(cal_problem), 3),
              "prv": (registry.table_for(prv_problem), 2)}
    for i in range(1000):
        type_name = "cal" if i % 2 == 0 else "prv"
        table, n_dyn = tables[type_name]
        program = _random_program(rng, registry, table, type_name, n_dyn)
        back = from_flat(to_flat(program, table), table,
                         program.problem_type)
        assert canonical_equal(back, program), i

    vocab = Vocabulary.build([cal_problem, prv_problem])
    state = init_model(ModelConfig(hidden=12, layers=2, patch_dim=4),
                       registry, vocab, seed=21)
    p1 = str(tmp_path / "a.ckpt")
    p2 = str(tmp_path / "b.ckpt")
    save_checkpoint(state, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    identical = open(p1, "rb").read() == open(p2, "rb").read()
    elapsed = time.monotonic() - t0
    ok = identical
    line = _report(8, ok, f"1000 flat round-trips exact, checkpoint "
                          f"save/load/save byte-identical: {identical}, "
                          f"{elapsed:.1f}s")
    assert ok, line


# --- criterion 9: execution against a direct-arithmetic oracle ---

ORACLE_DOC = {
    "types": ["cal"],
    "operators": [
        {"surface": s, "types": ["cal"], "min_args": 2, "max_args": 2}
        for s in ("add", "sub", "mul", "div")
    ],
    "constants": [
        {"surface": "C_1", "value": 1.0, "types": ["cal"]},
        {"surface": "C_2", "value": 2.0, "types": ["cal"]},
        {"surface": "C_3", "value": 3.0, "types": ["cal"]},
        {"surface": "C_pi", "value": math.pi, "types": ["cal"]},
    ],
    "limits": {"max_op": 3, "max_oe": 2},
}

_PY_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}


def test_criterion_09_execution_oracle():
    t0 = time.monotonic()
    registry = build_registry(ORACLE_DOC)
    problem = preprocess("evaluate .")
    table = registry.table_for(problem)
    ptype = registry.problem_type("cal")
    op_ids = [registry.lookup(s) for s in ("add", "sub", "mul", "div")]
    op_names = {registry.lookup(s): s for s in ("add", "sub", "mul", "div")}
    const_vals = {registry.lookup(s): v for s, v in
                  (("C_1", 1.0), ("C_2", 2.0), ("C_3", 3.0), ("C_pi", math.pi))}
    cache_ids = list(registry.cache_ids)

    checked = 0
    skipped = 0

    def operand_value(sid, prior):
        return const_vals[sid] if sid in const_vals else prior[cache_ids.index(sid)]

    def walk(subs, prior):
        nonlocal checked, skipped
        t = len(subs)
        if t > 0:
            program = SolutionProgram(tuple(subs), ptype)
            got = execute_cal(program, [], table)
            assert got == prior[-1], (to_flat(program, table), got, prior[-1])
            checked += 1
        if t == 3:
            return
        pool = list(const_vals) + cache_ids[:t]
        for op in op_ids:
            name = op_names[op]
            for a, b in itertools.product(pool, pool):
                va, vb = operand_value(a, prior), operand_value(b, prior)
                if name == "div" and vb == 0.0:
                    with pytest.raises(DivisionByZero):
                        execute_cal(SolutionProgram(
                            tuple(subs) + (SubProgram(op, (a, b)),), ptype),
                            [], table)
                    skipped += 1
                    continue
                walk(subs + [SubProgram(op, (a, b))],
                     prior + [_PY_OPS[name](va, vb)])

    walk([], [])
    elapsed = time.monotonic() - t0
    # the constant-only subset (64 + 64^2 + 64^3 programs) is always free of
    # division by zero, so it is a guaranteed lower bound on coverage; the
    # excluded branches prune whole subtrees whose prefixes already fail
    ok = checked >= 64 + 64 ** 2 + 64 ** 3 and skipped > 0
    line = _report(9, ok, f"{checked} programs agree exactly, "
                          f"{skipped} div-by-zero branches excluded, "
                          f"{elapsed:.1f}s")
    assert ok, line


# --- criterion 10: byte-identical reruns ---

def test_criterion_10_determinism(tmp_path, capsys):
    t0 = time.monotonic()
    pairs = []
    for tag in ("x", "y"):
        data = str(tmp_path / f"synth_{tag}.jsonl")
        model = str(tmp_path / f"model_{tag}.ckpt")
        assert cli_run(["synth", "--out", data, "--n", "20", "--seed", "77"]) == 0
        assert cli_run(["train", "--data", data, "--out", model,
                        "--epochs", "3", "--batch-size", "5", "--hidden", "10",
                        "--layers", "1", "--seed", "5"]) == 0
        pairs.append((data, model))
    capsys.readouterr()
    synth_same = open(pairs[0][0], "rb").read() == open(pairs[1][0], "rb").read()
    train_same = open(pairs[0][1], "rb").read() == open(pairs[1][1], "rb").read()
    elapsed = time.monotonic() - t0
    ok = synth_same and train_same
    line = _report(10, ok, f"synth byte-identical: {synth_same}, checkpoint "
                           f"byte-identical: {train_same}, {elapsed:.1f}s")
    assert ok, line


# --- criterion 11: analysis tooling on the prv corpus ---

def test_criterion_11_analysis_tooling(registry, tmp_path, capsys):
    t0 = time.monotonic()
    records = synth_generate(80, registry, seed=31,
                             profile=SynthProfile(cal_fraction=0.0))
    gold_path = str(tmp_path / "prv.jsonl")
    save_dataset(records, gold_path)
    dataset = load_dataset(gold_path, registry, require_program=True)

    n_ops = sum(len(r.program) for r in records)
    hist = operand_count_histogram([p.gold_program for p in dataset])
    hist_ok = hist == {1: n_ops}

    vocab = Vocabulary.build(dataset)
    state = init_model(ModelConfig(hidden=12, layers=1, patch_dim=16),
                       registry, vocab, seed=2)
    model_path = str(tmp_path / "untrained.ckpt")
    save_checkpoint(state, model_path)
    preds_path = str(tmp_path / "preds.jsonl")
    analysis_path = str(tmp_path / "analysis.json")
    assert cli_run(["eval", "--model", model_path, "--data", gold_path,
                    "--topk", "1", "--beam", "1",
                    "--dump-preds", preds_path]) == 0
    assert cli_run(["analyze", "--pred", preds_path, "--gold", gold_path,
                    "--out", analysis_path]) == 0
    capsys.readouterr()
    payload = json.loads(open(analysis_path).read())
    report = evaluate(load_checkpoint(model_path), dataset, k=1,
                      beam=BeamConfig(beam_size=1))
    wrong = round(report.n * (1.0 - report.top1))
    attr_sum = sum(payload["attribution"].values())
    attr_ok = (attr_sum == wrong == payload["n"] - payload["exact"])
    elapsed = time.monotonic() - t0
    ok = hist_ok and attr_ok
    line = _report(11, ok, f"histogram {{1: {n_ops}}} exact: {hist_ok}, "
                           f"attribution sum {attr_sum} == wrong top-1 {wrong}, "
                           f"{elapsed:.1f}s")
    assert ok, line
