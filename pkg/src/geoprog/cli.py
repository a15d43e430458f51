"""Command-line interface.

Subcommands: synth, train, eval, predict, explain, analyze.  Exit codes are
0 on success, 1 for usage problems, 2 for unreadable or malformed inputs, and
3 for runtime failures.  Commands that take a seed fall back to the
``GEOPROG_SEED`` environment variable, then to 0.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields

from . import data as data_io
from .beam import SCORE_RULES, BeamConfig, hbeam_decode
from .classifier import classify
from .encoder import Vocabulary, encode
from .errors import DataError, GeoprogError, MalformedRecord, ProgramError, RegistryError
from .generator import greedy_decode
from .model import CACHE_STRATEGIES, SOFTMAX_MODES, ModelConfig, init_model
from .program import canonical_equal, operand_count_histogram, to_flat
from .registry import load_registry
from .training import TrainConfig, evaluate, first_divergence, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _resolve_seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("GEOPROG_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise _UsageError(f"GEOPROG_SEED must be an integer, got {env!r}") from None
    return 0


def _nested(program, table) -> list:
    return [{"op": table.surface(s.op), "args": [table.surface(a) for a in s.args]}
            for s in program.subs]


def _emit(payload: dict, out_path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


# --- config plumbing ---

_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def _merge_config(args) -> tuple[ModelConfig, TrainConfig]:
    model_kw: dict = {}
    train_kw: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise MalformedRecord(f"{args.config}: config must be a JSON object")
        for section, keys, kw in (("model", _MODEL_KEYS, model_kw),
                                  ("train", _TRAIN_KEYS, train_kw)):
            sub = doc.get(section, {})
            unknown = sorted(set(sub) - keys)
            if unknown:
                raise MalformedRecord(
                    f"{args.config}: unknown {section} keys {unknown}")
            kw.update(sub)
    overrides = {
        "hidden": args.hidden, "layers": args.layers,
        "softmax_mode": args.softmax_mode, "cache_strategy": args.cache_strategy,
    }
    model_kw.update({k: v for k, v in overrides.items() if v is not None})
    overrides = {"epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr}
    train_kw.update({k: v for k, v in overrides.items() if v is not None})
    if args.seed is not None:
        train_kw["seed"] = args.seed
    elif "seed" not in train_kw:
        train_kw["seed"] = _resolve_seed(None)
    if "teacher_forcing" in train_kw:
        train_kw["teacher_forcing"] = tuple(
            (int(e), float(p)) for e, p in train_kw["teacher_forcing"])
    try:
        mcfg = ModelConfig(**model_kw)
        mcfg.validate()
        tcfg = TrainConfig(**train_kw)
    except (TypeError, ValueError) as e:
        raise _UsageError(str(e)) from None
    return mcfg, tcfg


# --- subcommands ---

def _cmd_synth(args) -> int:
    registry = load_registry(args.registry)
    profile = data_io.SynthProfile(cal_fraction=args.cal_fraction)
    records = data_io.synth_generate(args.n, registry, seed=_resolve_seed(args.seed),
                                     profile=profile)
    data_io.save_dataset(records, args.out)
    print(json.dumps({"out": args.out, "n": len(records),
                      "cal": sum(1 for r in records if r.type_name == "cal")}))
    return 0


def _cmd_train(args) -> int:
    registry = load_registry(args.registry)
    mcfg, tcfg = _merge_config(args)
    dataset = data_io.load_dataset(args.data, registry, require_program=True)
    vocab = Vocabulary.build(dataset)
    state = init_model(mcfg, registry, vocab, seed=tcfg.seed)
    loss_csv = args.loss_csv or args.out + ".loss.csv"
    history = train(state, dataset, tcfg, log_path=loss_csv)
    data_io.save_checkpoint(state, args.out)
    print(json.dumps({"checkpoint": args.out, "loss_csv": loss_csv,
                      "epochs": len(history),
                      "final_loss": history[-1]["total"] if history else None}))
    return 0


def _cmd_eval(args) -> int:
    if args.topk > args.beam:
        raise _UsageError(f"--topk {args.topk} cannot exceed --beam {args.beam}")
    state = data_io.load_checkpoint(args.model)
    dataset = data_io.load_dataset(args.data, state.registry, require_program=True)
    beam = BeamConfig(beam_size=args.beam, score_rule=args.score_rule)
    beam.validate()
    preds: list | None = [] if args.dump_preds else None
    report = evaluate(state, dataset, k=args.topk, beam=beam, collect_predictions=preds)
    if args.dump_preds:
        with open(args.dump_preds, "w", encoding="utf-8") as fh:
            for problem, pred in zip(dataset, preds):
                table = state.registry.table_for(problem)
                line = {"id": problem.uid,
                        "program": _nested(pred, table) if pred is not None else None}
                fh.write(json.dumps(line) + "\n")
    if args.human:
        print(f"n={report.n} beam={report.beam_size} k={report.k}")
        print(f"top1           {report.top1:.4f}")
        print(f"top{report.k:<12} {report.topk:.4f}")
        print(f"type accuracy  {report.type_accuracy:.4f}")
        for name, bucket in sorted(report.per_type.items()):
            print(f"  {name}: n={bucket['n']} top1={bucket['top1_rate']:.4f} "
                  f"topk={bucket['topk_rate']:.4f}")
    else:
        _emit(report.to_dict(), args.out)
    return 0


def _cmd_predict(args) -> int:
    state = data_io.load_checkpoint(args.model)
    with open(args.input, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    problem = data_io.parse_record(obj, state.registry, where=args.input)
    rep = encode(state, problem)
    ptype = classify(state, rep).best
    beam = BeamConfig(beam_size=args.beam, score_rule=args.score_rule)
    beam.validate()
    table = state.registry.table_for(problem)
    cands = hbeam_decode(state, problem, beam, rep=rep)
    payload = {
        "id": problem.uid,
        "type": ptype.name,
        "candidates": [
            {"rank": i, "score": score, "program": _nested(prog, table),
             "flat": to_flat(prog, table)}
            for i, (prog, score) in enumerate(cands)
        ],
    }
    _emit(payload, args.out)
    return 0


def _cmd_explain(args) -> int:
    state = data_io.load_checkpoint(args.model)
    with open(args.input, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    problem = data_io.parse_record(obj, state.registry, where=args.input)
    table = state.registry.table_for(problem)
    trace: list = []
    program = greedy_decode(state, problem, trace=trace)
    rows = []
    for i, (mode, t, sid, probs) in enumerate(trace):
        row = [i, mode, t, table.surface(sid)]
        row.extend(f"{p:.10f}" for p in probs)
        rows.append(row)
    header = ["step", "mode", "sub_index", "chosen"] + table.surfaces()
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    if args.out:
        print(json.dumps({"out": args.out, "steps": len(rows),
                          "program": _nested(program, table)}))
    return 0


def _cmd_analyze(args) -> int:
    registry = load_registry(args.registry)
    gold = data_io.load_dataset(args.gold, registry, require_program=True)
    by_uid = {p.uid: p for p in gold}
    if len(by_uid) != len(gold):
        raise MalformedRecord(f"{args.gold}: duplicate record ids")
    preds: dict = {}
    with open(args.pred, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(
                    f"{args.pred} line {lineno}: invalid JSON ({e.msg})") from None
            uid = obj.get("id")
            if uid not in by_uid:
                raise MalformedRecord(
                    f"{args.pred} line {lineno}: id {uid!r} not in the gold set")
            problem = by_uid[uid]
            raw = obj.get("program")
            if raw is None:
                preds[uid] = None
                continue
            table = registry.table_for(problem)
            preds[uid] = data_io.parse_program(raw, table, problem.problem_type,
                                               where=f"{args.pred} line {lineno}")
    missing = [p.uid for p in gold if p.uid not in preds]
    if missing:
        raise MalformedRecord(
            f"{args.pred}: no prediction for gold ids {missing[:5]}"
            + ("..." if len(missing) > 5 else ""))
    exact = 0
    attribution = {"wrong_operator": 0, "wrong_operand": 0}
    per_type: dict[str, dict] = {}
    for problem in gold:
        pred = preds[problem.uid]
        bucket = per_type.setdefault(problem.problem_type.name, {"n": 0, "exact": 0})
        bucket["n"] += 1
        if pred is not None and canonical_equal(pred, problem.gold_program):
            exact += 1
            bucket["exact"] += 1
        else:
            attribution[first_divergence(pred, problem.gold_program)] += 1
    histogram = operand_count_histogram([p.gold_program for p in gold])
    payload = {
        "n": len(gold),
        "exact": exact,
        "exact_rate": exact / len(gold) if gold else 0.0,
        "attribution": attribution,
        "operand_histogram": {str(k): v for k, v in sorted(histogram.items())},
        "per_type": per_type,
    }
    if args.human:
        print(f"n={len(gold)} exact={exact} ({payload['exact_rate']:.4f})")
        print(f"wrong operator: {attribution['wrong_operator']}, "
              f"wrong operand: {attribution['wrong_operand']}")
        print("operand counts: " + ", ".join(
            f"{k}:{v}" for k, v in sorted(histogram.items())))
    else:
        _emit(payload, args.out)
    return 0


# --- parser ---

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geoprog",
                     description="Train and run the geometry program solver.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cal-fraction", type=float, default=0.5)
    p.add_argument("--registry", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model from scratch")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON with 'model' and 'train' sections")
    p.add_argument("--registry", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--softmax-mode", choices=SOFTMAX_MODES, default=None)
    p.add_argument("--cache-strategy", choices=CACHE_STRATEGIES, default=None)
    p.add_argument("--loss-csv", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="top-k accuracy on a labeled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--score-rule", choices=SCORE_RULES, default="sum_log_prob")
    p.add_argument("--out", default=None)
    p.add_argument("--dump-preds", default=None)
    p.add_argument("--human", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="decode one problem")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="JSON file with one problem record")
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--score-rule", choices=SCORE_RULES, default="sum_log_prob")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("explain", help="per-step decode distributions as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("analyze", help="compare predictions against gold programs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--registry", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--human", action="store_true")
    p.set_defaults(func=_cmd_analyze)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help prints and exits 0
        return int(e.code or 0)
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (DataError, RegistryError, ProgramError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except GeoprogError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # keep the exit-code contract even for surprises
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
