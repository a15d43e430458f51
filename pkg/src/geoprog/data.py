"""Dataset I/O, synthetic problem generation, and model checkpoints.

Datasets are JSON lines, one record per line::

    {"id": "syn-00012", "type": "cal",
     "text": "calculate sum of first and second given 7 and 12 .",
     "patches": [[...16 floats...], ...],
     "program": [{"op": "add", "args": ["N_0", "N_1"]}]}

``type``, ``patches``, and ``program`` are optional (prediction inputs omit
them).  ``program`` also accepts the flat token form produced by
:func:`geoprog.program.to_flat`.  ``V_j`` is accepted anywhere ``#j`` is.

Checkpoints are a single binary file: a 5-byte magic, a little-endian uint32
format version, a little-endian uint32 header length, a canonical-JSON header
(config, registry document, vocabulary, tensor manifest), then all tensors as
little-endian float32 in manifest order.  Training math runs in float64;
storage is float32, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .encoder import Vocabulary, preprocess
from .errors import (
    CorruptTensor,
    CheckpointError,
    ExecutionError,
    MalformedRecord,
    UnknownSymbol,
    ProgramError,
    RegistryError,
    UnresolvableSymbol,
    VersionMismatch,
)
from .model import ModelConfig, ModelState, parameter_shapes
from .program import SolutionProgram, SubProgram, execute_cal, from_flat, validate
from .registry import DslRegistry, build_registry

MAGIC = b"GAPS1"
FORMAT_VERSION = 1


# --- dataset records ---

@dataclass
class DatasetRecord:
    uid: str
    text: str
    type_name: str | None = None
    program: list | None = None          # nested [{"op":..,"args":[..]}] or flat [str]
    patches: list | None = None

    def to_json(self) -> dict:
        out: dict = {"id": self.uid, "text": self.text}
        if self.type_name is not None:
            out["type"] = self.type_name
        if self.patches is not None:
            out["patches"] = self.patches
        if self.program is not None:
            out["program"] = self.program
        return out


def save_dataset(records: list[DatasetRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")


def parse_record(obj, registry: DslRegistry, where: str = "record"):
    """Build a PreprocessedProblem from one decoded JSON record."""
    if not isinstance(obj, dict):
        raise MalformedRecord(f"{where}: expected an object, got {type(obj).__name__}")
    text = obj.get("text")
    if not isinstance(text, str) or not text.strip():
        raise MalformedRecord(f"{where}: missing or empty 'text'")
    uid = obj.get("id", "")
    if not isinstance(uid, str):
        raise MalformedRecord(f"{where}: 'id' must be a string")
    where = f"record {uid!r}" if uid else where

    patches = obj.get("patches")
    if patches is not None:
        try:
            patches = np.asarray(patches, dtype=np.float64)
        except (TypeError, ValueError):
            raise MalformedRecord(f"{where}: 'patches' is not a rectangular numeric array") from None
        if patches.ndim != 2:
            raise MalformedRecord(f"{where}: 'patches' must be 2-d, got shape {patches.shape}")

    problem = preprocess(text, patches, uid=uid)

    type_name = obj.get("type")
    if type_name is not None:
        try:
            problem.problem_type = registry.problem_type(type_name)
        except RegistryError as e:
            raise MalformedRecord(f"{where}: {e}") from None

    raw_prog = obj.get("program")
    if raw_prog is not None:
        if problem.problem_type is None:
            raise MalformedRecord(f"{where}: a program requires a 'type'")
        table = registry.table_for(problem)
        problem.gold_program = parse_program(raw_prog, table, problem.problem_type, where)
    return problem


def parse_program(raw_prog, table, problem_type, where: str = "record") -> SolutionProgram:
    """Decode a JSON program (nested sub-program dicts or a flat token list)."""
    try:
        if raw_prog and isinstance(raw_prog[0], dict):
            subs = []
            for item in raw_prog:
                op = table.lookup(item["op"])
                args = tuple(table.lookup(a) for a in item["args"])
                subs.append(SubProgram(op, args))
            program = SolutionProgram(tuple(subs), problem_type)
            validate(program, table)
        elif isinstance(raw_prog, list) and all(isinstance(t, str) for t in raw_prog):
            program = from_flat(raw_prog, table, problem_type, tolerant=True)
        else:
            raise MalformedRecord(f"{where}: unrecognized program encoding")
    except UnknownSymbol as e:
        raise UnresolvableSymbol(f"{where}: no symbol {e} in this problem's table") from None
    except (KeyError, TypeError) as e:
        raise MalformedRecord(f"{where}: malformed program entry ({e})") from None
    except ProgramError as e:
        raise MalformedRecord(f"{where}: invalid program: {e}") from None
    return program


def load_dataset(path: str, registry: DslRegistry, require_program: bool = False) -> list:
    """Read a JSONL dataset; errors cite the line number and record id."""
    problems = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"{path} line {lineno}: invalid JSON ({e.msg})") from None
            problem = parse_record(obj, registry, where=f"{path} line {lineno}")
            if require_program and problem.gold_program is None:
                raise MalformedRecord(f"{path} line {lineno}: record has no gold program")
            problems.append(problem)
    return problems


# --- synthetic problems ---

@dataclass
class SynthProfile:
    cal_fraction: float = 0.5
    n_patches: int = 4
    patch_dim: int = 16
    cal_subs: tuple = (1, 3)
    prv_subs: tuple = (1, 4)


_ORDINALS = ["first", "second", "third", "fourth"]
_CACHE_WORDS = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
_CAL_OP_WORDS = {
    "add": "sum", "sub": "difference", "mul": "product", "div": "quotient",
    "pow": "power", "Circle_R_Area": "disk", "sin_deg": "sine", "cos_deg": "cosine",
}
_CONST_WORDS = {"C_pi": "pi", "C_1": "one", "C_2": "two", "C_180": "halfturn"}
_PRV_OP_WORDS = {
    "R_0": "reflex", "R_1": "rotate", "R_2": "mirror", "R_3": "shift",
    "R_4": "glide", "R_5": "twist", "R_6": "fold", "R_7": "slide",
    "congruent": "congruent", "similar": "similar",
}
_ELEMENT_SHAPES = [("△", "triangle", 3), ("∠", "angle", 3), ("⊙", "circle", 2)]
_LETTERS = "ABCDEFGHJKLMNPQRSTUWXYZ"


def _word_for(surface: str) -> str:
    if surface.startswith("N_"):
        return _ORDINALS[int(surface[2:])]
    if surface.startswith("#"):
        return _CACHE_WORDS[int(surface[1:])]
    if surface in _CONST_WORDS:
        return _CONST_WORDS[surface]
    raise ValueError(f"no synth word for {surface!r}")


def _synth_cal(rng, registry: DslRegistry, profile: SynthProfile) -> tuple[str, list]:
    op_names = [s for s in _CAL_OP_WORDS if registry.lookup(s) in registry.operator_ids]
    const_names = list(_CONST_WORDS)
    lo, hi = profile.cal_subs
    for _ in range(80):
        k = int(rng.integers(2, 5))
        values = [float(rng.integers(2, 31)) for _ in range(k)]
        n_subs = int(rng.integers(lo, hi + 1))
        subs = []
        for t in range(n_subs):
            name = op_names[int(rng.integers(0, len(op_names)))]
            entry = registry.entries[registry.lookup(name)]
            args = []
            for _slot in range(entry.max_args):
                draw = rng.random()
                if t > 0 and draw < 0.25:
                    args.append(f"#{int(rng.integers(0, t))}")
                elif draw < 0.40:
                    args.append(const_names[int(rng.integers(0, len(const_names)))])
                else:
                    args.append(f"N_{int(rng.integers(0, k))}")
            if name == "pow":
                args[1] = "C_2"
            subs.append({"op": name, "args": args})
        text = ("calculate " +
                " then ".join(f"{_CAL_OP_WORDS[s['op']]} of " +
                              " and ".join(_word_for(a) for a in s["args"])
                              for s in subs) +
                " given " + " and ".join(str(int(v)) for v in values) + " .")
        problem = preprocess(text)
        if len(problem.number_spans) != k:
            continue
        table = registry.table_for(problem)
        try:
            program = SolutionProgram(
                tuple(SubProgram(table.lookup(s["op"]),
                                 tuple(table.lookup(a) for a in s["args"])) for s in subs),
                registry.problem_type("cal"))
            validate(program, table)
            value = execute_cal(program, values, table)
        except (ProgramError, ExecutionError, OverflowError):
            continue
        if not np.isfinite(value) or abs(value) > 1e7:
            continue
        return text, subs
    # Degenerate fallback; reachable only if sampling keeps drawing bad programs.
    values = [float(rng.integers(2, 31)) for _ in range(2)]
    text = f"calculate sum of first and second given {int(values[0])} and {int(values[1])} ."
    return text, [{"op": "add", "args": ["N_0", "N_1"]}]


def _synth_prv(rng, registry: DslRegistry, profile: SynthProfile) -> tuple[str, list]:
    op_names = [s for s in _PRV_OP_WORDS if registry.lookup(s) in registry.operator_ids]
    m = int(rng.integers(2, 5))
    mentions: list[str] = []
    seen: set[str] = set()
    while len(mentions) < m:
        glyph, _word, n_letters = _ELEMENT_SHAPES[int(rng.integers(0, len(_ELEMENT_SHAPES)))]
        at = int(rng.integers(0, len(_LETTERS) - n_letters))
        mention = glyph + _LETTERS[at:at + n_letters]
        if mention not in seen:
            seen.add(mention)
            mentions.append(mention)
    lo, hi = profile.prv_subs
    n_subs = int(rng.integers(lo, hi + 1))
    subs = []
    claims = []
    for _ in range(n_subs):
        name = op_names[int(rng.integers(0, len(op_names)))]
        j = int(rng.integers(0, m))
        subs.append({"op": name, "args": [f"E_{j}"]})
        claims.append(f"{_PRV_OP_WORDS[name]} {mentions[j]}")
    text = ("prove that " + " and ".join(mentions) + " hold . show " +
            " then ".join(claims) + " .")
    return text, subs


def synth_generate(n: int, registry: DslRegistry, seed: int = 0,
                   profile: SynthProfile | None = None) -> list[DatasetRecord]:
    """Deterministic synthetic corpus: same seed, same bytes."""
    profile = profile or SynthProfile()
    rng = np.random.default_rng(np.random.PCG64(seed))
    n_cal = int(round(n * profile.cal_fraction))
    type_names = ["cal"] * n_cal + ["prv"] * (n - n_cal)
    rng.shuffle(type_names)
    records = []
    for i, type_name in enumerate(type_names):
        if type_name == "cal":
            text, subs = _synth_cal(rng, registry, profile)
            bias_lo, bias_hi = 0, profile.patch_dim // 2
        else:
            text, subs = _synth_prv(rng, registry, profile)
            bias_lo, bias_hi = profile.patch_dim // 2, profile.patch_dim
        patches = rng.normal(0.0, 0.5, size=(profile.n_patches, profile.patch_dim))
        patches[:, bias_lo:bias_hi] += 0.8
        records.append(DatasetRecord(
            uid=f"syn-{i:05d}",
            text=text,
            type_name=type_name,
            program=subs,
            patches=np.round(patches, 6).tolist(),
        ))
    return records


# --- checkpoints ---

def _header_bytes(state: ModelState) -> bytes:
    manifest = []
    offset = 0
    for name, t in state.params.items():
        r, c = t.data.shape
        manifest.append({"name": name, "rows": r, "cols": c, "offset": offset})
        offset += r * c
    header = {
        "config": {
            "hidden": state.config.hidden,
            "layers": state.config.layers,
            "patch_dim": state.config.patch_dim,
            "softmax_mode": state.config.softmax_mode,
            "cache_strategy": state.config.cache_strategy,
        },
        "registry": state.registry.doc,
        "vocab": state.vocab.tokens,
        "tensors": manifest,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(state: ModelState, path: str) -> None:
    blob = _header_bytes(state)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for t in state.params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path: str, expected: ModelConfig | None = None) -> ModelState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:len(MAGIC)] != MAGIC:
        raise VersionMismatch(f"{path}: not a model checkpoint (bad magic)")
    if len(raw) < len(MAGIC) + 8:
        raise CorruptTensor(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    at = len(MAGIC) + 8
    if at + hlen > len(raw):
        raise CorruptTensor(f"{path}: header length {hlen} overruns the file")
    try:
        header = json.loads(raw[at:at + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptTensor(f"{path}: unreadable header ({e})") from None

    try:
        config = ModelConfig(**header["config"])
        registry = build_registry(header["registry"])
        vocab = Vocabulary(header["vocab"])
        manifest = header["tensors"]
    except (KeyError, TypeError, ValueError, RegistryError) as e:
        raise CorruptTensor(f"{path}: invalid header contents ({e})") from None

    if expected is not None:
        stored = {f: getattr(config, f) for f in ("hidden", "layers", "patch_dim")}
        wanted = {f: getattr(expected, f) for f in ("hidden", "layers", "patch_dim")}
        if stored != wanted:
            diffs = ", ".join(f"{k}: checkpoint {stored[k]} vs requested {wanted[k]}"
                              for k in stored if stored[k] != wanted[k])
            raise CheckpointError(
                f"{path}: stored shapes do not fit the requested config ({diffs}); "
                f"e.g. tensor {manifest[0]['name']!r} is "
                f"{manifest[0]['rows']}x{manifest[0]['cols']} on disk")

    shapes = parameter_shapes(config, registry, len(vocab.tokens))
    if [m["name"] for m in manifest] != list(shapes):
        raise CorruptTensor(f"{path}: tensor manifest does not match the layout")
    payload = raw[at + hlen:]
    total = sum(m["rows"] * m["cols"] for m in manifest)
    if len(payload) != 4 * total:
        raise CorruptTensor(f"{path}: payload is {len(payload)} bytes, expected {4 * total}")
    params: dict[str, Tensor] = {}
    for m in manifest:
        name, r, c = m["name"], m["rows"], m["cols"]
        if (r, c) != shapes[name]:
            raise CorruptTensor(f"{path}: tensor {name!r} is {r}x{c}, layout wants "
                                f"{shapes[name][0]}x{shapes[name][1]}")
        flat = np.frombuffer(payload, dtype="<f4", count=r * c, offset=4 * m["offset"])
        params[name] = Tensor(flat.astype(np.float64).reshape(r, c), requires_grad=True)
    return ModelState(config, registry, vocab, params)
