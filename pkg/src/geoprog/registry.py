"""Typed symbol registry for the geometry program DSL.

A registry is built from a plain JSON document (see resources/default_registry.json)
listing problem types, operators with type membership and arity bounds, named
constants, and decode limits.  Construction adds three control tokens (``sos``,
``eos_operand``, ``eop``) and pre-allocates one cache token ``#j`` per possible
sub-program, so the static symbol table is fixed for the lifetime of the model.

Per-problem dynamic symbols (``N_j`` for extracted numbers, ``E_j`` for detected
elements) are appended after the static table; ids are therefore only meaningful
relative to a problem, which :class:`SymbolTable` makes explicit.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources as _resources

import numpy as np

from .errors import (
    DuplicateSymbol,
    InvalidRegistryDoc,
    UnknownProblemType,
    UnknownSymbol,
)

# symbol kinds
OPERATOR = "operator"
CONSTANT = "constant"
CACHE = "cache_token"
CONTROL = "control"
NUMBER = "dynamic_number"
ELEMENT = "dynamic_element"

# control token surfaces
SOS = "sos"
EOS_OPERAND = "eos_operand"
EOP = "eop"

SymbolId = int

_CACHE_ALIAS_RE = re.compile(r"^V_(\d+)$")


@dataclass(frozen=True)
class ProblemType:
    name: str
    id: int


@dataclass(frozen=True)
class SymbolEntry:
    """One row of a symbol table.

    ``types`` is the set of problem-type names the symbol belongs to; empty for
    kinds that are always available (controls, cache tokens, dynamics).
    ``value`` is set for constants, ``min_args``/``max_args`` for operators.
    """

    surface: str
    kind: str
    types: frozenset[str] = frozenset()
    value: float | None = None
    min_args: int = 0
    max_args: int = 0


@dataclass
class SymbolMask:
    """Boolean allow-vector over a problem's full symbol table."""

    allowed: np.ndarray

    def __len__(self) -> int:
        return len(self.allowed)


class DslRegistry:
    """Static symbol table plus per-type views.  Built via :func:`build_registry`."""

    def __init__(self, doc: dict, types: list[ProblemType], entries: list[SymbolEntry],
                 max_op: int, max_oe: int):
        self.doc = doc
        self.types = types
        self.entries = entries
        self.max_op = max_op
        self.max_oe = max_oe
        self._by_surface: dict[str, SymbolId] = {}
        for i, e in enumerate(entries):
            if e.surface in self._by_surface:
                raise DuplicateSymbol(e.surface)
            self._by_surface[e.surface] = i
        self._by_type_name = {t.name: t for t in types}
        self.sos_id = self._by_surface[SOS]
        self.eos_operand_id = self._by_surface[EOS_OPERAND]
        self.eop_id = self._by_surface[EOP]
        self.cache_ids = [i for i, e in enumerate(entries) if e.kind == CACHE]
        self.operator_ids = [i for i, e in enumerate(entries) if e.kind == OPERATOR]
        self.constant_ids = [i for i, e in enumerate(entries) if e.kind == CONSTANT]

    # -- lookups ------------------------------------------------------------

    @property
    def static_size(self) -> int:
        return len(self.entries)

    def problem_type(self, name: str) -> ProblemType:
        try:
            return self._by_type_name[name]
        except KeyError:
            raise UnknownProblemType(name) from None

    def lookup(self, surface: str) -> SymbolId:
        """Resolve a static surface form; accepts ``V_j`` as an alias for ``#j``."""
        m = _CACHE_ALIAS_RE.match(surface)
        if m:
            surface = "#" + m.group(1)
        try:
            return self._by_surface[surface]
        except KeyError:
            raise UnknownSymbol(surface) from None

    def surface(self, sid: SymbolId) -> str:
        return self.entries[sid].surface

    def kind(self, sid: SymbolId) -> str:
        return self.entries[sid].kind

    def cache_id(self, j: int) -> SymbolId:
        return self.cache_ids[j]

    def constant_value(self, surface: str, default: float | None = None) -> float | None:
        sid = self._by_surface.get(surface)
        if sid is None or self.entries[sid].kind != CONSTANT:
            return default
        return self.entries[sid].value

    # -- per-problem views ----------------------------------------------------

    def dynamic_symbols(self, problem) -> list[SymbolEntry]:
        """Dynamic entries for a preprocessed problem: numbers first, then elements."""
        out = []
        for j in range(len(problem.number_spans)):
            out.append(SymbolEntry(surface=f"N_{j}", kind=NUMBER))
        for j in range(len(problem.element_spans)):
            out.append(SymbolEntry(surface=f"E_{j}", kind=ELEMENT))
        return out

    def table_for(self, problem) -> "SymbolTable":
        return SymbolTable(self, self.dynamic_symbols(problem))

    def type_mask(self, type_name: str, problem) -> SymbolMask:
        """Allow-vector for one problem type over the problem's full table.

        Statics are allowed iff the type is in their membership set; control
        tokens, cache tokens, and the problem's dynamic symbols are always
        allowed.  Mode-specific restrictions (operator vs operand position,
        cache availability) are applied later by the decoder.
        """
        if type_name not in self._by_type_name:
            raise UnknownProblemType(type_name)
        n_dyn = len(problem.number_spans) + len(problem.element_spans)
        allowed = np.zeros(self.static_size + n_dyn, dtype=bool)
        for i, e in enumerate(self.entries):
            if e.kind in (CONTROL, CACHE) or type_name in e.types:
                allowed[i] = True
        allowed[self.static_size:] = True
        return SymbolMask(allowed)


@dataclass
class SymbolTable:
    """Static registry entries joined with one problem's dynamic entries."""

    registry: DslRegistry
    dynamic: list[SymbolEntry]
    _dyn_ids: dict[str, SymbolId] = field(init=False)

    def __post_init__(self):
        base = self.registry.static_size
        self._dyn_ids = {e.surface: base + j for j, e in enumerate(self.dynamic)}

    def __len__(self) -> int:
        return self.registry.static_size + len(self.dynamic)

    def entry(self, sid: SymbolId) -> SymbolEntry:
        base = self.registry.static_size
        return self.registry.entries[sid] if sid < base else self.dynamic[sid - base]

    def surface(self, sid: SymbolId) -> str:
        return self.entry(sid).surface

    def kind(self, sid: SymbolId) -> str:
        return self.entry(sid).kind

    def lookup(self, surface: str) -> SymbolId:
        sid = self._dyn_ids.get(surface)
        if sid is not None:
            return sid
        return self.registry.lookup(surface)

    def surfaces(self) -> list[str]:
        return [e.surface for e in self.registry.entries] + [e.surface for e in self.dynamic]


def build_registry(doc: dict) -> DslRegistry:
    """Validate a registry document and build the static symbol table.

    Table order: control tokens, operators (document order), constants
    (document order), cache tokens.  Raises :class:`InvalidRegistryDoc` or
    :class:`DuplicateSymbol` on bad input.
    """
    if not isinstance(doc, dict):
        raise InvalidRegistryDoc("registry document must be a JSON object")
    type_names = doc.get("types")
    if not type_names or not isinstance(type_names, list):
        raise InvalidRegistryDoc("registry needs a non-empty 'types' list")
    if len(set(type_names)) != len(type_names):
        raise InvalidRegistryDoc("duplicate problem type name")
    types = [ProblemType(name, i) for i, name in enumerate(type_names)]
    known = set(type_names)

    limits = doc.get("limits", {})
    max_op = int(limits.get("max_op", 6))
    max_oe = int(limits.get("max_oe", 4))
    if max_op < 1 or max_oe < 1:
        raise InvalidRegistryDoc("limits.max_op and limits.max_oe must be >= 1")

    entries = [
        SymbolEntry(SOS, CONTROL),
        SymbolEntry(EOS_OPERAND, CONTROL),
        SymbolEntry(EOP, CONTROL),
    ]
    for spec in doc.get("operators", []):
        tset = frozenset(spec.get("types", []))
        if not tset:
            raise InvalidRegistryDoc(f"operator {spec.get('surface')!r} has an empty type set")
        if not tset <= known:
            raise InvalidRegistryDoc(f"operator {spec.get('surface')!r} names an unknown type")
        lo = int(spec.get("min_args", 1))
        hi = int(spec.get("max_args", lo))
        if lo < 1 or hi < lo:
            raise InvalidRegistryDoc(f"operator {spec.get('surface')!r} has bad arity bounds")
        if hi > max_oe:
            raise InvalidRegistryDoc(f"operator {spec.get('surface')!r} exceeds limits.max_oe")
        entries.append(SymbolEntry(spec["surface"], OPERATOR, tset, min_args=lo, max_args=hi))
    for spec in doc.get("constants", []):
        tset = frozenset(spec.get("types", []))
        if not tset:
            raise InvalidRegistryDoc(f"constant {spec.get('surface')!r} has an empty type set")
        if not tset <= known:
            raise InvalidRegistryDoc(f"constant {spec.get('surface')!r} names an unknown type")
        entries.append(SymbolEntry(spec["surface"], CONSTANT, tset, value=float(spec["value"])))
    for j in range(max_op):
        entries.append(SymbolEntry(f"#{j}", CACHE))

    for e in entries:
        if _CACHE_ALIAS_RE.match(e.surface):
            raise InvalidRegistryDoc(f"surface {e.surface!r} collides with the cache alias scheme")

    return DslRegistry(doc, types, entries, max_op, max_oe)


def load_registry(path: str | None = None) -> DslRegistry:
    """Load a registry document from ``path``, or the packaged default."""
    if path is None:
        text = _resources.files("geoprog.resources").joinpath("default_registry.json").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return build_registry(json.loads(text))
