"""Problem preprocessing and the joint text/diagram encoder.

Preprocessing normalizes geometry glyphs to terminology words, isolates
numbers, and detects element phrases (a terminology word followed by 1-4
single capital-letter point names).  Each detected element is appended once
after a ``<sep>`` marker so that every dynamic element owns a contiguous span
of token positions; ``N_j`` / ``E_j`` symbols later bind to these positions.

Encoding embeds tokens and projected patch features into one sequence and
contextualizes it with stacked bidirectional gated-recurrent layers (the two
directions are summed, keeping width h).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, gru_sequence
from .autodiff.ops import add, concat, gather_rows, linear, mean_rows, row
from .program import SolutionProgram
from .registry import ProblemType

GLYPHS = {"△": "triangle", "∠": "angle", "⊙": "circle", "∥": "parallel"}
TERM_WORDS = frozenset(GLYPHS.values())
SEP = "<sep>"
UNK = "<unk>"

_NUMBER_RE = re.compile(r"^\d+(?:\.\d+)?$")
_TOKEN_RE = re.compile(r"<sep>|\d+(?:\.\d+)?|[A-Za-z]+|\S")


@dataclass
class PreprocessedProblem:
    """Tokenized problem with dynamic-symbol anchors.

    ``number_spans`` holds (token index, parsed value) per extracted number;
    ``element_spans`` holds [start, end) token ranges over the appended
    element copies.  ``patch_features`` is an (n, p) array or None.
    """

    tokens: list[str]
    number_spans: list[tuple[int, float]]
    element_spans: list[tuple[int, int]]
    patch_features: np.ndarray | None = None
    problem_type: ProblemType | None = None
    gold_program: SolutionProgram | None = None
    uid: str = ""


def tokenize(text: str) -> list[str]:
    for glyph, word in GLYPHS.items():
        text = text.replace(glyph, f" {word} ")
    out: list[str] = []
    for tok in _TOKEN_RE.findall(text):
        if tok.isalpha() and tok.isupper() and 2 <= len(tok) <= 4:
            out.extend(tok)  # point-name run like "SUW" -> "S", "U", "W"
        else:
            out.append(tok)
    return out


def _detect_elements(tokens: list[str]) -> list[tuple[str, tuple[str, ...]]]:
    found: list[tuple[str, tuple[str, ...]]] = []
    seen = set()
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in TERM_WORDS:
            letters = []
            j = i + 1
            while j < len(tokens) and len(letters) < 4:
                t = tokens[j]
                if len(t) == 1 and t.isalpha() and t.isupper():
                    letters.append(t)
                    j += 1
                else:
                    break
            if letters:
                phrase = (tok, tuple(letters))
                if phrase not in seen:
                    seen.add(phrase)
                    found.append(phrase)
                i = j
                continue
        i += 1
    return found


def preprocess(text: str, patches: np.ndarray | list | None = None,
               uid: str = "") -> PreprocessedProblem:
    """Tokenize, extract numbers, detect elements, and append element copies.

    Idempotent on its own output: anything after an existing ``<sep>`` is
    treated as a previous run's appendix and excluded from re-detection.
    """
    tokens = tokenize(text)
    if SEP in tokens:
        tokens = tokens[:tokens.index(SEP)]

    number_spans = [(i, float(t)) for i, t in enumerate(tokens) if _NUMBER_RE.match(t)]
    elements = _detect_elements(tokens)

    element_spans: list[tuple[int, int]] = []
    if elements:
        tokens = tokens + [SEP]
        for word, letters in elements:
            start = len(tokens)
            tokens = tokens + [word, *letters]
            element_spans.append((start, len(tokens)))

    feats = None
    if patches is not None:
        feats = np.asarray(patches, dtype=np.float64)
        if feats.size == 0:
            feats = None
        elif feats.ndim != 2:
            raise ValueError(f"patch features must be 2-D, got shape {feats.shape}")
    return PreprocessedProblem(tokens, number_spans, element_spans, feats, uid=uid)


class Vocabulary:
    """Token-to-index map; index order is part of the checkpoint contract."""

    def __init__(self, tokens: list[str]):
        self.tokens = list(tokens)
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        if UNK not in self._index:
            raise ValueError("vocabulary must contain the unknown token")

    @classmethod
    def build(cls, problems) -> "Vocabulary":
        """Collect every token (min frequency 1) in first-appearance order."""
        tokens = [UNK, SEP]
        seen = set(tokens)
        for p in problems:
            for t in p.tokens:
                if t not in seen:
                    seen.add(t)
                    tokens.append(t)
        return cls(tokens)

    def index(self, token: str) -> int:
        return self._index.get(token, self._index[UNK])

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class JointRepresentation:
    """Contextualized rows: text positions first, then patch positions."""

    rows: Tensor
    text_len: int
    n_patches: int


def encode(state, problem: PreprocessedProblem) -> JointRepresentation:
    """Embed tokens and patches, then run the stacked bidirectional layers."""
    params = state.params
    idx = [state.vocab.index(t) for t in problem.tokens]
    if not idx:
        raise ValueError("cannot encode an empty problem")
    parts = [gather_rows(params["embed.tokens"], idx)]
    n_patches = 0
    if problem.patch_features is not None:
        p = problem.patch_features
        if p.shape[1] != state.config.patch_dim:
            raise ValueError(
                f"patch dimension {p.shape[1]} does not match model patch_dim "
                f"{state.config.patch_dim}")
        n_patches = p.shape[0]
        proj = add(linear(Tensor(p), params["embed.patch_w"]), params["embed.patch_b"])
        parts.append(proj)
    x = concat(parts, axis=0) if len(parts) > 1 else parts[0]

    h0 = Tensor(np.zeros((1, state.config.hidden)))
    for fwd, bwd in state.encoder_cells:
        x = add(gru_sequence(fwd, x, h0), gru_sequence(bwd, x, h0, reverse=True))
    return JointRepresentation(x, len(problem.tokens), n_patches)


def element_value_vectors(rep: JointRepresentation, problem: PreprocessedProblem) -> list[Tensor]:
    """Value vectors for the problem's dynamic symbols, numbers then elements.

    A number takes its token's contextualized row; an element takes the mean
    over its appended-copy span.
    """
    out = []
    for i, _value in problem.number_spans:
        out.append(row(rep.rows, i))
    for lo, hi in problem.element_spans:
        out.append(mean_rows(rep.rows, lo, hi))
    return out
