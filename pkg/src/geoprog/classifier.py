"""Problem-type classification over the encoded representation.

The text rows (never the patch rows) are sum-pooled and projected to one
logit per problem type.  The predicted type selects the decode-time symbol
mask, so a misclassification restricts the generator to the wrong DSL subset;
at training time the gold type is used instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .autodiff.ops import linear, softmax, sum_rows
from .encoder import JointRepresentation, PreprocessedProblem
from .registry import ProblemType, SymbolMask


@dataclass
class TypeDistribution:
    probs: np.ndarray
    best: ProblemType


def type_distribution(state, rep: JointRepresentation) -> Tensor:
    """Differentiable (1, c) distribution over problem types."""
    pooled = sum_rows(rep.rows, 0, rep.text_len)
    return softmax(linear(pooled, state.params["cls.w1"]))


def classify(state, rep: JointRepresentation) -> TypeDistribution:
    probs = type_distribution(state, rep).data[0]
    best = state.registry.types[int(np.argmax(probs))]  # first max = lowest type id
    return TypeDistribution(probs, best)


def predict_mask(state, rep: JointRepresentation, problem: PreprocessedProblem,
                 override: ProblemType | None = None) -> tuple[ProblemType, SymbolMask]:
    """Pick the problem type (or honor the gold override) and build its mask."""
    ptype = override if override is not None else classify(state, rep).best
    return ptype, state.registry.type_mask(ptype.name, problem)
