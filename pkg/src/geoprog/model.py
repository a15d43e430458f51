"""Model state: configuration plus every learnable tensor, by name.

The parameter dict is ordered and its key set is a function of the
configuration, registry, and vocabulary alone; checkpoints serialize the
tensors in this exact order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import GatedRecurrentCell, Tensor
from .encoder import Vocabulary
from .registry import DslRegistry

SOFTMAX_MODES = ("normalized", "literal")
CACHE_STRATEGIES = ("last_operand_query", "operator_query", "operator_embedding")


@dataclass
class ModelConfig:
    hidden: int = 64
    layers: int = 2
    patch_dim: int = 16
    softmax_mode: str = "normalized"
    cache_strategy: str = "last_operand_query"

    def validate(self) -> None:
        if self.hidden < 1 or self.layers < 1 or self.patch_dim < 1:
            raise ValueError("hidden, layers, and patch_dim must be positive")
        if self.softmax_mode not in SOFTMAX_MODES:
            raise ValueError(f"softmax_mode must be one of {SOFTMAX_MODES}")
        if self.cache_strategy not in CACHE_STRATEGIES:
            raise ValueError(f"cache_strategy must be one of {CACHE_STRATEGIES}")


class ModelState:
    """Bundles config, registry, vocabulary, and named parameters."""

    def __init__(self, config: ModelConfig, registry: DslRegistry, vocab: Vocabulary,
                 params: dict[str, Tensor]):
        config.validate()
        self.config = config
        self.registry = registry
        self.vocab = vocab
        self.params = params
        self.encoder_cells = [
            (self._cell(f"enc.l{i}.fwd"), self._cell(f"enc.l{i}.bwd"))
            for i in range(config.layers)
        ]
        self.cell_op = self._cell("gen.cell_op")
        self.cell_oe = self._cell("gen.cell_oe")

    def _cell(self, prefix: str) -> GatedRecurrentCell:
        return GatedRecurrentCell(
            *[self.params[f"{prefix}.{n}"] for n in GatedRecurrentCell.param_names()])

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()


def parameter_shapes(config: ModelConfig, registry: DslRegistry,
                     vocab_size: int) -> dict[str, tuple[int, int]]:
    """The full named-parameter layout for a given setup."""
    h = config.hidden
    c = len(registry.types)
    shapes: dict[str, tuple[int, int]] = {
        "embed.tokens": (vocab_size, h),
        "embed.patch_w": (h, config.patch_dim),
        "embed.patch_b": (1, h),
    }

    def cell(prefix: str):
        for n in GatedRecurrentCell.param_names():
            shapes[f"{prefix}.{n}"] = (1, h) if n.startswith("b_") else (h, h)

    for i in range(config.layers):
        cell(f"enc.l{i}.fwd")
        cell(f"enc.l{i}.bwd")
    shapes["cls.w1"] = (c, h)
    shapes["gen.w2"] = (h, 2 * h)
    shapes["gen.w3"] = (h, h)
    shapes["gen.w4"] = (h, h)
    shapes["gen.w5"] = (h, h)
    shapes["gen.w_v"] = (h, h)
    cell("gen.cell_op")
    cell("gen.cell_oe")
    shapes["gen.symbols"] = (registry.static_size, h)
    shapes["gen.cache_init"] = (1, h)
    return shapes


def init_model(config: ModelConfig, registry: DslRegistry, vocab: Vocabulary,
               seed: int = 0) -> ModelState:
    """Seeded uniform init, biases zero.  Draw order follows the layout dict."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    bound = 1.0 / np.sqrt(config.hidden)
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config, registry, len(vocab)).items():
        if name.split(".")[-1].startswith("b_") or name == "embed.patch_b":
            data = np.zeros(shape)
        else:
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data, requires_grad=True)
    return ModelState(config, registry, vocab, params)
