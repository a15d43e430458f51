"""Desk-scale solver that turns geometry word problems into executable programs.

Everything trains from scratch on CPU: a joint text and diagram encoder, a
problem-type classifier, and a program generator that decodes operators and
operands with separate recurrent cells under registry-driven masks.  Decoding
is hierarchical beam search over sub-programs.
"""

from .beam import BeamConfig, exhaustive_oracle, hbeam_decode, score_program
from .classifier import classify, type_distribution
from .data import (
    DatasetRecord,
    SynthProfile,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
    synth_generate,
)
from .encoder import PreprocessedProblem, Vocabulary, encode, preprocess
from .errors import GeoprogError
from .generator import greedy_decode
from .model import ModelConfig, ModelState, init_model
from .program import (
    SolutionProgram,
    SubProgram,
    canonical_equal,
    execute_cal,
    from_flat,
    operand_count_histogram,
    to_flat,
    validate,
)
from .registry import DslRegistry, SymbolTable, build_registry, load_registry
from .training import TopKReport, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BeamConfig", "DatasetRecord", "DslRegistry", "GeoprogError", "ModelConfig",
    "ModelState", "PreprocessedProblem", "SolutionProgram", "SubProgram",
    "SymbolTable", "SynthProfile", "TopKReport", "TrainConfig", "Vocabulary",
    "build_registry", "canonical_equal", "classify", "encode", "evaluate",
    "execute_cal", "exhaustive_oracle", "from_flat", "greedy_decode",
    "hbeam_decode", "init_model", "load_checkpoint", "load_dataset",
    "load_registry", "operand_count_histogram", "preprocess", "save_checkpoint",
    "save_dataset", "score_program", "synth_generate", "to_flat", "train",
    "type_distribution", "validate", "__version__",
]
