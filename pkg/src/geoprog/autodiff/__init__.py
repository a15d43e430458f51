"""Minimal reverse-mode autodiff over dense 2-D tensors."""

from .gradcheck import grad_check
from .rnn import GatedRecurrentCell, gru_sequence, gru_step
from .tensor import Tape, Tensor, active_tape

__all__ = [
    "GatedRecurrentCell",
    "Tape",
    "Tensor",
    "active_tape",
    "grad_check",
    "gru_sequence",
    "gru_step",
]
