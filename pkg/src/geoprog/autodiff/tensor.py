"""Dense 2-D float64 tensors with a reverse-mode tape.

Everything in the model is a (rows, cols) matrix; vectors are 1-row matrices.
Recording is opt-in: operations only append backward closures while a
:class:`Tape` is active, so inference runs the same code with zero tape
overhead.  The backward pass replays closures in exact reverse forward order,
which keeps gradient accumulation deterministic.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = ["Tensor", "Tape", "active_tape"]

_state = threading.local()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of forward operations for one backward pass."""

    def __init__(self):
        self._records: list = []

    def __enter__(self) -> "Tape":
        if getattr(_state, "tape", None) is not None:
            raise RuntimeError("a tape is already recording in this thread")
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = None

    def record(self, fn) -> None:
        self._records.append(fn)

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, root: Tensor) -> None:
        """Seed d(root)/d(root) = 1 and replay records newest-first."""
        if root.data.size != 1:
            raise ValueError("backward root must be a 1x1 tensor")
        root.accumulate(np.ones((1, 1)))
        for fn in reversed(self._records):
            fn()


def active_tape() -> Tape | None:
    return getattr(_state, "tape", None)
