"""Gated-recurrent cell and its fused sequence op.

The whole recurrence over a sequence is a single tape record: the input-side
projections and all parameter gradients are batched matrix products, and only
the strictly sequential part runs in the selected kernel backend.  Gate
convention: ``h' = (1 - z) * h + z * c``, so an update gate forced to zero
passes the hidden state through unchanged.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, active_tape

_GATE_NAMES = ("w_z", "w_r", "w_c", "u_z", "u_r", "u_c", "b_z", "b_r", "b_c")


class GatedRecurrentCell:
    """Parameter bundle: input weights w_*, recurrent weights u_*, biases b_*."""

    def __init__(self, w_z, w_r, w_c, u_z, u_r, u_c, b_z, b_r, b_c):
        self.w_z, self.w_r, self.w_c = w_z, w_r, w_c
        self.u_z, self.u_r, self.u_c = u_z, u_r, u_c
        self.b_z, self.b_r, self.b_c = b_z, b_r, b_c

    @classmethod
    def param_names(cls) -> tuple[str, ...]:
        return _GATE_NAMES

    def parameters(self) -> list[Tensor]:
        return [getattr(self, n) for n in _GATE_NAMES]


def gru_sequence(cell: GatedRecurrentCell, xs: Tensor, h0: Tensor,
                 reverse: bool = False) -> Tensor:
    """Run the cell over the rows of ``xs`` starting from ``h0``.

    Returns the per-step hidden states aligned with the input rows; with
    ``reverse=True`` the recurrence runs from the last row to the first, and
    the output stays input-aligned.
    """
    T = xs.shape[0]
    if T == 0:
        raise ValueError("empty input sequence")
    x = xs.data[::-1] if reverse else xs.data
    x = np.ascontiguousarray(x)
    wz, wr, wc = cell.w_z.data, cell.w_r.data, cell.w_c.data
    uz, ur, uc = cell.u_z.data, cell.u_r.data, cell.u_c.data
    xz = x @ wz.T + cell.b_z.data
    xr = x @ wr.T + cell.b_r.data
    xc = x @ wc.T + cell.b_c.data
    H, Z, R, C = kernels.gru_seq_forward(xz, xr, xc, uz, ur, uc, h0.data[0])
    out = Tensor(H[::-1] if reverse else H)

    tape = active_tape()
    inputs = (xs, h0, *cell.parameters())
    if tape is None or not any(t.requires_grad for t in inputs):
        return out

    out.requires_grad = True

    def record():
        g = out.grad
        if g is None:
            return
        gh_out = np.ascontiguousarray(g[::-1] if reverse else g)
        hprev = np.vstack([h0.data, H[:-1]])
        GZ, GR, GC, gh0 = kernels.gru_seq_backward(gh_out, Z, R, C, hprev, uz, ur, uc)
        if xs.requires_grad:
            gx = GZ @ wz + GR @ wr + GC @ wc
            xs.accumulate(gx[::-1] if reverse else gx)
        if h0.requires_grad:
            h0.accumulate(gh0[None, :])
        if cell.w_z.requires_grad:
            cell.w_z.accumulate(GZ.T @ x)
            cell.w_r.accumulate(GR.T @ x)
            cell.w_c.accumulate(GC.T @ x)
            cell.u_z.accumulate(GZ.T @ hprev)
            cell.u_r.accumulate(GR.T @ hprev)
            cell.u_c.accumulate(GC.T @ (R * hprev))
            cell.b_z.accumulate(GZ.sum(axis=0, keepdims=True))
            cell.b_r.accumulate(GR.sum(axis=0, keepdims=True))
            cell.b_c.accumulate(GC.sum(axis=0, keepdims=True))

    tape.record(record)
    return out


def gru_step(cell: GatedRecurrentCell, x: Tensor, h: Tensor) -> Tensor:
    """One recurrence step: a length-1 sequence.  Returns the new hidden row."""
    return gru_sequence(cell, x, h)
