"""Primitive differentiable operations over :class:`~geoprog.autodiff.tensor.Tensor`.

Each op computes its forward result eagerly and, when a tape is recording and
some input requires grad, registers one backward closure.  Closures guard on
``out.grad is None`` so branches that never reach the loss cost nothing.
"""

from __future__ import annotations

import numpy as np

from ..errors import AllMasked
from .tensor import Tensor, active_tape


def _track(out: Tensor, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True

        def record():
            if out.grad is not None:
                backward(out.grad)

        tape.record(record)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1-row ``b`` broadcasts over the rows of ``a`` (bias add)."""
    if a.shape == b.shape:
        out = Tensor(a.data + b.data)

        def backward(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(g)

    elif b.shape[0] == 1 and b.shape[1] == a.shape[1]:
        out = Tensor(a.data + b.data)

        def backward(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(g.sum(axis=0, keepdims=True))

    else:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _track(out, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * c)

    return _track(out, (x,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _track(out, (a, b), backward)


def linear(x: Tensor, w: Tensor) -> Tensor:
    """``x @ w.T`` with ``w`` stored (out_dim, in_dim), matching the weight shapes."""
    out = Tensor(x.data @ w.data.T)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ w.data)
        if w.requires_grad:
            w.accumulate(g.T @ x.data)

    return _track(out, (x, w), backward)


def concat(items: list[Tensor], axis: int = 0) -> Tensor:
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    out = Tensor(np.concatenate([t.data for t in items], axis=axis))
    sizes = [t.shape[axis] for t in items]

    def backward(g):
        at = 0
        for t, size in zip(items, sizes):
            if t.requires_grad:
                piece = g[at:at + size] if axis == 0 else g[:, at:at + size]
                t.accumulate(piece)
            at += size

    return _track(out, tuple(items), backward)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * (x.data > 0.0))

    return _track(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * (1.0 - y * y))

    return _track(out, (x,), backward)


def logistic(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(y)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * y * (1.0 - y))

    return _track(out, (x,), backward)


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g / x.data)

    return _track(out, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax."""
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p)

    def backward(g):
        if x.requires_grad:
            inner = (g * p).sum(axis=1, keepdims=True)
            x.accumulate(p * (g - inner))

    return _track(out, (x,), backward)


def masked_softmax(x: Tensor, mask: np.ndarray, normalized: bool = True) -> Tensor:
    """Masked distribution over a single row of logits.

    Normalized mode renormalizes over the allowed entries (a proper
    distribution); the literal mode multiplies the full softmax by the mask,
    so mass on disallowed symbols is dropped rather than redistributed.
    Disallowed entries are exactly zero either way, and the argmax over
    allowed entries is identical between modes.
    """
    if x.shape[0] != 1:
        raise ValueError("masked_softmax expects a single logit row")
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape[0] != x.shape[1]:
        raise ValueError(f"mask length {mask.shape[0]} vs logits {x.shape[1]}")
    if not mask.any():
        raise AllMasked("no allowed symbols at this step")

    if normalized:
        z = x.data[0]
        zm = z[mask]
        e = np.exp(zm - zm.max())
        p = np.zeros_like(z)
        p[mask] = e / e.sum()
        out = Tensor(p[None, :])

        def backward(g):
            if x.requires_grad:
                gm = g[0][mask]
                pm = out.data[0][mask]
                gz = np.zeros_like(g)
                gz[0][mask] = pm * (gm - float(gm @ pm))
                x.accumulate(gz)

    else:
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=1, keepdims=True)
        p = s * mask
        out = Tensor(p)

        def backward(g):
            if x.requires_grad:
                gs = g * mask
                inner = (gs * s).sum(axis=1, keepdims=True)
                x.accumulate(s * (gs - inner))

    return _track(out, (x,), backward)


def sum_rows(x: Tensor, lo: int = 0, hi: int | None = None) -> Tensor:
    """Column-wise sum over the row slice [lo, hi), keeping a 1-row result."""
    if hi is None:
        hi = x.shape[0]
    if not 0 <= lo < hi <= x.shape[0]:
        raise ValueError(f"bad row slice [{lo}, {hi}) for {x.shape[0]} rows")
    out = Tensor(x.data[lo:hi].sum(axis=0, keepdims=True))

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[lo:hi] = g
            x.accumulate(gx)

    return _track(out, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor([[x.data.sum()]])

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.full(x.shape, g[0, 0]))

    return _track(out, (x,), backward)


def mean_rows(x: Tensor, lo: int, hi: int) -> Tensor:
    """Mean of the row slice [lo, hi)."""
    if not 0 <= lo < hi <= x.shape[0]:
        raise ValueError(f"bad row slice [{lo}, {hi}) for {x.shape[0]} rows")
    out = Tensor(x.data[lo:hi].mean(axis=0, keepdims=True))

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[lo:hi] = g / (hi - lo)
            x.accumulate(gx)

    return _track(out, (x,), backward)


def row(x: Tensor, i: int) -> Tensor:
    out = Tensor(x.data[i:i + 1].copy())

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[i] = g[0]
            x.accumulate(gx)

    return _track(out, (x,), backward)


def pick(x: Tensor, i: int, j: int) -> Tensor:
    out = Tensor([[x.data[i, j]]])

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[i, j] = g[0, 0]
            x.accumulate(gx)

    return _track(out, (x,), backward)


def gather_rows(table: Tensor, indices) -> Tensor:
    """Row lookup (embedding): stacks ``table[i]`` for each index."""
    idx = np.asarray(indices, dtype=np.intp)
    out = Tensor(table.data[idx])

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table.accumulate(gt)

    return _track(out, (table,), backward)


def tile_rows(x: Tensor, n: int) -> Tensor:
    """Repeat a 1-row tensor n times."""
    if x.shape[0] != 1:
        raise ValueError("tile_rows expects a single row")
    out = Tensor(np.repeat(x.data, n, axis=0))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g.sum(axis=0, keepdims=True))

    return _track(out, (x,), backward)


def set_row(x: Tensor, i: int, r: Tensor) -> Tensor:
    """Copy of ``x`` with row ``i`` replaced by the 1-row tensor ``r``."""
    if r.shape != (1, x.shape[1]):
        raise ValueError(f"row shape {r.shape} does not fit {x.shape}")
    data = x.data.copy()
    data[i] = r.data[0]
    out = Tensor(data)

    def backward(g):
        if x.requires_grad:
            gx = g.copy()
            gx[i] = 0.0
            x.accumulate(gx)
        if r.requires_grad:
            r.accumulate(g[i:i + 1])

    return _track(out, (x, r), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two equally-shaped tensors, as a 1x1 tensor."""
    if a.shape != b.shape:
        raise ValueError(f"dot shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor([[float(np.vdot(a.data, b.data))]])

    def backward(g):
        if a.requires_grad:
            a.accumulate(g[0, 0] * b.data)
        if b.requires_grad:
            b.accumulate(g[0, 0] * a.data)

    return _track(out, (a, b), backward)
