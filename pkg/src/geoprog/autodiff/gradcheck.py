"""Finite-difference verification of tape gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor


def grad_check(f, params: dict[str, Tensor], eps: float = 1e-5,
               samples: int = 32, seed: int = 0) -> dict[str, float]:
    """Compare tape gradients of ``f()`` against central differences.

    ``f`` must be deterministic and return a 1x1 tensor; it is re-evaluated
    with single coordinates of ``params`` perturbed by +/-eps.  For each named
    tensor up to ``samples`` coordinates are probed (all of them for small
    tensors) and the worst error is reported, where error is
    ``|fd - analytic| / max(|fd|, |analytic|, 1e-6)`` - relative for healthy
    gradients, with an absolute floor so that near-zero gradients are not
    judged against finite-difference roundoff noise.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps outside the trustworthy central-difference range")

    for t in params.values():
        t.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    for t in params.values():
        t.zero_grad()

    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for name, t in params.items():
        size = t.data.size
        k = min(samples, size)
        coords = rng.choice(size, size=k, replace=False)
        worst = 0.0
        flat = t.data.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            hi = f().item()
            flat[c] = orig - eps
            lo = f().item()
            flat[c] = orig
            fd = (hi - lo) / (2.0 * eps)
            an = analytic[name].reshape(-1)[c]
            err = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            if err > worst:
                worst = err
        report[name] = worst
    return report
