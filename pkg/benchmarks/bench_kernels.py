"""Timing comparison of the recurrence kernels: compiled extension vs numpy.

Runs the fused GRU sequence forward and backward kernels on a grid of
(sequence length, hidden size) shapes and reports per-call times for both
backends, plus the maximum numerical disagreement between them.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 30] [--hidden 32,64,128]
    [--lengths 16,64,256]
"""

import argparse
import time

import numpy as np

from geoprog.autodiff.kernels import numpy_backend

try:
    from geoprog.autodiff.kernels import _core
except ImportError:
    _core = None


def make_inputs(rng, T, h):
    xs = [rng.normal(size=(T, h)) for _ in range(3)]
    us = [rng.normal(size=(h, h)) / np.sqrt(h) for _ in range(3)]
    h0 = rng.normal(size=h)
    return xs, us, h0


def time_call(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_shape(rng, T, h, repeats):
    xs, us, h0 = make_inputs(rng, T, h)
    fwd_args = (*xs, *us, h0)
    gh_out = rng.normal(size=(T, h))
    rows = []
    outputs = {}
    for label, mod in (("numpy", numpy_backend), ("compiled", _core)):
        if mod is None:
            continue
        H, Z, R, C = mod.gru_seq_forward(*fwd_args)
        hprev = np.vstack([h0, H[:-1]])
        bwd_args = (gh_out, Z, R, C, hprev, *us)
        outputs[label] = (H, *mod.gru_seq_backward(*bwd_args))
        fwd_s = time_call(mod.gru_seq_forward, fwd_args, repeats)
        bwd_s = time_call(mod.gru_seq_backward, bwd_args, repeats)
        rows.append((label, T, h, fwd_s, bwd_s))
    drift = None
    if len(outputs) == 2:
        drift = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
                    for a, b in zip(outputs["numpy"], outputs["compiled"]))
    return rows, drift


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--hidden", default="32,64,128")
    parser.add_argument("--lengths", default="16,64,256")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _core is None:
        print("compiled extension not built; timing the numpy backend only")
    rng = np.random.default_rng(args.seed)
    hs = [int(x) for x in args.hidden.split(",")]
    ts = [int(x) for x in args.lengths.split(",")]

    print(f"{'backend':<10} {'T':>5} {'h':>5} {'fwd ms':>9} {'bwd ms':>9}")
    for h in hs:
        for T in ts:
            rows, drift = bench_shape(rng, T, h, args.repeats)
            timing = {}
            for label, T_, h_, fwd_s, bwd_s in rows:
                timing[label] = (fwd_s, bwd_s)
                print(f"{label:<10} {T_:>5} {h_:>5} {fwd_s * 1e3:>9.3f} {bwd_s * 1e3:>9.3f}")
            if len(timing) == 2:
                f_ratio = timing["numpy"][0] / timing["compiled"][0]
                b_ratio = timing["numpy"][1] / timing["compiled"][1]
                print(f"{'':<10} {'':>5} {'':>5} speedup {f_ratio:>5.1f}x"
                      f" / {b_ratio:>4.1f}x, max |diff| {drift:.3e}")
    print("done")


if __name__ == "__main__":
    main()
