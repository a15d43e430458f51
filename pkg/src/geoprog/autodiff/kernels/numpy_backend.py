"""Reference implementation of the recurrence kernels.

The gated-recurrent step has a strict sequential dependency over time, so the
only thing a compiled backend can win is the per-step dispatch overhead; the
surrounding projections are plain matrix products and stay in numpy either way.
Both backends implement exactly this contract:

``gru_seq_forward(xz, xr, xc, uz, ur, uc, h0)``
    ``xz/xr/xc`` are the precomputed input-side preactivations, shape (T, h);
    ``uz/ur/uc`` the recurrent matrices (h, h); ``h0`` the initial hidden (h,).
    Returns ``H, Z, R, C``: hidden states and gate activations per step.

``gru_seq_backward(gh_out, Z, R, C, hprev, uz, ur, uc)``
    ``gh_out`` is the loss gradient w.r.t. each hidden output, ``hprev`` the
    stacked previous hiddens (h0 then H[:-1]).  Returns the gradients w.r.t.
    the three preactivations plus ``gh0``.
"""

import numpy as np


def _logistic(x):
    out = np.empty_like(x)
    np.negative(x, out)
    np.exp(out, out)
    out += 1.0
    np.reciprocal(out, out)
    return out


def gru_seq_forward(xz, xr, xc, uz, ur, uc, h0):
    T, h = xz.shape
    H = np.empty((T, h))
    Z = np.empty((T, h))
    R = np.empty((T, h))
    C = np.empty((T, h))
    hp = h0
    uzT, urT, ucT = uz.T, ur.T, uc.T
    for t in range(T):
        z = _logistic(xz[t] + hp @ uzT)
        r = _logistic(xr[t] + hp @ urT)
        c = np.tanh(xc[t] + (r * hp) @ ucT)
        hp = (1.0 - z) * hp + z * c
        Z[t] = z
        R[t] = r
        C[t] = c
        H[t] = hp
    return H, Z, R, C


def gru_seq_backward(gh_out, Z, R, C, hprev, uz, ur, uc):
    T, h = gh_out.shape
    GZ = np.empty((T, h))
    GR = np.empty((T, h))
    GC = np.empty((T, h))
    gh = np.zeros(h)
    for t in range(T - 1, -1, -1):
        ght = gh + gh_out[t]
        z = Z[t]
        r = R[t]
        c = C[t]
        hp = hprev[t]
        gz = ght * (c - hp) * z * (1.0 - z)
        gc = ght * z * (1.0 - c * c)
        grh = gc @ uc
        gr = grh * hp * r * (1.0 - r)
        gh = ght * (1.0 - z) + grh * r + gz @ uz + gr @ ur
        GZ[t] = gz
        GR[t] = gr
        GC[t] = gc
    return GZ, GR, GC, gh
