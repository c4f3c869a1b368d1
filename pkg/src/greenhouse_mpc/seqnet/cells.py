"""LSTM and GRU recurrences.

Gate blocks are stored column-wise in one matrix per source: ``Wx`` maps the
step input, ``Wh`` the previous hidden state, so ``W [h, x] = h Wh + x Wx``.
LSTM blocks are ordered (input, forget, candidate, output); GRU blocks are
(update, reset, candidate), with the reset gate applied to ``h_prev`` before
the candidate's recurrent product.

Sequences are time-major ``(T, B, .)``.  The sequence kernels take the input
projection ``A = X Wx + b`` precomputed for every step and only run the
recurrent part.
"""
from __future__ import annotations

import math

import numba
import numpy as np

LSTM = "lstm"
GRU = "gru"
GATES = {LSTM: 4, GRU: 3}


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _split(w, n):
    return np.split(np.asarray(w, dtype=np.float64), n, axis=-1)


def lstm_cell_forward(x_t, h_prev, c_prev, Wx, Wh, b):
    """One LSTM step. Returns ``(h_t, c_t)``."""
    x_t, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x_t, h_prev, c_prev))
    H = h_prev.shape[-1]
    if Wx.shape != (x_t.shape[-1], 4 * H) or Wh.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ValueError(f"LSTM weight shapes {Wx.shape}, {Wh.shape}, {b.shape} do not match "
                         f"input {x_t.shape[-1]} and hidden {H}")
    if c_prev.shape != h_prev.shape:
        raise ValueError("cell and hidden state shapes differ")
    zi, zf, zg, zo = _split(x_t @ Wx + h_prev @ Wh + b, 4)
    i, f, g, o = sigmoid(zi), sigmoid(zf), np.tanh(zg), sigmoid(zo)
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def gru_cell_forward(x_t, h_prev, Wx, Wh, b):
    """One GRU step. Returns ``h_t``."""
    x_t, h_prev = np.asarray(x_t, dtype=np.float64), np.asarray(h_prev, dtype=np.float64)
    H = h_prev.shape[-1]
    if Wx.shape != (x_t.shape[-1], 3 * H) or Wh.shape != (H, 3 * H) or b.shape != (3 * H,):
        raise ValueError(f"GRU weight shapes {Wx.shape}, {Wh.shape}, {b.shape} do not match "
                         f"input {x_t.shape[-1]} and hidden {H}")
    ax_z, ax_r, ax_n = _split(x_t @ Wx + b, 3)
    wh_z, wh_r, wh_n = _split(Wh, 3)
    z = sigmoid(ax_z + h_prev @ wh_z)
    r = sigmoid(ax_r + h_prev @ wh_r)
    n = np.tanh(ax_n + (r * h_prev) @ wh_n)
    return (1.0 - z) * h_prev + z * n


# --------------------------------------------------------------------------- sequence kernels

_jit = numba.njit(cache=True, fastmath=True)


@_jit
def lstm_seq_forward(A, Wh, reverse, n_steps, Hs, Cs, Gt):
    """Run ``n_steps`` LSTM steps in direction order, writing hidden states,
    cell states and post-activation gates into ``Hs``, ``Cs``, ``Gt``."""
    T, B, G4 = A.shape
    H = G4 // 4
    z = np.empty(G4)
    for s in range(n_steps):
        t = T - 1 - s if reverse else s
        tp = t + 1 if reverse else t - 1
        for bb in range(B):
            for j in range(G4):
                z[j] = A[t, bb, j]
            if s > 0:
                for k in range(H):
                    hk = Hs[tp, bb, k]
                    for j in range(G4):
                        z[j] += hk * Wh[k, j]
            for j in range(2 * H):
                z[j] = 1.0 / (1.0 + math.exp(-z[j]))
            for j in range(2 * H, 3 * H):
                z[j] = 2.0 / (1.0 + math.exp(-2.0 * z[j])) - 1.0
            for j in range(3 * H, G4):
                z[j] = 1.0 / (1.0 + math.exp(-z[j]))
            for j in range(H):
                c_prev = Cs[tp, bb, j] if s > 0 else 0.0
                cc = z[H + j] * c_prev + z[j] * z[2 * H + j]
                Cs[t, bb, j] = cc
                Hs[t, bb, j] = z[3 * H + j] * (2.0 / (1.0 + math.exp(-2.0 * cc)) - 1.0)
            for j in range(G4):
                Gt[t, bb, j] = z[j]


@_jit
def lstm_seq_backward(dHs, Hs, Cs, Gt, Wh, reverse, n_steps, dA, dWh):
    """Backpropagate output gradients ``dHs`` through the recurrence into the
    pre-activation gradient ``dA`` (overwritten) and ``dWh`` (accumulated)."""
    T, B, H = dHs.shape
    G4 = 4 * H
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for s in range(n_steps - 1, -1, -1):
        t = T - 1 - s if reverse else s
        tp = t + 1 if reverse else t - 1
        first = s == 0
        for bb in range(B):
            for j in range(H):
                ig = Gt[t, bb, j]
                fg = Gt[t, bb, H + j]
                gg = Gt[t, bb, 2 * H + j]
                og = Gt[t, bb, 3 * H + j]
                tc = 2.0 / (1.0 + math.exp(-2.0 * Cs[t, bb, j])) - 1.0
                dh = dHs[t, bb, j] + dh_next[bb, j]
                dc = dc_next[bb, j] + dh * og * (1.0 - tc * tc)
                c_prev = 0.0 if first else Cs[tp, bb, j]
                dA[t, bb, j] = dc * gg * ig * (1.0 - ig)
                dA[t, bb, H + j] = dc * c_prev * fg * (1.0 - fg)
                dA[t, bb, 2 * H + j] = dc * ig * (1.0 - gg * gg)
                dA[t, bb, 3 * H + j] = dh * tc * og * (1.0 - og)
                dc_next[bb, j] = dc * fg
            for k in range(H):
                hp = 0.0 if first else Hs[tp, bb, k]
                acc = 0.0
                for j in range(G4):
                    g = dA[t, bb, j]
                    dWh[k, j] += hp * g
                    acc += g * Wh[k, j]
                dh_next[bb, k] = acc


@_jit
def gru_seq_forward(A, Wh, reverse, n_steps, Hs, Gt):
    """Run ``n_steps`` GRU steps, writing hidden states and gates (z, r, n)."""
    T, B, G3 = A.shape
    H = G3 // 3
    H2 = 2 * H
    zr = np.empty(H2)
    nn = np.empty(H)
    h = np.zeros(H)
    for s in range(n_steps):
        t = T - 1 - s if reverse else s
        tp = t + 1 if reverse else t - 1
        for bb in range(B):
            for k in range(H):
                h[k] = Hs[tp, bb, k] if s > 0 else 0.0
            for j in range(H2):
                zr[j] = A[t, bb, j]
            for j in range(H):
                nn[j] = A[t, bb, H2 + j]
            for k in range(H):
                hk = h[k]
                for j in range(H2):
                    zr[j] += hk * Wh[k, j]
            for j in range(H2):
                zr[j] = 1.0 / (1.0 + math.exp(-zr[j]))
            for k in range(H):
                rk = zr[H + k] * h[k]
                for j in range(H):
                    nn[j] += rk * Wh[k, H2 + j]
            for j in range(H):
                nj = 2.0 / (1.0 + math.exp(-2.0 * nn[j])) - 1.0
                Hs[t, bb, j] = (1.0 - zr[j]) * h[j] + zr[j] * nj
                Gt[t, bb, H2 + j] = nj
            for j in range(H2):
                Gt[t, bb, j] = zr[j]


@_jit
def gru_seq_backward(dHs, Hs, Gt, Wh, reverse, n_steps, dA, dWh):
    T, B, H = dHs.shape
    H2 = 2 * H
    dh_next = np.zeros((B, H))
    hp = np.empty(H)
    dzr = np.empty(H2)
    dn = np.empty(H)
    dnew = np.empty(H)
    drh = np.empty(H)
    for s in range(n_steps - 1, -1, -1):
        t = T - 1 - s if reverse else s
        tp = t + 1 if reverse else t - 1
        first = s == 0
        for bb in range(B):
            for k in range(H):
                hp[k] = 0.0 if first else Hs[tp, bb, k]
            for j in range(H):
                zg = Gt[t, bb, j]
                n = Gt[t, bb, H2 + j]
                dh = dHs[t, bb, j] + dh_next[bb, j]
                dn[j] = dh * zg * (1.0 - n * n)
                dzr[j] = dh * (n - hp[j]) * zg * (1.0 - zg)
                dnew[j] = dh * (1.0 - zg)
            # candidate: pre_n = A_n + (r * h_prev) Wh_n
            for k in range(H):
                acc = 0.0
                rhk = Gt[t, bb, H + k] * hp[k]
                for j in range(H):
                    g = dn[j]
                    dWh[k, H2 + j] += rhk * g
                    acc += g * Wh[k, H2 + j]
                drh[k] = acc
            for k in range(H):
                rk = Gt[t, bb, H + k]
                dzr[H + k] = drh[k] * hp[k] * rk * (1.0 - rk)
                dnew[k] += drh[k] * rk
            for k in range(H):
                acc = 0.0
                hk = hp[k]
                for j in range(H2):
                    g = dzr[j]
                    dWh[k, j] += hk * g
                    acc += g * Wh[k, j]
                dh_next[bb, k] = dnew[k] + acc
            for j in range(H2):
                dA[t, bb, j] = dzr[j]
            for j in range(H):
                dA[t, bb, H2 + j] = dn[j]
