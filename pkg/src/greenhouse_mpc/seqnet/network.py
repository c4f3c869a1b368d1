"""Bidirectional two-layer recurrent stack with a dense regression head.

All learnable parameters live in one flat float64 vector ``theta``; the named
arrays returned by :meth:`NetworkWeights.tensors` are views into it, in the
fixed order used by checkpoints:

    for layer in 0..L-1, for direction in (forward, reverse):
        Wx (n_in_layer, G*H), Wh (H, G*H), b (G*H)
    W1 (2H, head_hidden), b1 (head_hidden), W2 (head_hidden, n_out), b2 (n_out)

with G = 4 for LSTM and 3 for GRU.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .cells import GATES, GRU, LSTM, gru_seq_backward, gru_seq_forward, lstm_seq_backward, lstm_seq_forward

N_FEATURES = 11
N_OUTPUTS = 4


@dataclass
class NetworkWeights:
    kind: str
    n_in: int = N_FEATURES
    hidden: int = 16
    layers: int = 2
    head_hidden: int = 16
    n_out: int = N_OUTPUTS
    theta: np.ndarray | None = None
    scaler: object | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in GATES:
            raise ValueError(f"unknown cell kind {self.kind!r}; expected 'lstm' or 'gru'")
        n = self.n_params
        if self.theta is None:
            self.theta = np.zeros(n)
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (n,):
            raise ValueError(f"theta has shape {self.theta.shape}, expected ({n},)")

    # ----------------------------------------------------------------------- layout

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        g, H = GATES[self.kind], self.hidden
        out = []
        for layer in range(self.layers):
            n_in = self.n_in if layer == 0 else 2 * H
            for direction in ("fwd", "rev"):
                p = f"l{layer}_{direction}_"
                out += [(p + "Wx", (n_in, g * H)), (p + "Wh", (H, g * H)), (p + "b", (g * H,))]
        out += [("W1", (2 * H, self.head_hidden)), ("b1", (self.head_hidden,)),
                ("W2", (self.head_hidden, self.n_out)), ("b2", (self.n_out,))]
        return out

    @property
    def n_params(self) -> int:
        return sum(math.prod(s) for _, s in self.shapes())

    @property
    def n_recurrent_params(self) -> int:
        return sum(math.prod(s) for name, s in self.shapes() if name.startswith("l"))

    def tensors(self, flat: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Named views into ``flat`` (default: ``self.theta``)."""
        flat = self.theta if flat is None else flat
        out, i = {}, 0
        for name, shape in self.shapes():
            n = math.prod(shape)
            out[name] = flat[i:i + n].reshape(shape)
            i += n
        return out

    @property
    def output_width(self) -> int:
        """Feature width emitted per step by the recurrent stack."""
        return 2 * self.hidden

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(self.kind, self.n_in, self.hidden, self.layers, self.head_hidden,
                              self.n_out, self.theta.copy(), self.scaler)

    def checksum(self) -> str:
        import hashlib
        return hashlib.sha256(self.theta.tobytes()).hexdigest()


def init_weights(kind: str, seed: int = 0, **dims) -> NetworkWeights:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) for recurrent tensors, Uniform(+-1/sqrt(fan_in)) for the head."""
    w = NetworkWeights(kind, **dims)
    rng = np.random.default_rng(seed)
    t = w.tensors()
    k_rec = 1.0 / math.sqrt(w.hidden)
    for name, arr in t.items():
        if name.startswith("l"):
            bound = k_rec
        else:
            fan_in = 2 * w.hidden if name in ("W1", "b1") else w.head_hidden
            bound = 1.0 / math.sqrt(fan_in)
        arr[...] = rng.uniform(-bound, bound, size=arr.shape)
    return w


# --------------------------------------------------------------------------- compiled core

@numba.njit(cache=True, fastmath=True)
def _project(inp, Wx, b, reverse, n_steps, A):
    T, B, I = inp.shape
    GH = Wx.shape[1]
    for s in range(n_steps):
        t = T - 1 - s if reverse else s
        for bb in range(B):
            for j in range(GH):
                A[t, bb, j] = b[j]
            for i in range(I):
                v = inp[t, bb, i]
                for j in range(GH):
                    A[t, bb, j] += v * Wx[i, j]


@numba.njit(cache=True)
def _layer_input(Hs_all, layer):
    _, _, T, B, H = Hs_all.shape
    seq = np.empty((T, B, 2 * H))
    seq[:, :, :H] = Hs_all[layer, 0]
    seq[:, :, H:] = Hs_all[layer, 1]
    return seq


@numba.njit(cache=True, fastmath=True)
def _net_forward(X, theta, offs, is_lstm, H, HH, n_out, L, mask, Hs_all, Cs_all, G_all, final, z1, a1d, pred):
    """Full forward pass; ``mask`` multiplies the head's hidden activations."""
    T, B, I0 = X.shape
    GH = (4 if is_lstm else 3) * H
    A = np.zeros((T, B, GH))
    inp = X
    for l in range(L):
        if l > 0:
            inp = _layer_input(Hs_all, l - 1)
        I = inp.shape[2]
        for d in range(2):
            o = offs[(2 * l + d) * 3:(2 * l + d) * 3 + 3]
            Wx = np.ascontiguousarray(theta[o[0]:o[0] + I * GH]).reshape((I, GH))
            Wh = np.ascontiguousarray(theta[o[1]:o[1] + H * GH]).reshape((H, GH))
            b = theta[o[2]:o[2] + GH]
            reverse = d == 1
            n_steps = 1 if (reverse and l == L - 1) else T
            _project(inp, Wx, b, reverse, n_steps, A)
            if is_lstm:
                lstm_seq_forward(A, Wh, reverse, n_steps, Hs_all[l, d], Cs_all[l, d], G_all[l, d])
            else:
                gru_seq_forward(A, Wh, reverse, n_steps, Hs_all[l, d], G_all[l, d])
    o = offs[6 * L:6 * L + 4]
    W1 = theta[o[0]:o[0] + 2 * H * HH].reshape((2 * H, HH))
    b1 = theta[o[1]:o[1] + HH]
    W2 = theta[o[2]:o[2] + HH * n_out].reshape((HH, n_out))
    b2 = theta[o[3]:o[3] + n_out]
    for bb in range(B):
        for k in range(H):
            final[bb, k] = Hs_all[L - 1, 0, T - 1, bb, k]
            final[bb, H + k] = Hs_all[L - 1, 1, T - 1, bb, k]
        for j in range(HH):
            acc = b1[j]
            for k in range(2 * H):
                acc += final[bb, k] * W1[k, j]
            z1[bb, j] = acc
            a1d[bb, j] = (acc if acc > 0.0 else 0.0) * mask[bb, j]
        for j in range(n_out):
            acc = b2[j]
            for k in range(HH):
                acc += a1d[bb, k] * W2[k, j]
            pred[bb, j] = acc


@numba.njit(cache=True, fastmath=True)
def _net_backward(dpred, X, theta, offs, is_lstm, H, HH, n_out, L, mask,
                  Hs_all, Cs_all, G_all, final, z1, a1d, grad, need_dx, need_param=True):
    """Accumulate parameter gradients into ``grad`` (unless ``need_param`` is off);
    returns dL/dX (zeros unless ``need_dx``)."""
    T, B, I0 = X.shape
    GH = (4 if is_lstm else 3) * H
    o = offs[6 * L:6 * L + 4]
    W1 = theta[o[0]:o[0] + 2 * H * HH].reshape((2 * H, HH))
    W2 = theta[o[2]:o[2] + HH * n_out].reshape((HH, n_out))
    gW1 = grad[o[0]:o[0] + 2 * H * HH].reshape((2 * H, HH))
    gb1 = grad[o[1]:o[1] + HH]
    gW2 = grad[o[2]:o[2] + HH * n_out].reshape((HH, n_out))
    gb2 = grad[o[3]:o[3] + n_out]
    dseq = np.zeros((T, B, 2 * H))
    dz1 = np.empty(HH)
    for bb in range(B):
        for j in range(n_out):
            gb2[j] += dpred[bb, j]
            for k in range(HH):
                gW2[k, j] += a1d[bb, k] * dpred[bb, j]
        for k in range(HH):
            acc = 0.0
            for j in range(n_out):
                acc += dpred[bb, j] * W2[k, j]
            dz1[k] = acc * mask[bb, k] if z1[bb, k] > 0.0 else 0.0
            gb1[k] += dz1[k]
        for i in range(2 * H):
            acc = 0.0
            fi = final[bb, i]
            for k in range(HH):
                gW1[i, k] += fi * dz1[k]
                acc += dz1[k] * W1[i, k]
            dseq[T - 1, bb, i] = acc
    dA = np.zeros((T, B, GH))
    dX = np.zeros((T, B, I0))
    for l in range(L - 1, -1, -1):
        inp = X if l == 0 else _layer_input(Hs_all, l - 1)
        I = inp.shape[2]
        dinp = np.zeros((T, B, I))
        for d in range(2):
            o = offs[(2 * l + d) * 3:(2 * l + d) * 3 + 3]
            Wx = np.ascontiguousarray(theta[o[0]:o[0] + I * GH]).reshape((I, GH))
            Wh = np.ascontiguousarray(theta[o[1]:o[1] + H * GH]).reshape((H, GH))
            gWx = np.zeros((I, GH))
            gWh = np.zeros((H, GH))
            gb = np.zeros(GH)
            reverse = d == 1
            n_steps = 1 if (reverse and l == L - 1) else T
            dHs = np.ascontiguousarray(dseq[:, :, d * H:(d + 1) * H])
            if is_lstm:
                lstm_seq_backward(dHs, Hs_all[l, d], Cs_all[l, d], G_all[l, d], Wh, reverse, n_steps, dA, gWh)
            else:
                gru_seq_backward(dHs, Hs_all[l, d], G_all[l, d], Wh, reverse, n_steps, dA, gWh)
            want_dx = l > 0 or need_dx
            for s in range(n_steps):
                t = T - 1 - s if reverse else s
                for bb in range(B):
                    if need_param:
                        for j in range(GH):
                            gb[j] += dA[t, bb, j]
                        for i in range(I):
                            v = inp[t, bb, i]
                            for j in range(GH):
                                gWx[i, j] += v * dA[t, bb, j]
                    if want_dx:
                        for i in range(I):
                            acc = 0.0
                            for j in range(GH):
                                acc += dA[t, bb, j] * Wx[i, j]
                            dinp[t, bb, i] += acc
            if need_param:
                grad[o[0]:o[0] + I * GH] += gWx.ravel()
                grad[o[1]:o[1] + H * GH] += gWh.ravel()
                grad[o[2]:o[2] + GH] += gb
        if l > 0:
            dseq = dinp
        else:
            dX = dinp
    return dX


# --------------------------------------------------------------------------- forward / backward

def _offsets(w: NetworkWeights) -> np.ndarray:
    offs, i = [], 0
    for _, shape in w.shapes():
        offs.append(i)
        i += math.prod(shape)
    return np.array(offs, dtype=np.int64)


def _check_input(X, w: NetworkWeights) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != w.n_in:
        raise ValueError(f"input must be (batch, window, {w.n_in}), got {X.shape}")
    if X.shape[1] == 0:
        raise ValueError("window length must be >= 1")
    return X


def forward(X, w: NetworkWeights, train: bool = False, dropout: float = 0.0,
            rng: np.random.Generator | None = None, mask: np.ndarray | None = None):
    """Predict the next output for a batch of windows ``X`` of shape ``(B, T, n_in)``.

    Returns ``(pred, cache)``; ``cache`` feeds :func:`backward`.  In train mode
    with ``dropout > 0`` an inverted-dropout mask is drawn from ``rng`` (or taken
    from ``mask``) on the head's hidden layer; eval mode never drops.
    """
    X = _check_input(X, w)
    B, T, _ = X.shape
    H, HH, L = w.hidden, w.head_hidden, w.layers
    G = GATES[w.kind]
    if train and dropout > 0.0:
        if mask is None:
            rng = rng if rng is not None else np.random.default_rng()
            mask = (rng.random((B, HH)) >= dropout) / (1.0 - dropout)
        mask = np.ascontiguousarray(mask, dtype=np.float64)
    else:
        mask = np.ones((B, HH))
    Xt = np.ascontiguousarray(X.transpose(1, 0, 2))
    Hs = np.zeros((L, 2, T, B, H))
    Cs = np.zeros((L, 2, T, B, H)) if w.kind == LSTM else np.zeros((1, 1, 1, 1, 1))
    Gs = np.zeros((L, 2, T, B, G * H))
    final, z1, a1d = np.empty((B, 2 * H)), np.empty((B, HH)), np.empty((B, HH))
    pred = np.empty((B, w.n_out))
    offs = _offsets(w)
    _net_forward(Xt, w.theta, offs, w.kind == LSTM, H, HH, w.n_out, L, mask, Hs, Cs, Gs, final, z1, a1d, pred)
    cache = dict(X=Xt, offs=offs, mask=mask, Hs=Hs, Cs=Cs, Gs=Gs, final=final, z1=z1, a1d=a1d)
    return pred, cache


def backward(dpred, cache, w: NetworkWeights, need_input_grad: bool = False):
    """Gradient of a loss with ``dL/dpred = dpred`` with respect to ``theta``.

    With ``need_input_grad`` also returns dL/dX in the caller's ``(B, T, n_in)`` layout.
    """
    c = cache
    T, B, _ = c["X"].shape
    dpred = np.ascontiguousarray(np.asarray(dpred, dtype=np.float64).reshape(B, w.n_out))
    grad = np.zeros_like(w.theta)
    dX = _net_backward(dpred, c["X"], w.theta, c["offs"], w.kind == LSTM, w.hidden, w.head_hidden, w.n_out,
                       w.layers, c["mask"], c["Hs"], c["Cs"], c["Gs"], c["final"], c["z1"], c["a1d"],
                       grad, need_input_grad)
    if need_input_grad:
        return grad, dX.transpose(1, 0, 2)
    return grad


def predict(X, w: NetworkWeights) -> np.ndarray:
    """Eval-mode prediction for windows ``(B, T, n_in)`` (or a single ``(T, n_in)`` window)."""
    return forward(X, w, train=False)[0]
