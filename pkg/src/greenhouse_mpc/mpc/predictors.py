"""Horizon predictors: the exact RK4 model and the recurrent surrogate.

A predictor is bound to one horizon (:class:`HorizonContext`) and returns a
rollout object exposing ``predict(U) -> Y`` and ``value_and_grad(U, terms)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..dynamics import DEFAULT_PARAMS, ModelParams, _measure, _rk4
from ..seqnet.cells import GATES, LSTM
from ..seqnet.network import NetworkWeights, _net_backward, _net_forward, _offsets
from .objective import PenaltyTerms, _penalized


@dataclass
class HorizonContext:
    """What the controller knows at step ``k0``.

    ``forecast`` holds the weather from ``k0`` onwards (at least one row per
    horizon step).  ``history`` holds the raw (d, u, y) feature rows ``0..k0``;
    the input column of its last row is a placeholder for the decision.
    """

    k0: int
    y: np.ndarray
    forecast: np.ndarray
    u_prev: np.ndarray | None = None
    x: np.ndarray | None = None
    history: np.ndarray | None = None

    @property
    def d1(self) -> float:
        return float(self.forecast[0, 0])


class Rollout:
    """Base horizon model; subclasses provide ``predict`` and may override the gradient."""

    n: int

    def predict(self, U) -> np.ndarray:
        raise NotImplementedError

    def value(self, U, terms: PenaltyTerms) -> float:
        return terms(U, self.predict(U))

    def value_and_grad(self, U, terms: PenaltyTerms, fd_step: float = 1e-6):
        """Central differences over every input; steps are ``fd_step * u_max``."""
        U = np.array(U, dtype=np.float64)
        J = self.value(U, terms)
        G = np.empty_like(U)
        steps = fd_step * terms.config.u_max_arr
        for j in range(U.shape[0]):
            for i in range(3):
                u0 = U[j, i]
                U[j, i] = u0 + steps[i]
                jp = self.value(U, terms)
                U[j, i] = u0 - steps[i]
                jm = self.value(U, terms)
                U[j, i] = u0
                G[j, i] = (jp - jm) / (2.0 * steps[i])
        return J, G


# --------------------------------------------------------------------------- oracle

@numba.njit(cache=True)
def _oracle_value_grad(x0, U, D, p, h, steps, u_prev, has_prev, q_yd, q_u, ylo, yhi, yscale, rho_y,
                       inv_umax, dn, rho_du, need_grad, G):
    N = U.shape[0]
    X = np.empty((N + 1, 4))
    Y = np.empty((N, 4))
    dY = np.empty((N, 4))
    dU = np.empty((N, 3))
    X[0] = x0
    for j in range(N):
        if _rk4(X[j], U[j], D[j], p, h, X[j + 1]) != 0:
            return np.nan
        _measure(X[j + 1], p, Y[j])
    J = _penalized(U, Y, u_prev, has_prev, q_yd, q_u, ylo, yhi, yscale, rho_y, inv_umax, dn, rho_du, dY, dU)
    if not need_grad:
        return J
    Up = U.copy()
    Yp = Y.copy()
    x = np.empty(4)
    nxt = np.empty(4)
    for j in range(N):
        for i in range(3):
            u0 = U[j, i]
            val = np.empty(2)
            for side in range(2):
                Up[j, i] = u0 + steps[i] if side == 0 else u0 - steps[i]
                x[:] = X[j]
                for m in range(j, N):
                    if _rk4(x, Up[m], D[m], p, h, nxt) != 0:
                        return np.nan
                    x[:] = nxt
                    _measure(x, p, Yp[m])
                val[side] = _penalized(Up, Yp, u_prev, has_prev, q_yd, q_u, ylo, yhi, yscale, rho_y,
                                       inv_umax, dn, rho_du, dY, dU)
            G[j, i] = (val[0] - val[1]) / (2.0 * steps[i])
            Up[j, i] = u0
            Yp[j:] = Y[j:]
    return J


class OracleRollout(Rollout):
    def __init__(self, x0, D, params: ModelParams):
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.D = np.ascontiguousarray(D, dtype=np.float64)
        self.n = len(self.D)
        self.p = params.as_array()
        self.h = params.h

    def _run(self, U, terms: PenaltyTerms, need_grad: bool, fd_step: float = 1e-6):
        U = np.ascontiguousarray(U, dtype=np.float64)
        G = np.zeros_like(U)
        c = terms.config
        J = _oracle_value_grad(self.x0, U, self.D, self.p, self.h, fd_step * c.u_max_arr, terms.u_prev,
                               terms.has_prev, c.q_yd, terms.q_u, terms.ylo, terms.yhi, terms.yscale, c.rho_y,
                               terms.inv_umax, terms.dn, c.rho_du, need_grad, G)
        return float(J), G

    def predict(self, U) -> np.ndarray:
        U = np.ascontiguousarray(U, dtype=np.float64)
        Y = np.empty((len(U), 4))
        x = self.x0.copy()
        nxt = np.empty(4)
        for j in range(len(U)):
            if _rk4(x, U[j], self.D[j], self.p, self.h, nxt) != 0:
                raise FloatingPointError(f"oracle rollout diverged at horizon step {j}")
            x[:] = nxt
            _measure(x, self.p, Y[j])
        return Y

    def value(self, U, terms: PenaltyTerms) -> float:
        return self._run(U, terms, False)[0]

    def value_and_grad(self, U, terms: PenaltyTerms, fd_step: float = 1e-6):
        return self._run(U, terms, True, fd_step)


class OraclePredictor:
    """Exact model: RK4 rollouts from the true current state."""

    kind = "oracle"

    def __init__(self, params: ModelParams | None = None):
        self.params = params or DEFAULT_PARAMS

    def bind(self, ctx: HorizonContext, n: int) -> OracleRollout:
        if ctx.x is None:
            raise ValueError("the oracle predictor needs the current state")
        return OracleRollout(ctx.x, ctx.forecast[:n], self.params)


# --------------------------------------------------------------------------- surrogate

@numba.njit(cache=True)
def _surrogate_forward(hist, Dn, U, u_lo, u_sc, y_lo, y_sc, theta, offs, is_lstm, H, HH, L, G):
    """Autoregressive horizon rollout; returns the row buffer, per-step caches and outputs."""
    w = hist.shape[0]
    N = U.shape[0]
    n_out = 4
    R = np.empty((w + N - 1, 11))
    R[:w] = hist
    Hs = np.zeros((N, L, 2, w, 1, H))
    Cs = np.zeros((N, L, 2, w, 1, H)) if is_lstm else np.zeros((N, 1, 1, 1, 1, 1))
    Gs = np.zeros((N, L, 2, w, 1, G * H))
    final = np.empty((N, 1, 2 * H))
    z1 = np.empty((N, 1, HH))
    a1d = np.empty((N, 1, HH))
    pred = np.empty((N, 1, n_out))
    mask = np.ones((1, HH))
    Y = np.empty((N, n_out))
    for j in range(N):
        r = w - 1 + j
        for c in range(4):
            R[r, c] = Dn[j, c]
        for i in range(3):
            R[r, 4 + i] = (U[j, i] - u_lo[i]) / u_sc[i]
        Xj = np.ascontiguousarray(R[j:j + w]).reshape((w, 1, 11))
        _net_forward(Xj, theta, offs, is_lstm, H, HH, n_out, L, mask, Hs[j], Cs[j], Gs[j],
                     final[j], z1[j], a1d[j], pred[j])
        for c in range(4):
            Y[j, c] = pred[j, 0, c] * y_sc[c] + y_lo[c]
            if j + 1 < N:
                R[r + 1, 7 + c] = pred[j, 0, c]
    return R, Hs, Cs, Gs, final, z1, a1d, Y


@numba.njit(cache=True)
def _surrogate_backward(dY, R, Hs, Cs, Gs, final, z1, a1d, w, u_sc, y_sc, theta, offs, is_lstm, H, HH, L):
    """dJ/dU given dJ/dY, routing gradients through every window that saw each input
    and every predicted output fed back into later windows."""
    N = dY.shape[0]
    n_out = 4
    mask = np.ones((1, HH))
    dR = np.zeros((w + N - 1, 11))
    grad = np.zeros(theta.shape[0])
    dpred = np.empty((1, n_out))
    for j in range(N - 1, -1, -1):
        r = w - 1 + j
        for c in range(4):
            dpred[0, c] = dY[j, c] * y_sc[c]
            if j + 1 < N:
                dpred[0, c] += dR[r + 1, 7 + c]
        Xj = np.ascontiguousarray(R[j:j + w]).reshape((w, 1, 11))
        dX = _net_backward(dpred, Xj, theta, offs, is_lstm, H, HH, n_out, L, mask, Hs[j], Cs[j], Gs[j],
                           final[j], z1[j], a1d[j], grad, True, False)
        for t in range(w):
            for c in range(11):
                dR[j + t, c] += dX[t, 0, c]
    dU = np.empty((N, 3))
    for j in range(N):
        for i in range(3):
            dU[j, i] = dR[w - 1 + j, 4 + i] / u_sc[i]
    return dU


class SurrogateRollout(Rollout):
    def __init__(self, weights: NetworkWeights, hist_norm, Dn):
        self.w = weights
        self.hist = np.ascontiguousarray(hist_norm, dtype=np.float64)
        self.Dn = np.ascontiguousarray(Dn, dtype=np.float64)
        self.n = len(self.Dn)
        s = weights.scaler
        self.u_lo, self.u_sc = s.min_[4:7].copy(), s.scale[4:7].copy()
        self.y_lo, self.y_sc = s.min_[11:15].copy(), s.scale[11:15].copy()
        self.offs = _offsets(weights)
        self.G = GATES[weights.kind]

    def _forward(self, U):
        U = np.ascontiguousarray(U, dtype=np.float64)
        if U.shape != (self.n, 3):
            raise ValueError(f"plan must have shape {(self.n, 3)}, got {U.shape}")
        w = self.w
        return _surrogate_forward(self.hist, self.Dn, U, self.u_lo, self.u_sc, self.y_lo, self.y_sc, w.theta,
                                  self.offs, w.kind == LSTM, w.hidden, w.head_hidden, w.layers, self.G)

    def predict(self, U) -> np.ndarray:
        return self._forward(U)[-1]

    def value_and_grad(self, U, terms: PenaltyTerms, fd_step: float = 1e-6):
        R, Hs, Cs, Gs, final, z1, a1d, Y = self._forward(U)
        J, dY, dU = terms(U, Y, with_grad=True)
        w = self.w
        dU += _surrogate_backward(dY, R, Hs, Cs, Gs, final, z1, a1d, len(self.hist), self.u_sc, self.y_sc,
                                  w.theta, self.offs, w.kind == LSTM, w.hidden, w.head_hidden, w.layers)
        return J, dU


class SurrogatePredictor:
    """Trained network rolled forward on its own predictions over the horizon.

    The window is filled with the measured history; rows before the first
    record are padded with copies of the first record.
    """

    def __init__(self, weights: NetworkWeights, window: int):
        if weights.scaler is None:
            raise ValueError("surrogate weights carry no scaler; train or load a checkpoint with one")
        if window < 1:
            raise ValueError("window must be >= 1")
        self.weights = weights
        self.window = int(window)
        self.kind = weights.kind

    def bind(self, ctx: HorizonContext, n: int) -> SurrogateRollout:
        if ctx.history is None:
            raise ValueError("the surrogate predictor needs the (d, u, y) history")
        hist = np.asarray(ctx.history, dtype=np.float64)
        w = self.window
        if len(hist) < w:
            hist = np.vstack([np.repeat(hist[:1], w - len(hist), axis=0), hist])
        hist = hist[-w:].copy()
        hist[-1, 4:7] = 0.0
        s = self.weights.scaler
        hist_n = s.normalize_inputs(hist)
        Dn = (np.asarray(ctx.forecast[:n]) - s.min_[:4]) / s.scale[:4]
        return SurrogateRollout(self.weights, hist_n, Dn)
