"""Cost, constraint bands and the penalized horizon objective."""
from __future__ import annotations

import numba
import numpy as np

from ..dynamics import NIGHT_RADIATION
from .config import MpcConfig

NIGHT_TEMP = (10.0, 15.0)
DAY_TEMP = (15.0, 20.0)


def temp_bounds(d1_k0: float, threshold: float = NIGHT_RADIATION) -> tuple[float, float]:
    """Indoor temperature band for a whole horizon, chosen by the radiation at its first step."""
    if d1_k0 < 0:
        raise ValueError(f"radiation must be >= 0, got {d1_k0}")
    return NIGHT_TEMP if d1_k0 < threshold else DAY_TEMP


def is_night(d1: float, threshold: float = NIGHT_RADIATION) -> bool:
    return d1 < threshold


def night_co2_mask(u, d1_k0: float, threshold: float = NIGHT_RADIATION) -> np.ndarray:
    """Zero the CO2-injection input when the horizon starts at night."""
    u = np.array(u, dtype=np.float64)
    if d1_k0 < threshold:
        u[..., 0] = 0.0
    return u


def stage_cost(u, y, q_yd: float = 1000.0, q_u=(10.0, 1.0, 1.0)) -> float:
    """Negative weighted yield plus weighted input use, in the actuators' own units."""
    u = np.asarray(u, dtype=np.float64)
    return float(-q_yd * np.asarray(y, dtype=np.float64)[0] + np.dot(np.asarray(q_u, dtype=np.float64), u))


def output_bounds(d1_k0: float, n: int, config: MpcConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-step (low, high) arrays of shape (n, 3) for CO2 ppm, temperature and RH."""
    t_lo, t_hi = temp_bounds(d1_k0, config.night_radiation)
    lo = np.tile([-np.inf, t_lo, config.rh_bounds[0]], (n, 1))
    hi = np.tile([config.co2_max_ppm, t_hi, config.rh_bounds[1]], (n, 1))
    return lo, hi


@numba.njit(cache=True)
def _penalized(U, Y, u_prev, has_prev, q_yd, q_u, ylo, yhi, yscale, rho_y, inv_umax, dn, rho_du, dY, dU):
    """Penalized objective; writes dJ/dY and dJ/dU into ``dY`` and ``dU``.

    ``Y[j]`` is the output after applying ``U[j]``.
    """
    N = U.shape[0]
    J = 0.0
    dY[:] = 0.0
    dU[:] = 0.0
    for j in range(N):
        J -= q_yd * Y[j, 0]
        dY[j, 0] = -q_yd
        for i in range(3):
            J += q_u[i] * U[j, i]
            dU[j, i] += q_u[i]
        for c in range(3):
            y = Y[j, c + 1]
            s = yscale[c]
            if y < ylo[j, c]:
                v = ylo[j, c] - y
                J += rho_y * (v / s) ** 2
                dY[j, c + 1] -= 2.0 * rho_y * v / (s * s)
            elif y > yhi[j, c]:
                v = y - yhi[j, c]
                J += rho_y * (v / s) ** 2
                dY[j, c + 1] += 2.0 * rho_y * v / (s * s)
        if j == 0 and not has_prev:
            continue
        for i in range(3):
            prev = u_prev[i] if j == 0 else U[j - 1, i]
            delta = (U[j, i] - prev) * inv_umax[i]
            e = abs(delta) - dn[i]
            if e > 0.0:
                J += rho_du * e * e
                g = 2.0 * rho_du * e * inv_umax[i]
                if delta < 0.0:
                    g = -g
                dU[j, i] += g
                if j > 0:
                    dU[j - 1, i] -= g
    return J


class PenaltyTerms:
    """The objective of one horizon with everything except the predicted outputs fixed."""

    def __init__(self, config: MpcConfig, d1_k0: float, n: int, u_prev=None):
        self.config = config
        self.n = n
        self.ylo, self.yhi = output_bounds(d1_k0, n, config)
        self.has_prev = u_prev is not None
        self.u_prev = np.zeros(3) if u_prev is None else np.asarray(u_prev, dtype=np.float64)
        self.q_u = np.asarray(config.q_u, dtype=np.float64)
        self.yscale = np.asarray(config.output_scale, dtype=np.float64)
        self.inv_umax = 1.0 / config.u_max_arr
        self.dn = config.du_max_arr * self.inv_umax

    def __call__(self, U, Y, with_grad: bool = False):
        U = np.ascontiguousarray(U, dtype=np.float64)
        Y = np.ascontiguousarray(Y, dtype=np.float64)
        dY = np.empty_like(Y)
        dU = np.empty_like(U)
        c = self.config
        J = _penalized(U, Y, self.u_prev, self.has_prev, c.q_yd, self.q_u, self.ylo, self.yhi, self.yscale,
                       c.rho_y, self.inv_umax, self.dn, c.rho_du, dY, dU)
        return (J, dY, dU) if with_grad else J

    def stage_sum(self, U, Y) -> float:
        c = self.config
        return float(sum(stage_cost(u, y, c.q_yd, c.q_u) for u, y in zip(U, Y)))
