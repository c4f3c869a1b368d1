"""Controller configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from ..dynamics import NIGHT_RADIATION, U_MAX, U_MIN


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, cost weights, bounds and solver budget.

    Output penalties are ``rho_y * (violation / output_scale)**2`` with the
    violation measured in ppm, degrees C and % RH for CO2, temperature and RH.
    The rate penalty works on inputs divided by ``u_max``.
    """

    horizon: int = 24
    q_yd: float = 1000.0
    q_u: tuple[float, float, float] = (10.0, 1.0, 1.0)
    u_min: tuple[float, float, float] = tuple(U_MIN)
    u_max: tuple[float, float, float] = tuple(U_MAX)
    du_max: tuple[float, float, float] | None = None
    co2_max_ppm: float = 1000.0
    rh_bounds: tuple[float, float] = (50.0, 85.0)
    night_radiation: float = NIGHT_RADIATION
    output_scale: tuple[float, float, float] = (100.0, 1.0, 1.0)
    rho_y: float = 1e3
    rho_du: float = 1e4
    iterations: int = 200
    restarts: int = 3
    momentum: float = 0.9
    step_size: float = 0.01
    restart_spread: float = 0.3
    warm_start: bool = True
    fd_step: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.du_max is None:
            object.__setattr__(self, "du_max", tuple(float(v) / 10.0 for v in self.u_max))
        lo, hi = np.asarray(self.u_min), np.asarray(self.u_max)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo > hi):
            raise ValueError("u_min must not exceed u_max componentwise")
        if np.any(np.asarray(self.du_max) <= 0):
            raise ValueError("du_max must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.iterations < 0 or self.restarts < 1:
            raise ValueError("iterations must be >= 0 and restarts >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.step_size <= 0 or self.fd_step <= 0:
            raise ValueError("step_size and fd_step must be positive")
        if self.rh_bounds[0] > self.rh_bounds[1]:
            raise ValueError("rh_bounds must be (low, high)")

    @property
    def u_min_arr(self) -> np.ndarray:
        return np.asarray(self.u_min, dtype=np.float64)

    @property
    def u_max_arr(self) -> np.ndarray:
        return np.asarray(self.u_max, dtype=np.float64)

    @property
    def du_max_arr(self) -> np.ndarray:
        return np.asarray(self.du_max, dtype=np.float64)

    @classmethod
    def from_dict(cls, d: dict | None) -> "MpcConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown mpc settings: {', '.join(unknown)}")
        for key in ("q_u", "u_min", "u_max", "du_max", "rh_bounds", "output_scale"):
            if d.get(key) is not None:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)

    def replace(self, **changes) -> "MpcConfig":
        if "u_max" in changes and "du_max" not in changes:
            changes["du_max"] = None
        return replace(self, **changes)
