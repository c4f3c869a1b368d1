"""Lettuce greenhouse climate/crop model.

Four states (dry weight, indoor CO2, air temperature, absolute humidity),
three actuators (CO2 injection, ventilation, heating) and four weather
drivers (radiation, outdoor CO2, outdoor temperature, outdoor humidity).
Interfaces use the physical units listed on each type; the only unit
conversions (mg -> kg for CO2 injection, mm -> m for ventilation) happen
inside the rate equations.

The hot paths (RK4 rollouts inside the controller) go through the
``numba`` kernels prefixed with an underscore; the public functions wrap
them with argument checking.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Callable, NamedTuple, Sequence

import numba
import numpy as np

STEP_SECONDS = 900.0
NIGHT_RADIATION = 10.0

U_MIN = np.array([0.0, 0.0, 0.0])
U_MAX = np.array([1.2, 7.5, 150.0])


class State(NamedTuple):
    """Crop dry weight [kg m-2], CO2 [kg m-3], temperature [C], humidity [kg m-3]."""

    x1: float
    x2: float
    x3: float
    x4: float


class ControlInput(NamedTuple):
    """CO2 injection [mg m-2 s-1], ventilation [mm s-1], heating [W m-2]."""

    u1: float
    u2: float
    u3: float


class Disturbance(NamedTuple):
    """Radiation [W m-2], outdoor CO2 [kg m-3], outdoor temperature [C], outdoor humidity [kg m-3]."""

    d1: float
    d2: float
    d3: float
    d4: float


class Output(NamedTuple):
    """Dry weight [g m-2], CO2 [ppm], temperature [C], relative humidity [%]."""

    y1: float
    y2: float
    y3: float
    y4: float


DEFAULT_X0 = State(0.0035, 0.001, 15.0, 0.008)


@dataclass(frozen=True)
class ModelParams:
    p11: float = 0.544
    p12: float = 2.65e-7
    p13: float = 53.0
    p14: float = 3.55e-9
    p15: float = 5.11e-6
    p16: float = 2.3e-4
    p17: float = 6.29e-4
    p18: float = 5.2e-5
    p21: float = 4.1
    p22: float = 4.87e-7
    p23: float = 7.5e-6
    # output map: gas constant, Kelvin offset, pressure [kPa], CO2 molar mass [kg mol-1]
    p24: float = 8.314
    p25: float = 273.15
    p26: float = 101.325
    p27: float = 0.044
    p31: float = 3.0e4
    p32: float = 1290.0
    p33: float = 6.1
    p34: float = 0.2
    p41: float = 4.1
    p42: float = 0.0036
    p43: float = 9348.0
    p44: float = 8314.0
    p45: float = 273.15
    p46: float = 17.4
    p47: float = 239.0
    # saturation-vapour coefficients of the relative-humidity output
    p48: float = 17.4
    p49: float = 239.0
    h: float = STEP_SECONDS

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"model parameter {f.name} must be finite and > 0, got {v!r}")

    def as_array(self) -> np.ndarray:
        """Coefficients in the fixed order the numba kernels index (``h`` excluded)."""
        return np.array(astuple(self)[:-1], dtype=np.float64)


DEFAULT_PARAMS = ModelParams()

# indices into ModelParams.as_array()
(_P11, _P12, _P13, _P14, _P15, _P16, _P17, _P18, _P21, _P22, _P23, _P24, _P25, _P26,
 _P27, _P31, _P32, _P33, _P34, _P41, _P42, _P43, _P44, _P45, _P46, _P47, _P48, _P49) = range(28)


# --------------------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _phot(x1, x2, x3, d1, p):
    temp_factor = -p[_P15] * x3 * x3 + p[_P16] * x3 - p[_P17]
    co2_drive = temp_factor * (x2 - p[_P18])
    light = p[_P14] * d1
    denom = light + co2_drive
    if abs(denom) < 1e-12:
        return 0.0
    return (1.0 - math.exp(-p[_P13] * x1)) * light * co2_drive / denom


@numba.njit(cache=True)
def _resp(x1, x3):
    return x1 * 2.0 ** (x3 / 10.0 - 2.5)


@numba.njit(cache=True)
def _vent_co2(x2, u2, d2, p):
    return (u2 * 1e-3 + p[_P23]) * (x2 - d2)


@numba.njit(cache=True)
def _vent_h2o(x4, u2, d4, p):
    return (u2 * 1e-3 + p[_P23]) * (x4 - d4)


@numba.njit(cache=True)
def _saturation(x3, p):
    return p[_P43] / (p[_P44] * (x3 + p[_P45])) * math.exp(p[_P46] * x3 / (x3 + p[_P47]))


@numba.njit(cache=True)
def _transp(x1, x3, x4, p):
    return p[_P42] * (1.0 - math.exp(-p[_P13] * x1)) * (_saturation(x3, p) - x4)


@numba.njit(cache=True)
def _deriv(x, u, d, p, out):
    phot = _phot(x[0], x[1], x[2], d[0], p)
    resp = _resp(x[0], x[2])
    out[0] = p[_P11] * phot - p[_P12] * resp
    out[1] = (-phot + p[_P22] * resp + u[0] * 1e-6 - _vent_co2(x[1], u[1], d[1], p)) / p[_P21]
    out[2] = (u[2] - (p[_P32] * u[1] * 1e-3 + p[_P33]) * (x[2] - d[2]) + p[_P34] * d[0]) / p[_P31]
    out[3] = (_transp(x[0], x[2], x[3], p) - _vent_h2o(x[3], u[1], d[3], p)) / p[_P41]


@numba.njit(cache=True)
def _rk4(x, u, d, p, h, out):
    """One clamped RK4 step into ``out``; returns 0 on success or the failing stage (1..4)."""
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    _deriv(x, u, d, p, k1)
    for i in range(4):
        if not math.isfinite(k1[i]):
            return 1
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _deriv(tmp, u, d, p, k2)
    for i in range(4):
        if not math.isfinite(k2[i]):
            return 2
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _deriv(tmp, u, d, p, k3)
    for i in range(4):
        if not math.isfinite(k3[i]):
            return 3
        tmp[i] = x[i] + h * k3[i]
    _deriv(tmp, u, d, p, k4)
    for i in range(4):
        if not math.isfinite(k4[i]):
            return 4
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    out[0] = max(out[0], 0.0)
    out[1] = max(out[1], 0.0)
    out[3] = max(out[3], 0.0)
    return 0


@numba.njit(cache=True)
def _measure(x, p, out):
    t = x[2]
    out[0] = 1e3 * x[0]
    out[1] = 1e3 * p[_P24] * (t + p[_P25]) / (p[_P26] * p[_P27]) * x[1]
    out[2] = t
    out[3] = 1e2 * p[_P24] * (t + p[_P25]) / (11.0 * math.exp(p[_P48] * t / (t + p[_P49]))) * x[3]


@numba.njit(cache=True)
def _rollout(x0, U, D, p, h, Y):
    """Simulate ``len(U)`` steps from ``x0``; write measured outputs of x(1..N) into Y.

    Returns 0 on success, -1 on a non-finite state.
    """
    x = x0.copy()
    nxt = np.empty(4)
    for j in range(U.shape[0]):
        if _rk4(x, U[j], D[j], p, h, nxt) != 0:
            return -1
        x[:] = nxt
        _measure(x, p, Y[j])
    return 0


# --------------------------------------------------------------------------- public API

def _vec(v, n: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (n,):
        raise ValueError(f"{name} must have {n} components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values: {a}")
    return a


def _pa(p: ModelParams | None) -> np.ndarray:
    return (p or DEFAULT_PARAMS).as_array()


def flux_photosynthesis(x, d, p: ModelParams | None = None) -> float:
    """Gross canopy photosynthesis [kg CO2 m-2 s-1]; 0 when the rational denominator vanishes."""
    x = _vec(x, 4, "state")
    d = _vec(d, 4, "disturbance")
    return float(_phot(x[0], x[1], x[2], d[0], _pa(p)))


def flux_vent_co2(x, u, d, p: ModelParams | None = None) -> float:
    x, u, d = _vec(x, 4, "state"), _vec(u, 3, "control"), _vec(d, 4, "disturbance")
    return float(_vent_co2(x[1], u[1], d[1], _pa(p)))


def flux_vent_h2o(x, u, d, p: ModelParams | None = None) -> float:
    x, u, d = _vec(x, 4, "state"), _vec(u, 3, "control"), _vec(d, 4, "disturbance")
    return float(_vent_h2o(x[3], u[1], d[3], _pa(p)))


def _check_temperature_guards(x3: float, p: ModelParams) -> None:
    if x3 + p.p45 <= 0:
        raise ValueError(f"singular denominator x3 + p45 = {x3 + p.p45} in the saturation term")
    if x3 + p.p47 <= 0:
        raise ValueError(f"singular denominator x3 + p47 = {x3 + p.p47} in the saturation exponent")


def flux_transpiration(x, p: ModelParams | None = None) -> float:
    p = p or DEFAULT_PARAMS
    x = _vec(x, 4, "state")
    _check_temperature_guards(x[2], p)
    return float(_transp(x[0], x[2], x[3], p.as_array()))


def saturation_humidity(x3: float, p: ModelParams | None = None) -> float:
    """Absolute humidity [kg m-3] at which canopy transpiration stops."""
    p = p or DEFAULT_PARAMS
    _check_temperature_guards(x3, p)
    return float(_saturation(float(x3), p.as_array()))


def derivatives(x, u, d, p: ModelParams | None = None) -> np.ndarray:
    """Per-second state rates ``dx/dt`` for the held inputs ``u`` and weather ``d``."""
    p = p or DEFAULT_PARAMS
    x, u, d = _vec(x, 4, "state"), _vec(u, 3, "control"), _vec(d, 4, "disturbance")
    _check_temperature_guards(x[2], p)
    out = np.empty(4)
    _deriv(x, u, d, p.as_array(), out)
    return out


_STAGES = {1: "k1", 2: "k2", 3: "k3", 4: "k4"}


def rk4_step(x, u, d, p: ModelParams | None = None, h: float | None = None) -> np.ndarray:
    """Advance one zero-order-hold interval with classical RK4, then clamp x1, x2, x4 at 0."""
    p = p or DEFAULT_PARAMS
    h = p.h if h is None else float(h)
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    x, u, d = _vec(x, 4, "state"), _vec(u, 3, "control"), _vec(d, 4, "disturbance")
    out = np.empty(4)
    status = _rk4(x, u, d, p.as_array(), h, out)
    if status:
        raise FloatingPointError(f"non-finite derivative in RK4 stage {_STAGES[status]} at x={x}, u={u}, d={d}")
    return out


def measure(x, p: ModelParams | None = None) -> np.ndarray:
    """Map a state to the measured outputs (g m-2, ppm, C, % RH)."""
    p = p or DEFAULT_PARAMS
    x = _vec(x, 4, "state")
    if x[2] <= -p.p25:
        raise ValueError(f"temperature {x[2]} C is at or below absolute zero")
    if x[2] + p.p49 <= 0:
        raise ValueError(f"singular denominator x3 + p49 = {x[2] + p.p49} in the humidity output")
    out = np.empty(4)
    _measure(x, p.as_array(), out)
    return out


def check_control(u, u_min=U_MIN, u_max=U_MAX) -> np.ndarray:
    u = _vec(u, 3, "control")
    if np.any(u < u_min) or np.any(u > u_max):
        raise ValueError(f"control {u} outside bounds [{u_min}, {u_max}]")
    return u


def simulate_episode(
    x0,
    policy: Callable[[int, np.ndarray, np.ndarray, np.ndarray], Sequence[float]],
    weather,
    steps: int,
    p: ModelParams | None = None,
    metadata: dict | None = None,
):
    """Closed-loop rollout of ``policy(k, x, y, d) -> u`` against the RK4 model.

    ``weather`` is a :class:`~greenhouse_mpc.weather.DisturbanceSeries` or an
    ``(n, 4)`` array sampled every ``p.h`` seconds.  Out-of-bounds inputs from
    the policy raise instead of being clipped.
    """
    from .episode import EpisodeLog

    p = p or DEFAULT_PARAMS
    D = np.asarray(getattr(weather, "values", weather), dtype=np.float64)
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if D.ndim != 2 or D.shape[1] != 4 or len(D) < steps + 1:
        raise ValueError(f"weather needs at least {steps + 1} samples of 4 channels, got shape {D.shape}")
    n = steps + 1
    X = np.empty((n, 4))
    U = np.zeros((n, 3))
    Y = np.empty((n, 4))
    X[0] = _vec(x0, 4, "initial state")
    Y[0] = measure(X[0], p)
    for k in range(steps):
        try:
            U[k] = check_control(policy(k, X[k], Y[k], D[k]))
        except ValueError as exc:
            raise ValueError(f"policy returned an invalid input at step {k}: {exc}") from None
        X[k + 1] = rk4_step(X[k], U[k], D[k], p)
        Y[k + 1] = measure(X[k + 1], p)
    return EpisodeLog(D=D[:n].copy(), U=U, X=X, Y=Y, h=p.h, metadata=dict(metadata or {}))
