"""Projected-gradient horizon solver with momentum, restarts and warm starts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .config import MpcConfig
from .objective import PenaltyTerms
from .predictors import HorizonContext, Rollout


STEP_GROWTH = 1.2
MAX_STEP = 0.2
MIN_STEP = 1e-9


@dataclass
class ControlPlan:
    U: np.ndarray
    objective: float
    iterations: int = 0
    restarts: int = 0
    start_objective: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def first(self) -> np.ndarray:
        return self.U[0].copy()


def co2_upper_bounds(forecast, n: int, config: MpcConfig) -> np.ndarray:
    """Per-step CO2-injection ceiling.

    At night-start horizons the whole plan is masked to zero.  Otherwise each
    step's ceiling shrinks by one rate increment per step left before the next
    night in the forecast, so the closed loop can always reach zero in time.
    """
    forecast = np.asarray(forecast, dtype=np.float64)
    u_max, du = config.u_max[0], config.du_max[0]
    ub = np.full(n, u_max)
    if forecast[0, 0] < config.night_radiation:
        ub[:] = 0.0
        return ub
    night = np.flatnonzero(forecast[:, 0] < config.night_radiation)
    levels = taper_levels(du, u_max)
    for j in range(n):
        later = night[night >= j]
        if len(later):
            ub[j] = levels[min(later[0] - j, len(levels) - 1)]
    return ub


def taper_levels(du: float, u_max: float) -> np.ndarray:
    """Ceilings ``m`` rate steps before night: about ``m * du``, capped at ``u_max``.

    Each level is the largest float whose distance to the level below is at most
    ``du`` as evaluated in floating point, so descending through the levels never
    violates the rate limit by a rounding error.
    """
    levels = [0.0]
    while levels[-1] < u_max:
        lv = min(levels[-1] + du, u_max)
        while lv - levels[-1] > du:
            lv = np.nextafter(lv, -np.inf)
        levels.append(float(lv))
    return np.array(levels)


def plan_bounds(ctx: HorizonContext, n: int, config: MpcConfig) -> tuple[np.ndarray, np.ndarray]:
    lb = np.tile(config.u_min_arr, (n, 1))
    ub = np.tile(config.u_max_arr, (n, 1))
    ub[:, 0] = np.minimum(ub[:, 0], co2_upper_bounds(ctx.forecast, n, config))
    lb = np.minimum(lb, ub)
    return lb, ub


def enforce_feasible(U, lb, ub, u_prev, du_max) -> np.ndarray:
    """Sequentially clamp a plan into its box and the rate band around the previous input.

    Values that land a rounding error outside the rate band are nudged one ulp at
    a time towards the previous input, so the bound holds exactly in floating point.
    Where box and rate band do not intersect (a rounding-level conflict at the
    night mask), the box wins.
    """
    U = np.array(U, dtype=np.float64)
    du_max = np.asarray(du_max, dtype=np.float64)
    prev = None if u_prev is None else np.asarray(u_prev, dtype=np.float64)
    for j in range(len(U)):
        lo, hi = lb[j], ub[j]
        if prev is not None:
            lo = np.maximum(lo, prev - du_max)
            hi = np.minimum(hi, prev + du_max)
        u = np.minimum(np.maximum(U[j], lo), hi)
        if prev is not None:
            for i in range(3):
                if lo[i] > hi[i]:
                    u[i] = min(max(U[j, i], lb[j, i]), ub[j, i])
                    continue
                for _ in range(64):
                    if abs(u[i] - prev[i]) <= du_max[i]:
                        break
                    u[i] = np.nextafter(u[i], prev[i])
        U[j] = u
        prev = u
    return U


@numba.njit(cache=True)
def _chain_projection(z, lo, hi, prev, has_prev, d, tol, max_iter):
    """Euclidean projection of one input channel onto its box and rate chain (Dykstra).

    The sets are the box (with the first step's band around ``prev`` folded in)
    and the pairwise rate constraints on odd and even links, each of which has a
    closed-form projection.
    """
    n = z.shape[0]
    lo0, hi0 = lo[0], hi[0]
    if has_prev and max(lo0, prev - d) <= min(hi0, prev + d):
        lo0, hi0 = max(lo0, prev - d), min(hi0, prev + d)
    x = z.copy()
    p = np.zeros((3, n))
    y = np.empty(n)
    for _ in range(max_iter):
        change = 0.0
        for k in range(3):
            for j in range(n):
                y[j] = x[j] + p[k, j]
            if k == 0:
                for j in range(n):
                    a, b = (lo0, hi0) if j == 0 else (lo[j], hi[j])
                    v = min(max(y[j], a), b)
                    p[k, j] = y[j] - v
                    change = max(change, abs(v - x[j]))
                    x[j] = v
            else:
                for j in range(n):
                    p[k, j] = 0.0
                start = 1 if k == 1 else 2
                for j in range(n):
                    change = max(change, abs(y[j] - x[j]))
                    x[j] = y[j]
                for j in range(start, n, 2):
                    gap = x[j] - x[j - 1]
                    if gap > d or gap < -d:
                        mid = 0.5 * (x[j] + x[j - 1])
                        half = 0.5 * d if gap > 0 else -0.5 * d
                        x[j - 1], x[j] = mid - half, mid + half
                        change = max(change, abs(gap) - d)
                for j in range(n):
                    p[k, j] = y[j] - x[j]
        if change < tol:
            break
    return x


def project_plan(U, lb, ub, u_prev, du_max, tol: float = 1e-12, max_iter: int = 2000) -> np.ndarray:
    """Nearest plan (per channel, Euclidean) within the box and rate limits, made exactly feasible."""
    U = np.asarray(U, dtype=np.float64)
    du_max = np.asarray(du_max, dtype=np.float64)
    has_prev = u_prev is not None
    prev = np.zeros(3) if u_prev is None else np.asarray(u_prev, dtype=np.float64)
    out = np.empty_like(U)
    for i in range(3):
        out[:, i] = _chain_projection(np.ascontiguousarray(U[:, i]), np.ascontiguousarray(lb[:, i]),
                                      np.ascontiguousarray(ub[:, i]), prev[i], has_prev, du_max[i], tol,
                                      max_iter)
    return enforce_feasible(out, lb, ub, u_prev, du_max)


def shift_plan(U, n: int | None = None) -> np.ndarray:
    """Drop the applied first input and repeat the last one."""
    U = np.asarray(U, dtype=np.float64)
    n = len(U) if n is None else n
    out = np.vstack([U[1:], U[-1:]]) if len(U) > 1 else U.copy()
    if len(out) < n:
        out = np.vstack([out, np.repeat(out[-1:], n - len(out), axis=0)])
    return out[:n]


def _descend(rollout: Rollout, terms: PenaltyTerms, v0, project, config: MpcConfig):
    """Momentum descent on the normalized plan; every iterate passes through ``project``.

    The step is scaled per coordinate by a running RMS of its gradient, so a
    single stiff input cannot freeze the others.  An improving step grows the
    step size by 20 %; a non-improving one reverts to the best point, halves
    the step size and resets both moment estimates.
    """
    u_max = config.u_max_arr
    beta2, eps = 0.999, 1e-12
    v = project(v0)
    J, g = rollout.value_and_grad(v * u_max, terms, config.fd_step)
    _check_finite(J, v * u_max, 0)
    best_J, best_v, best_g = J, v, g
    step = config.step_size
    m = np.zeros_like(v)
    s = np.zeros_like(v)
    t = 0
    it = 0
    for it in range(1, config.iterations + 1):
        gv = g * u_max
        if step < MIN_STEP or not np.any(gv):
            break
        t += 1
        m = config.momentum * m + (1.0 - config.momentum) * gv
        s = beta2 * s + (1.0 - beta2) * gv * gv
        m_hat = m / (1.0 - config.momentum ** t)
        s_hat = s / (1.0 - beta2 ** t)
        cand = project(v - step * m_hat / (np.sqrt(s_hat) + eps))
        J, g = rollout.value_and_grad(cand * u_max, terms, config.fd_step)
        _check_finite(J, cand * u_max, it)
        if J < best_J:
            best_J, best_v, best_g = J, cand, g
            v = cand
            step = min(step * STEP_GROWTH, MAX_STEP)
        else:
            step *= 0.5
            m[:] = 0.0
            s[:] = 0.0
            t = 0
            v, g = best_v, best_g
    return best_v, best_J, it


def _check_finite(J, U, it):
    if not math.isfinite(J):
        raise FloatingPointError(f"non-finite horizon objective at solver iteration {it}; plan={U.tolist()}")


def solve_horizon(ctx: HorizonContext, predictor, config: MpcConfig, warm=None) -> ControlPlan:
    """Minimize the penalized horizon objective over feasible plans.

    Every iterate is projected onto the box, the night mask and the rate limits.

    Restarts are the warm start (or the previous input held) plus seeded
    perturbations of it.  The returned plan is the best feasible candidate,
    including the feasibility-clamped warm start itself.
    """
    n = config.horizon
    if len(ctx.forecast) < n:
        raise ValueError(f"forecast covers {len(ctx.forecast)} steps, horizon needs {n}")
    rollout = predictor.bind(ctx, n)
    terms = PenaltyTerms(config, ctx.d1, n, ctx.u_prev)
    lb, ub = plan_bounds(ctx, n, config)
    u_max = config.u_max_arr


    def project(v):
        return project_plan(v * u_max, lb, ub, ctx.u_prev, config.du_max_arr) / u_max

    if warm is not None:
        start = np.asarray(warm, dtype=np.float64)
        if start.shape != (n, 3):
            raise ValueError(f"warm start must have shape {(n, 3)}, got {start.shape}")
    elif ctx.u_prev is not None:
        start = np.tile(np.asarray(ctx.u_prev, dtype=np.float64), (n, 1))
    else:
        start = lb.copy()
    start = enforce_feasible(start, lb, ub, ctx.u_prev, config.du_max_arr)
    start_J = rollout.value(start, terms)
    best_U, best_J = start, start_J

    rng = np.random.default_rng([config.seed, ctx.k0])
    total_it = 0
    for r in range(config.restarts):
        v0 = start / u_max
        if r > 0:
            v0 = v0 + config.restart_spread * rng.standard_normal(v0.shape)
        v, _, it = _descend(rollout, terms, v0, project, config)
        total_it += it
        U = enforce_feasible(v * u_max, lb, ub, ctx.u_prev, config.du_max_arr)
        J = rollout.value(U, terms)
        _check_finite(J, U, it)
        if J < best_J:
            best_U, best_J = U, J
    return ControlPlan(best_U, float(best_J), total_it, config.restarts, float(start_J),
                       {"lb": lb, "ub": ub})


def horizon_objective(U, predictor, ctx: HorizonContext, config: MpcConfig) -> float:
    """Penalized objective of a plan under ``predictor`` for the horizon starting at ``ctx``."""
    U = np.asarray(U, dtype=np.float64)
    if len(U) < 1:
        raise ValueError("the horizon must contain at least one step")
    rollout = predictor.bind(ctx, len(U))
    return rollout.value(U, PenaltyTerms(config, ctx.d1, len(U), ctx.u_prev))
