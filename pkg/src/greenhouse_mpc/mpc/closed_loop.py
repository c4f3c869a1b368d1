"""Receding-horizon loop against the true simulator."""
from __future__ import annotations

import time

import numpy as np

from ..dynamics import DEFAULT_PARAMS, ModelParams, check_control, measure, rk4_step
from ..episode import EpisodeLog
from ..metrics import ControlStats
from .config import MpcConfig
from .predictors import HorizonContext
from .solver import enforce_feasible, plan_bounds, shift_plan, solve_horizon


class ControlError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"controller failed at step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


def receding_horizon_control(predictor, weather, x0, steps: int, config: MpcConfig | None = None,
                             params: ModelParams | None = None, metadata: dict | None = None,
                             exploration: float = 0.0, seed: int = 0) -> tuple[EpisodeLog, ControlStats]:
    """Solve, apply the first input, step the RK4 plant, repeat.

    ``exploration`` adds seeded Gaussian dither (as a fraction of ``u_max``) to
    each applied input before it is projected back onto the feasible set; it is
    meant for generating diverse training data and defaults to off.
    """
    config = config or MpcConfig()
    p = params or DEFAULT_PARAMS
    D = np.asarray(getattr(weather, "values", weather), dtype=np.float64)
    n_p = config.horizon
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if len(D) < steps + n_p:
        raise ValueError(f"weather has {len(D)} samples; {steps} steps with horizon {n_p} need {steps + n_p}")
    n = steps + 1
    X, U, Y = np.empty((n, 4)), np.zeros((n, 3)), np.empty((n, 4))
    X[0] = np.asarray(x0, dtype=np.float64)
    Y[0] = measure(X[0], p)
    hist = np.zeros((n, 11))
    stats = ControlStats()
    rng = np.random.default_rng([seed, 1])
    plan = None
    u_prev = None
    for k in range(steps):
        hist[k, :4], hist[k, 7:] = D[k], Y[k]
        ctx = HorizonContext(k, Y[k], D[k:], u_prev, X[k], hist[:k + 1])
        warm = shift_plan(plan.U, n_p) if (plan is not None and config.warm_start) else None
        try:
            t0 = time.perf_counter()
            plan = solve_horizon(ctx, predictor, config, warm)
            stats.solve_times.append(time.perf_counter() - t0)
            u = plan.first
            if exploration > 0.0:
                u = u + exploration * config.u_max_arr * rng.standard_normal(3)
                lb, ub = plan_bounds(ctx, 1, config)
                u = enforce_feasible(u[None], lb, ub, u_prev, config.du_max_arr)[0]
            U[k] = check_control(u, config.u_min_arr, config.u_max_arr)
            X[k + 1] = rk4_step(X[k], U[k], D[k], p)
            Y[k + 1] = measure(X[k + 1], p)
        except (ValueError, FloatingPointError) as exc:
            raise ControlError(k, exc) from exc
        hist[k, 4:7] = U[k]
        stats.iterations.append(plan.iterations)
        stats.objectives.append(plan.objective)
        u_prev = U[k]
    log = EpisodeLog(D=D[:n].copy(), U=U, X=X, Y=Y, h=p.h, metadata=dict(metadata or {}))
    return log, stats.summarize(log)
