"""Receding-horizon predictive control over the RK4 model or a recurrent surrogate."""
from .closed_loop import ControlError, receding_horizon_control
from .config import MpcConfig
from .objective import PenaltyTerms, night_co2_mask, output_bounds, stage_cost, temp_bounds
from .predictors import HorizonContext, OraclePredictor, Rollout, SurrogatePredictor
from .solver import ControlPlan, enforce_feasible, horizon_objective, plan_bounds, shift_plan, solve_horizon

__all__ = [
    "ControlError", "receding_horizon_control", "MpcConfig",
    "PenaltyTerms", "night_co2_mask", "output_bounds", "stage_cost", "temp_bounds",
    "HorizonContext", "OraclePredictor", "Rollout", "SurrogatePredictor",
    "ControlPlan", "enforce_feasible", "horizon_objective", "plan_bounds", "shift_plan", "solve_horizon",
]
