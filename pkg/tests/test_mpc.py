import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenhouse_mpc.dynamics import DEFAULT_X0, U_MAX, measure, rk4_step
from greenhouse_mpc.mpc import (ControlError, HorizonContext, MpcConfig, OraclePredictor, PenaltyTerms,
                                SurrogatePredictor, enforce_feasible, horizon_objective, night_co2_mask,
                                output_bounds, plan_bounds, receding_horizon_control, shift_plan,
                                solve_horizon, stage_cost, temp_bounds)
from greenhouse_mpc.mpc.solver import co2_upper_bounds, project_plan, taper_levels
from greenhouse_mpc.seqnet import fit_scaler, init_weights
from greenhouse_mpc.weather import WeatherProfile, synth_weather

DU = U_MAX / 10
DAY = [300.0, 7.2e-4, 12.0, 6e-3]
NIGHT = [0.0, 7.2e-4, 8.0, 6e-3]


def _ctx(n=4, day=True, u_prev=None, x=DEFAULT_X0, k0=0):
    fc = np.tile(DAY if day else NIGHT, (n + 2, 1))
    x = np.asarray(x, dtype=np.float64)
    return HorizonContext(k0, measure(x), fc, None if u_prev is None else np.asarray(u_prev, float), x)


def _feasible(U, lb, ub, u_prev):
    U = np.asarray(U)
    ok = np.all(U >= lb) and np.all(U <= ub)
    prev = u_prev
    for u in U:
        if prev is not None:
            ok &= bool(np.all(np.abs(u - prev) <= DU))
        prev = u
    return ok


def test_temperature_band_follows_first_step_radiation():
    assert temp_bounds(0.0) == (10.0, 15.0)
    assert temp_bounds(9.99) == (10.0, 15.0)
    assert temp_bounds(10.0) == (15.0, 20.0)
    with pytest.raises(ValueError):
        temp_bounds(-1.0)


def test_night_mask_zeroes_only_co2():
    u = night_co2_mask([[1.0, 2.0, 3.0]], 5.0)
    np.testing.assert_array_equal(u, [[0.0, 2.0, 3.0]])
    np.testing.assert_array_equal(night_co2_mask([1.0, 2.0, 3.0], 50.0), [1.0, 2.0, 3.0])


def test_stage_cost_weights():
    assert stage_cost([1.0, 2.0, 3.0], [5.0, 0, 0, 0]) == -5000.0 + 10.0 + 2.0 + 3.0


def test_output_bounds_shape_and_values():
    lo, hi = output_bounds(0.0, 3, MpcConfig())
    assert lo.shape == hi.shape == (3, 3)
    np.testing.assert_array_equal(hi[0], [1000.0, 15.0, 85.0])
    np.testing.assert_array_equal(lo[0, 1:], [10.0, 50.0])
    assert lo[0, 0] == -np.inf


def _manual_objective(U, Y, u_prev, cfg, d1):
    """Straight transcription of the penalized objective."""
    t_lo, t_hi = (10, 15) if d1 < 10 else (15, 20)
    lo = [-np.inf, t_lo, 50.0]
    hi = [1000.0, t_hi, 85.0]
    scale = [100.0, 1.0, 1.0]
    J = 0.0
    for j in range(len(U)):
        J += -1000.0 * Y[j][0] + 10 * U[j][0] + U[j][1] + U[j][2]
        for c in range(3):
            y = Y[j][c + 1]
            v = max(lo[c] - y, 0.0, y - hi[c])
            J += 1e3 * (v / scale[c]) ** 2
        prev = u_prev if j == 0 else U[j - 1]
        if prev is not None:
            for i in range(3):
                e = abs(U[j][i] - prev[i]) / U_MAX[i] - 0.1
                J += 1e4 * max(e, 0.0) ** 2
    return J


def test_penalized_objective_matches_manual_transcription():
    rng = np.random.default_rng(0)
    cfg = MpcConfig(horizon=5)
    for trial in range(20):
        U = rng.uniform(0, 1, (5, 3)) * U_MAX
        Y = np.column_stack([rng.uniform(0, 300, 5), rng.uniform(300, 1400, 5),
                             rng.uniform(5, 25, 5), rng.uniform(40, 100, 5)])
        u_prev = None if trial % 2 else rng.uniform(0, 1, 3) * U_MAX
        d1 = 0.0 if trial % 3 == 0 else 200.0
        terms = PenaltyTerms(cfg, d1, 5, u_prev)
        assert terms(U, Y) == pytest.approx(_manual_objective(U, Y, u_prev, cfg, d1), rel=1e-12)


def test_penalized_objective_gradient_matches_differences():
    rng = np.random.default_rng(1)
    cfg = MpcConfig(horizon=4)
    U = rng.uniform(0, 1, (4, 3)) * U_MAX
    Y = np.column_stack([rng.uniform(0, 300, 4), rng.uniform(800, 1400, 4),
                         rng.uniform(5, 25, 4), rng.uniform(40, 100, 4)])
    terms = PenaltyTerms(cfg, 200.0, 4, U_MAX * 0.5)
    _, dY, dU = terms(U, Y, with_grad=True)
    for arr, grad in ((U, dU), (Y, dY)):
        for idx in np.ndindex(arr.shape):
            h = 1e-6 * max(1.0, abs(arr[idx]))
            old = arr[idx]
            arr[idx] = old + h
            jp = terms(U, Y)
            arr[idx] = old - h
            jm = terms(U, Y)
            arr[idx] = old
            assert grad[idx] == pytest.approx((jp - jm) / (2 * h), rel=1e-5, abs=1e-3)


def test_oracle_rollout_equals_stepping_the_plant():
    ctx = _ctx(3)
    U = np.array([[0.5, 1.0, 20.0], [0.6, 1.2, 30.0], [0.7, 1.4, 40.0]])
    Y = OraclePredictor().bind(ctx, 3).predict(U)
    x = np.asarray(DEFAULT_X0, float)
    for j in range(3):
        x = rk4_step(x, U[j], ctx.forecast[j])
        np.testing.assert_array_equal(Y[j], measure(x))


def _fd_grad(rollout, U, terms, h=1e-4):
    G = np.empty_like(U)
    for idx in np.ndindex(U.shape):
        step = h * U_MAX[idx[1]]
        Up, Um = U.copy(), U.copy()
        Up[idx] += step
        Um[idx] -= step
        G[idx] = (rollout.value(Up, terms) - rollout.value(Um, terms)) / (2 * step)
    return G


def test_oracle_gradient_matches_independent_differences():
    ctx = _ctx(4, u_prev=[0.3, 1.0, 10.0])
    cfg = MpcConfig(horizon=4)
    ro = OraclePredictor().bind(ctx, 4)
    terms = PenaltyTerms(cfg, ctx.d1, 4, ctx.u_prev)
    U = np.array([[0.4, 1.5, 20.0], [0.5, 1.6, 30.0], [0.6, 1.7, 35.0], [0.6, 1.9, 40.0]])
    J, G = ro.value_and_grad(U, terms)
    assert J == pytest.approx(ro.value(U, terms), rel=1e-14)
    np.testing.assert_allclose(G, _fd_grad(ro, U, terms), rtol=1e-4, atol=1e-2)


def _surrogate(kind, window=4):
    w = init_weights(kind, seed=3)
    w.scaler = fit_scaler([_fake_episode()])
    return SurrogatePredictor(w, window)


def _fake_episode():
    from greenhouse_mpc.dynamics import simulate_episode
    d = synth_weather(WeatherProfile(seed=1), 1)
    return simulate_episode(DEFAULT_X0, lambda k, x, y, dd: [0.4 * (dd[0] > 10), 1.0, 20.0], d, 96)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_surrogate_gradient_matches_differences(kind):
    ep = _fake_episode()
    k0 = 10
    hist = ep.features()[:k0 + 1].copy()
    ctx = HorizonContext(k0, ep.Y[k0], ep.D[k0:], ep.U[k0 - 1], ep.X[k0], hist)
    cfg = MpcConfig(horizon=5)
    ro = _surrogate(kind).bind(ctx, 5)
    terms = PenaltyTerms(cfg, ctx.d1, 5, ctx.u_prev)
    U = np.random.default_rng(2).uniform(0.2, 0.8, (5, 3)) * U_MAX
    J, G = ro.value_and_grad(U, terms)
    assert J == pytest.approx(ro.value(U, terms), rel=1e-12)
    np.testing.assert_allclose(G, _fd_grad(ro, U, terms, h=1e-6), rtol=1e-4, atol=1e-3)


def test_surrogate_requires_scaler():
    with pytest.raises(ValueError):
        SurrogatePredictor(init_weights("gru"), 4)


def test_co2_ceiling_tapers_before_night():
    fc = np.array([DAY] * 3 + [NIGHT] * 3)
    ub = co2_upper_bounds(fc, 5, MpcConfig())
    np.testing.assert_allclose(ub, [3 * DU[0], 2 * DU[0], DU[0], 0.0, 0.0])
    assert np.all(co2_upper_bounds(np.array([NIGHT] + [DAY] * 5), 5, MpcConfig()) == 0.0)


@pytest.mark.parametrize("du, u_max", [(0.12, 1.2), (0.1, 1.0), (0.7, 7.0), (0.03, 1.0)])
def test_taper_levels_descend_within_the_rate_limit_exactly(du, u_max):
    levels = taper_levels(du, u_max)
    assert levels[0] == 0.0 and levels[-1] == u_max
    assert np.all(np.diff(levels) <= du) and np.all(np.diff(levels) >= 0)
    # the ceiling one step closer to night is always inside the rate band of the previous one
    assert all(hi - du <= lo for lo, hi in zip(levels[:-1], levels[1:]))
    np.testing.assert_allclose(levels[:int(u_max / du)], du * np.arange(int(u_max / du)), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), night=st.booleans(), has_prev=st.booleans())
def test_enforce_feasible_always_satisfies_constraints_exactly(seed, night, has_prev):
    rng = np.random.default_rng(seed)
    ctx = _ctx(6, day=not night)
    lb, ub = plan_bounds(ctx, 6, MpcConfig(horizon=6))
    u_prev = rng.uniform(0, 1, 3) * U_MAX if has_prev else None
    if u_prev is not None and night:
        u_prev[0] = min(u_prev[0], DU[0])
    U = enforce_feasible(rng.uniform(-0.5, 1.5, (6, 3)) * U_MAX, lb, ub, u_prev, DU)
    assert _feasible(U, lb, ub, u_prev)


def test_enforce_feasible_terminates_on_rounding_conflict():
    # previous CO2 input a rounding error above one rate step, next horizon masked to zero
    lb, ub = np.zeros((2, 3)), np.tile([0.0, 7.5, 150.0], (2, 1))
    prev = np.array([np.nextafter(DU[0], 1.0), 1.0, 10.0])
    U = enforce_feasible(np.zeros((2, 3)), lb, ub, prev, DU)
    assert np.all(U[:, 0] == 0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_projection_is_the_nearest_feasible_plan(seed):
    rng = np.random.default_rng(seed)
    n = 5
    lb, ub = np.zeros((n, 3)), np.tile(U_MAX, (n, 1))
    u_prev = rng.uniform(0, 1, 3) * U_MAX
    Z = rng.uniform(-0.3, 1.3, (n, 3)) * U_MAX
    P = project_plan(Z, lb, ub, u_prev, DU)
    assert _feasible(P, lb, ub, u_prev)
    # variational inequality of a Euclidean projection, checked per channel
    for _ in range(30):
        W = enforce_feasible(rng.uniform(0, 1, (n, 3)) * U_MAX, lb, ub, u_prev, DU)
        ip = np.sum((Z - P) * (W - P), axis=0) / U_MAX ** 2
        assert np.all(ip <= 1e-9)


def test_shift_plan_repeats_last_input():
    U = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(shift_plan(U), [[3, 4, 5], [6, 7, 8], [6, 7, 8]])
    assert shift_plan(U, 5).shape == (5, 3)


def test_solution_is_feasible_and_deterministic():
    cfg = MpcConfig(horizon=4, iterations=40)
    ctx = _ctx(4, u_prev=[0.5, 1.0, 50.0])
    a, b = solve_horizon(ctx, OraclePredictor(), cfg), solve_horizon(ctx, OraclePredictor(), cfg)
    np.testing.assert_array_equal(a.U, b.U)
    lb, ub = plan_bounds(ctx, 4, cfg)
    assert _feasible(a.U, lb, ub, ctx.u_prev)
    assert a.objective == pytest.approx(horizon_objective(a.U, OraclePredictor(), ctx, cfg), rel=1e-12)


def test_warm_start_never_increases_objective():
    cfg = MpcConfig(horizon=4, iterations=20, restarts=1)
    for seed in range(5):
        warm = np.random.default_rng(seed).uniform(0, 1, (4, 3)) * U_MAX
        ctx = _ctx(4, u_prev=warm[0])
        lb, ub = plan_bounds(ctx, 4, cfg)
        start = enforce_feasible(warm, lb, ub, ctx.u_prev, DU)
        plan = solve_horizon(ctx, OraclePredictor(), cfg, warm=warm)
        assert plan.objective <= horizon_objective(start, OraclePredictor(), ctx, cfg)


def test_pure_input_cost_drives_plan_to_zero():
    cfg = MpcConfig(horizon=3, q_yd=0.0, rho_y=0.0, iterations=200)
    for day in (True, False):
        plan = solve_horizon(_ctx(3, day=day), OraclePredictor(), cfg)
        np.testing.assert_allclose(plan.U, 0.0, atol=1e-12)


def test_night_horizon_never_injects_co2():
    plan = solve_horizon(_ctx(4, day=False, u_prev=[0.1, 1.0, 30.0]), OraclePredictor(),
                         MpcConfig(horizon=4, iterations=30))
    assert np.all(plan.U[:, 0] == 0.0)


def test_closed_loop_short_run_is_feasible():
    weather = synth_weather(WeatherProfile(seed=2), 1)
    cfg = MpcConfig(horizon=4, iterations=10, restarts=1)
    log, stats = receding_horizon_control(OraclePredictor(), weather, DEFAULT_X0, 24, cfg,
                                          exploration=0.1, seed=3)
    log.validate()
    assert len(stats.solve_times) == 24 and stats.epi is not None
    U = log.U[:-1]
    assert np.all(U >= 0) and np.all(U <= U_MAX)
    assert np.all(np.abs(np.diff(U, axis=0)) <= DU)
    assert np.all(U[log.D[:-1, 0] < 10, 0] == 0.0)


def test_closed_loop_rejects_short_weather():
    with pytest.raises(ValueError):
        receding_horizon_control(OraclePredictor(), np.tile(DAY, (5, 1)), DEFAULT_X0, 4, MpcConfig(horizon=4))


def test_closed_loop_wraps_solver_failures_with_step():
    class Broken:
        def bind(self, ctx, n):
            raise ValueError("boom")

    with pytest.raises(ControlError) as err:
        receding_horizon_control(Broken(), np.tile(DAY, (10, 1)), DEFAULT_X0, 3, MpcConfig(horizon=2))
    assert err.value.step == 0


def test_config_rejects_bad_settings():
    with pytest.raises(ValueError):
        MpcConfig(horizon=0)
    with pytest.raises(ValueError):
        MpcConfig.from_dict({"horizn": 3})
    assert MpcConfig().replace(u_max=(2.4, 7.5, 150.0)).du_max[0] == pytest.approx(0.24)
