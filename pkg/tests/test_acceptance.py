"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N PASS|FAIL`` line; the lines are repeated in
the pytest terminal summary.  The desk-scale tests share one corpus generated
with the default experiment config (6 oracle-MPC episodes of 40 days).
"""
import itertools
import math
import time

import numpy as np
import pytest

from conftest import (oracle_deriv, oracle_measure, oracle_phot, oracle_transp, oracle_vent_co2,
                      oracle_vent_h2o, random_admissible)
from test_seqnet import gradient_check
from greenhouse_mpc import dynamics as dyn
from greenhouse_mpc.dynamics import U_MAX, derivatives, measure, rk4_step
from greenhouse_mpc.episode import EpisodeLog
from greenhouse_mpc.harness import generate_data, load_config
from greenhouse_mpc.harness.cli import main as cli_main
from greenhouse_mpc.harness.pipeline import eval_weather, load_episodes, run_policy
from greenhouse_mpc.metrics import epi, humidity_violations, thermal_violations
from greenhouse_mpc.mpc import (HorizonContext, MpcConfig, OraclePredictor, PenaltyTerms, SurrogatePredictor,
                                plan_bounds, solve_horizon)
from greenhouse_mpc.seqnet import TrainConfig, fit_scaler, init_weights, make_windows, train
from greenhouse_mpc.seqnet.training import evaluate
from greenhouse_mpc.weather import split_train_test

slow = pytest.mark.slow
BEST_BATCH = {"gru": 8, "lstm": 16}
WINDOW = 24


# --------------------------------------------------------------------------- shared desk-scale fixtures

@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    cfg = load_config()
    out = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    generate_data(cfg, out)
    episodes = load_episodes(out)
    train_eps, test_eps = split_train_test(episodes, float(cfg.training["split_ratio"]))
    scaler = fit_scaler(train_eps)
    Xtr, Ytr, _ = make_windows(train_eps, WINDOW, scaler)
    Xte, Yte, _ = make_windows(test_eps, WINDOW, scaler)
    return {"cfg": cfg, "out": out, "scaler": scaler, "train": (Xtr, Ytr), "test": (Xte, Yte),
            "datagen_s": time.perf_counter() - t0}


def _train_config(cfg, batch, epochs=None):
    t = cfg.training
    return TrainConfig(window=WINDOW, batch_size=batch, epochs=int(epochs or t["epochs"]),
                       learning_rate=float(t["learning_rate"]), step_size=int(t["step_size"]),
                       gamma=float(t["gamma"]), dropout=float(t["dropout"]), seed=cfg.seed)


@pytest.fixture(scope="module")
def trained(desk):
    models = {}
    t0 = time.perf_counter()
    for cell, batch in BEST_BATCH.items():
        res = train(cell, *desk["train"], _train_config(desk["cfg"], batch))
        res.weights.scaler = desk["scaler"]
        _, rmse = evaluate(res.weights, *desk["test"])
        models[cell] = (res.weights, rmse)
    return models, time.perf_counter() - t0


@pytest.fixture(scope="module")
def closed_loop(desk, trained):
    """10-day runs on the held-out scenario: zero input, GRU24 and LSTM24 surrogate MPC."""
    cfg = desk["cfg"]
    weather = eval_weather(cfg)
    models, _ = trained
    runs = {"ZERO": run_policy(cfg, weather, "zero")}
    for cell in ("gru", "lstm"):
        pred = SurrogatePredictor(models[cell][0], WINDOW)
        runs[f"{cell.upper()}24"] = run_policy(cfg, weather, "surrogate-mpc", predictor=pred, horizon=24)
    return runs


# --------------------------------------------------------------------------- criteria

def test_criterion_01_dynamics_fidelity(verdict):
    t0 = time.perf_counter()
    X, U, D = random_admissible(np.random.default_rng(2024), 1000)
    worst = 0.0
    for x, u, d in zip(X, U, D):
        pairs = [
            (dyn.flux_photosynthesis(x, d), oracle_phot(x[0], x[1], x[2], d[0])),
            (dyn.flux_vent_co2(x, u, d), oracle_vent_co2(x[1], u[1], d[1])),
            (dyn.flux_vent_h2o(x, u, d), oracle_vent_h2o(x[3], u[1], d[3])),
            (dyn.flux_transpiration(x), oracle_transp(x[0], x[2], x[3])),
        ]
        pairs += list(zip(derivatives(x, u, d), oracle_deriv(x, u, d)))
        for got, want in pairs:
            worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
    dt = time.perf_counter() - t0
    verdict(1, "dynamics fidelity", worst <= 1e-12 and dt < 5.0,
            f"max relative error {worst:.2e} on 1000 points in {dt:.2f} s")


def _trajectory(h, hours=6.0):
    x = np.array([0.05, 8e-4, 18.0, 9e-3])
    u = np.array([0.6, 1.0, 40.0])
    d = np.array([400.0, 7.2e-4, 12.0, 6e-3])
    for _ in range(int(round(hours * 3600 / h))):
        x = rk4_step(x, u, d, h=h)
    return x


def test_criterion_02_integrator_order(verdict):
    t0 = time.perf_counter()
    ref = _trajectory(900.0 / 64)
    e1 = np.max(np.abs((_trajectory(900.0) - ref) / ref))
    e2 = np.max(np.abs((_trajectory(450.0) - ref) / ref))
    order = math.log2(e1 / e2)
    dt = time.perf_counter() - t0
    verdict(2, "integrator order", order >= 3.5 and dt < 10.0, f"measured order {order:.3f} in {dt:.2f} s")


def test_criterion_03_output_map(verdict):
    x = [0.0042, 0.0018, 20.0, 0.01]
    y = measure(x)
    ok = abs(y[1] - 983.0) <= 1.0 and abs(y[1] - oracle_measure(x)[1]) <= 1e-9 * y[1]
    ok &= y[0] == 1e3 * x[0] and y[2] == x[2]
    verdict(3, "output map", bool(ok), f"y2 = {y[1]:.3f} ppm, y1 = {y[0]}, y3 = {y[2]}")


def test_criterion_04_gradient_correctness(verdict):
    t0 = time.perf_counter()
    errs = {kind: max(gradient_check(kind, seed) for seed in range(20)) for kind in ("lstm", "gru")}
    dt = time.perf_counter() - t0
    verdict(4, "gradient correctness", max(errs.values()) < 1e-4 and dt < 60.0,
            f"max relative error LSTM {errs['lstm']:.2e}, GRU {errs['gru']:.2e} over 20 seeds in {dt:.1f} s")


def test_criterion_05_architecture_identities(verdict):
    lstm, gru = init_weights("lstm"), init_weights("gru")
    ratio = lstm.n_recurrent_params / gru.n_recurrent_params
    out = init_weights("gru").output_width
    from greenhouse_mpc.seqnet import predict
    head = predict(np.zeros((2, 6, 11)), gru).shape[1]
    ok = lstm.n_recurrent_params * 3 == gru.n_recurrent_params * 4 and out == 32 and head == 4
    verdict(5, "architecture identities", ok,
            f"LSTM:GRU recurrent params {lstm.n_recurrent_params}:{gru.n_recurrent_params} ({ratio:.4f}), "
            f"stack width {out}, head width {head}")


@slow
def test_criterion_06_training_progress(verdict, desk, trained):
    models, train_s = trained
    rmse = {cell: r for cell, (_, r) in models.items()}
    total = desk["datagen_s"] + train_s
    ok = all(r < 0.25 for r in rmse.values()) and total < 15 * 60
    verdict(6, "training progress", ok,
            f"test RMSE GRU {rmse['gru']:.4f} (b8), LSTM {rmse['lstm']:.4f} (b16); "
            f"corpus + training {total / 60:.1f} min")


def _epoch_seconds(cell, desk, batch=16, repeats=3):
    res = train(cell, *desk["train"], _train_config(desk["cfg"], batch, epochs=repeats))
    return min(res.epoch_seconds)


@slow
def test_criterion_07_efficiency_trend(verdict, desk, closed_loop):
    # interleave so both cells see the same machine load
    gru_ep, lstm_ep = [], []
    for _ in range(2):
        gru_ep.append(_epoch_seconds("gru", desk))
        lstm_ep.append(_epoch_seconds("lstm", desk))
    gru_t = closed_loop["GRU24"][1].total_time
    lstm_t = closed_loop["LSTM24"][1].total_time
    ok = min(gru_ep) < min(lstm_ep) and gru_t < lstm_t
    verdict(7, "efficiency trend", ok,
            f"epoch {min(gru_ep):.2f} s GRU vs {min(lstm_ep):.2f} s LSTM; "
            f"24-step MPC solve {gru_t:.1f} s GRU vs {lstm_t:.1f} s LSTM")


def _infeasible_inputs(log: EpisodeLog, cfg: MpcConfig) -> int:
    U = log.U[:log.steps]
    bad = np.any(U < cfg.u_min_arr, axis=1) | np.any(U > cfg.u_max_arr, axis=1)
    bad[1:] |= np.any(np.abs(np.diff(U, axis=0)) > cfg.du_max_arr, axis=1)
    bad |= (log.D[:log.steps, 0] < cfg.night_radiation) & (U[:, 0] != 0.0)
    return int(np.count_nonzero(bad))


@slow
def test_criterion_08_controller_feasibility(verdict, closed_loop):
    cfg = MpcConfig()
    counts = {label: _infeasible_inputs(closed_loop[label][0], cfg) for label in ("GRU24", "LSTM24")}
    n = closed_loop["GRU24"][0].steps
    verdict(8, "controller feasibility", not any(counts.values()),
            f"infeasible applied inputs over {n} steps: GRU24 {counts['GRU24']}, LSTM24 {counts['LSTM24']}")


def _small_instance(seed, cfg):
    rng = np.random.default_rng(seed)
    X, U, D = random_admissible(rng, 3)
    x = X[0]
    x[2] = rng.uniform(8, 25)
    forecast = D[:2].copy()
    if seed % 4 == 0:
        forecast[:, 0] = rng.uniform(0, 9, 2)
    u_prev = U[0]
    if forecast[0, 0] < cfg.night_radiation:
        u_prev[0] = rng.uniform(0, cfg.du_max_arr[0])
    return HorizonContext(0, measure(x), forecast, u_prev, x)


def _enumerate(ctx, cfg, levels=4):
    """Best objective over a grid of ``levels`` values per input and step inside box and rate band."""
    lb, ub = plan_bounds(ctx, 2, cfg)
    du = cfg.du_max_arr
    rollout = OraclePredictor().bind(ctx, 2)
    terms = PenaltyTerms(cfg, ctx.d1, 2, ctx.u_prev)

    def grid(j, prev):
        return [np.linspace(max(lb[j, i], prev[i] - du[i]), min(ub[j, i], prev[i] + du[i]), levels)
                for i in range(3)]

    best = math.inf
    for u0 in itertools.product(*grid(0, ctx.u_prev)):
        for u1 in itertools.product(*grid(1, u0)):
            best = min(best, rollout.value(np.array([u0, u1]), terms))
    return best


@slow
def test_criterion_09_small_instance_optimality(verdict):
    cfg = MpcConfig(horizon=2)
    t0 = time.perf_counter()
    hits = 0
    for seed in range(100):
        ctx = _small_instance(seed, cfg)
        best = _enumerate(ctx, cfg)
        plan = solve_horizon(ctx, OraclePredictor(), cfg)
        hits += plan.objective <= best + 0.01 * abs(best)
    dt = time.perf_counter() - t0
    verdict(9, "small-instance optimality", hits >= 95 and dt < 120.0,
            f"{hits}/100 instances within 1% of enumeration in {dt:.1f} s")


def _handcrafted_log():
    rows = 11
    k = np.arange(rows, dtype=float)
    D = np.column_stack([np.where(k % 4 < 2, 0.0, 200.0 + 10 * k), np.full(rows, 7.2e-4),
                         5.0 + k, np.full(rows, 6e-3)])
    U = np.column_stack([0.1 * (k % 3), 0.5 * k / 10, 15.0 * (k % 5)])
    U[-1] = 0.0
    X = np.zeros((rows, 4))
    Y = np.column_stack([40.0 + 0.7 * k, np.full(rows, 900.0), [14, 9, 9.5, 16, 12, 11, 8, 15, 14.5, 10, 20],
                         [80, 86, 84, 90, 85, 85.5, 70, 99, 60, 88, 84]])
    return EpisodeLog(D, U, X, Y)


def test_criterion_10_metric_oracles(verdict):
    log = _handcrafted_log()
    want_epi = 1.8 + 16.0 * log.Y[-1, 0] / 1000.0
    for k in range(10):
        want_epi -= 6.35e-9 * log.U[k, 2] * 900.0 + 0.42 * log.U[k, 0] * 1e-6 * 900.0
    # records 1..10 classified by their own radiation
    night = [log.D[k, 0] < 10 for k in range(1, 11)]
    day_short, night_short, wet = [], [], []
    for k, is_night in zip(range(1, 11), night):
        need = 10.0 if is_night else 15.0
        if log.Y[k, 2] < need:
            (night_short if is_night else day_short).append(need - log.Y[k, 2])
        if log.Y[k, 3] > 85.0:
            wet.append(log.Y[k, 3] - 85.0)
    t, h = thermal_violations(log), humidity_violations(log)
    errs = [
        abs(epi(log) - want_epi),
        abs(t.rate_pct - 10.0 * (len(day_short) + len(night_short))),
        abs(t.day_mag_c - sum(day_short) / len(day_short)),
        abs(t.night_mag_c - sum(night_short) / len(night_short)),
        abs(h.rate_pct - 10.0 * len(wet)),
        abs(h.mean_mag_pct - sum(wet) / len(wet)),
    ]
    idle = _handcrafted_log()
    idle.U[:] = 0.0
    idle.Y[:, 0] = 0.0
    ok = max(errs) <= 1e-12 and epi(idle) == 1.8
    verdict(10, "metric oracles", ok, f"max deviation {max(errs):.1e}; idle EPI {epi(idle)!r}")


@slow
def test_criterion_11_economic_sanity(verdict, closed_loop):
    zero_log, zero = closed_loop["ZERO"]
    gru_log, gru = closed_loop["GRU24"]
    daily = gru_log.Y[::96, 0]
    monotone = bool(np.all(np.diff(daily) >= 0.0))
    ok = gru.epi >= zero.epi and gru.dry_matter > zero.dry_matter and monotone
    verdict(11, "economic sanity", ok,
            f"EPI GRU24 {gru.epi:.4f} vs zero {zero.epi:.4f}; dry matter {gru.dry_matter:.2f} vs "
            f"{zero.dry_matter:.2f} g/m2; daily dry matter non-decreasing: {monotone}")


def _smoke_pipeline(out):
    for cmd in ("generate-data", "train", "evaluate"):
        assert cli_main([cmd, "--smoke", "--seed", "0", "--out", str(out)]) == 0


@slow
def test_criterion_12_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    _smoke_pipeline(a)
    _smoke_pipeline(b)
    dt = time.perf_counter() - t0
    files = ["report.csv"] + sorted(p.relative_to(a).as_posix() for p in (a / "models").glob("*.seqnet"))
    differ = [f for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = not differ and len(files) > 1 and dt < 300.0
    verdict(12, "determinism", ok,
            f"{len(files) - len(differ)}/{len(files)} artifacts byte-identical across two runs in {dt:.0f} s")
