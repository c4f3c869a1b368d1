"""Experiment stages: data generation, training grid, closed-loop evaluation, report.

Output layout under the run directory::

    data/episode_XX.csv         oracle-MPC training episodes
    data/eval_weather.csv       held-out scenario weather
    models/<cell>_w<W>_b<B>.seqnet
    models/train_metrics.csv    per grid cell test MSE / RMSE (deterministic)
    models/train_timings.csv    per grid cell wall-clock seconds per epoch
    eval/<LABEL>.csv, eval/<LABEL>.svg
    eval/timings.csv            per run solver wall time
    report.csv
    manifest.json
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..dynamics import U_MAX, simulate_episode
from ..episode import EpisodeLog
from ..metrics import ControlStats, report, write_report_csv
from ..mpc import OraclePredictor, SurrogatePredictor, receding_horizon_control
from ..seqnet import checkpoint
from ..seqnet.data import fit_scaler, make_windows
from ..seqnet.training import TrainConfig, evaluate, train
from ..weather import DisturbanceSeries, load_weather_csv, resample, split_train_test, synth_weather, write_weather_csv
from .config import ExperimentConfig
from .manifest import RunManifest
from .svg import emit_svg

logger = logging.getLogger(__name__)

STEPS_PER_DAY = 96
LOOKAHEAD_DAYS = 1
TRAIN_COLUMNS = ("cell", "window", "batch_size", "test_mse", "test_rmse", "final_train_loss", "selected")


class HarnessError(RuntimeError):
    """Failure with a machine-readable category for the CLI."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# --------------------------------------------------------------------------- scenarios

def episode_weather(cfg: ExperimentConfig, i: int, n: int) -> DisturbanceSeries:
    """Weather of training episode ``i`` of ``n`` plus one day of forecast lookahead.

    Synthetic episodes shift the season by 30 days per episode and spread the
    mean outdoor temperature over +-4 C around the profile's value.
    """
    s = cfg.scenario
    days = int(s["episode_days"]) + LOOKAHEAD_DAYS
    if s["weather_csv"]:
        series = _recorded(cfg)
        span = days * STEPS_PER_DAY + 1
        stride = int(s["episode_days"]) * STEPS_PER_DAY
        start = i * stride
        if start + span > len(series):
            raise HarnessError("input", f"weather file too short for {n} episodes of {s['episode_days']} days")
        return series.slice(start, start + span)
    base = cfg.profile()
    offset = float(np.linspace(-4.0, 4.0, n)[i]) if n > 1 else 0.0
    prof = replace(base, seed=cfg.seed * 1000 + i, temp_mean=base.temp_mean + offset,
                   day_of_year=(base.day_of_year + 30 * i - 1) % 365 + 1)
    return synth_weather(prof, days)


def eval_weather(cfg: ExperimentConfig) -> DisturbanceSeries:
    s = cfg.scenario
    days = int(s["eval_days"]) + LOOKAHEAD_DAYS
    if s["weather_csv"]:
        series = _recorded(cfg)
        span = days * STEPS_PER_DAY + 1
        if span > len(series):
            raise HarnessError("input", "weather file too short for the evaluation scenario")
        return series.slice(len(series) - span, len(series))
    return synth_weather(cfg.eval_profile(), days)


def _recorded(cfg: ExperimentConfig) -> DisturbanceSeries:
    try:
        return resample(load_weather_csv(cfg.scenario["weather_csv"]))
    except (OSError, ValueError) as exc:
        raise HarnessError("input", str(exc)) from None


def _x0(cfg: ExperimentConfig) -> np.ndarray:
    return np.asarray(cfg.scenario["x0"], dtype=np.float64)


# --------------------------------------------------------------------------- stages

def generate_data(cfg: ExperimentConfig, out: Path, manifest: RunManifest | None = None) -> list[Path]:
    """Closed-loop oracle-MPC episodes for the training corpus."""
    data = Path(out) / "data"
    data.mkdir(parents=True, exist_ok=True)
    n = int(cfg.scenario["train_episodes"])
    steps = int(cfg.scenario["episode_days"]) * STEPS_PER_DAY
    mpc = cfg.datagen_mpc()
    explore = float(cfg.raw["data_generation"]["exploration"])
    paths = []
    for i in range(n):
        weather = episode_weather(cfg, i, n)
        meta = {"seed": cfg.seed, "scenario": f"train-{i:02d}", "controller": f"oracle-mpc{mpc.horizon}"}
        try:
            log, _ = receding_horizon_control(OraclePredictor(), weather, _x0(cfg), steps, mpc,
                                              metadata=meta, exploration=explore, seed=cfg.seed * 1000 + i)
            log.validate()
        except (RuntimeError, ValueError) as exc:
            raise HarnessError("simulation", f"episode {i}: {exc}") from exc
        path = data / f"episode_{i:02d}.csv"
        log.to_csv(path)
        paths.append(path)
        logger.info("episode %d/%d: %d steps, final dry matter %.2f g/m2", i + 1, n, steps, log.Y[-1, 0])
    ew = data / "eval_weather.csv"
    write_weather_csv(eval_weather(cfg), ew)
    paths.append(ew)
    if manifest:
        manifest.add(*paths)
    return paths


def load_episodes(out: Path) -> list[EpisodeLog]:
    files = sorted((Path(out) / "data").glob("episode_*.csv"))
    if not files:
        raise HarnessError("missing-data", f"no episodes under {Path(out) / 'data'}; run generate-data first")
    return [EpisodeLog.from_csv(f) for f in files]


def checkpoint_name(cell: str, window: int, batch: int) -> str:
    return f"{cell}_w{window}_b{batch}.seqnet"


def train_grid(cfg: ExperimentConfig, out: Path, manifest: RunManifest | None = None) -> list[dict]:
    """Train every (cell, window, batch) combination and score it on the held-out episodes."""
    out = Path(out)
    episodes = load_episodes(out)
    train_eps, test_eps = split_train_test(episodes, float(cfg.training["split_ratio"]))
    scaler = fit_scaler(train_eps)
    models = out / "models"
    models.mkdir(parents=True, exist_ok=True)
    t = cfg.training
    rows, timings, paths = [], [], []
    for cell in t["cells"]:
        for window in t["windows"]:
            Xtr, Ytr, _ = make_windows(train_eps, int(window), scaler)
            Xte, Yte, _ = make_windows(test_eps, int(window), scaler)
            if len(Xtr) == 0 or len(Xte) == 0:
                raise HarnessError("input", f"episodes too short for window {window}")
            for batch in t["batch_sizes"]:
                tc = TrainConfig(window=int(window), batch_size=int(batch), epochs=int(t["epochs"]),
                                 learning_rate=float(t["learning_rate"]), step_size=int(t["step_size"]),
                                 gamma=float(t["gamma"]), dropout=float(t["dropout"]), seed=cfg.seed)
                try:
                    res = train(cell, Xtr, Ytr, tc)
                except FloatingPointError as exc:
                    raise HarnessError("training", f"{cell} w={window} b={batch}: {exc}") from exc
                res.weights.scaler = scaler
                mse, rmse = evaluate(res.weights, Xte, Yte)
                path = models / checkpoint_name(cell, window, batch)
                checkpoint.save(res.weights, path)
                paths.append(path)
                rows.append({"cell": cell, "window": int(window), "batch_size": int(batch), "test_mse": mse,
                             "test_rmse": rmse, "final_train_loss": res.loss_history[-1], "selected": 0})
                timings.append((cell, int(window), int(batch), float(np.mean(res.epoch_seconds))))
                logger.info("%s w=%s b=%s: test MSE %.5f RMSE %.4f", cell, window, batch, mse, rmse)
    for cell in t["cells"]:
        mine = [r for r in rows if r["cell"] == cell]
        min(mine, key=lambda r: (r["test_mse"], r["window"], r["batch_size"]))["selected"] = 1
    metrics_path = models / "train_metrics.csv"
    with metrics_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAIN_COLUMNS)
        for r in rows:
            w.writerow([r["cell"], r["window"], r["batch_size"], repr(r["test_mse"]), repr(r["test_rmse"]),
                        repr(r["final_train_loss"]), r["selected"]])
    timing_path = models / "train_timings.csv"
    with timing_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cell", "window", "batch_size", "seconds_per_epoch"))
        w.writerows(timings)
    if manifest:
        manifest.add(*paths, metrics_path, timing_path)
    return rows


def read_train_metrics(out: Path) -> list[dict]:
    path = Path(out) / "models" / "train_metrics.csv"
    if not path.is_file():
        raise HarnessError("missing-data", f"{path} not found; run train first")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["window"], r["batch_size"], r["selected"] = int(r["window"]), int(r["batch_size"]), int(r["selected"])
        r["test_mse"], r["test_rmse"] = float(r["test_mse"]), float(r["test_rmse"])
    return rows


def load_surrogate(out: Path, cell: str) -> SurrogatePredictor:
    """Predictor from the selected (lowest test MSE) checkpoint of ``cell``."""
    chosen = [r for r in read_train_metrics(out) if r["cell"] == cell and r["selected"]]
    if not chosen:
        raise HarnessError("missing-data", f"no trained {cell} model; run train with '{cell}' in training.cells")
    r = chosen[0]
    path = Path(out) / "models" / checkpoint_name(cell, r["window"], r["batch_size"])
    if not path.is_file():
        raise HarnessError("missing-data", f"checkpoint {path} missing")
    return SurrogatePredictor(checkpoint.load(path), r["window"])


def _eval_weather_from_disk(cfg: ExperimentConfig, out: Path) -> DisturbanceSeries:
    path = Path(out) / "data" / "eval_weather.csv"
    return load_weather_csv(path) if path.is_file() else eval_weather(cfg)


def run_policy(cfg: ExperimentConfig, weather, policy: str, *, predictor=None, horizon: int = 24,
               constant=None, label: str = "") -> tuple[EpisodeLog, ControlStats]:
    steps = int(cfg.scenario["eval_days"]) * STEPS_PER_DAY
    meta = {"seed": cfg.seed, "scenario": "eval", "controller": label or policy}
    if policy in ("zero", "constant"):
        u = np.zeros(3) if policy == "zero" else np.asarray(constant, dtype=np.float64)
        if u.shape != (3,) or np.any(u < 0) or np.any(u > U_MAX):
            raise HarnessError("config", f"constant input {constant} outside [0, {U_MAX.tolist()}]")
        log = simulate_episode(_x0(cfg), lambda k, x, y, d: u, weather, steps, metadata=meta)
        return log, ControlStats().summarize(log)
    if policy == "oracle-mpc":
        predictor = OraclePredictor()
    elif policy != "surrogate-mpc" or predictor is None:
        raise HarnessError("config", f"unknown policy '{policy}'")
    try:
        return receding_horizon_control(predictor, weather, _x0(cfg), steps, cfg.eval_mpc(horizon), metadata=meta)
    except (RuntimeError, ValueError) as exc:
        raise HarnessError("simulation", f"{label or policy}: {exc}") from exc


def evaluate_runs(cfg: ExperimentConfig, out: Path, manifest: RunManifest | None = None) -> list[str]:
    """Surrogate MPC per (cell, horizon) and the baselines on the held-out scenario."""
    out = Path(out)
    ev = out / "eval"
    ev.mkdir(parents=True, exist_ok=True)
    weather = _eval_weather_from_disk(cfg, out)
    e = cfg.evaluation
    jobs = []
    for b in e["baselines"]:
        if b == "zero":
            jobs.append(("ZERO", "zero", None, 0))
        else:
            h = max(int(v) for v in e["horizons"])
            jobs.append((f"MPC{h}", "oracle-mpc", None, h))
    for cell in e["cells"]:
        pred = load_surrogate(out, cell)
        for h in e["horizons"]:
            jobs.append((f"{cell.upper()}{int(h)}", "surrogate-mpc", pred, int(h)))
    labels, paths, timings = [], [], []
    for label, policy, pred, h in jobs:
        log, stats = run_policy(cfg, weather, policy, predictor=pred, horizon=h or 1, label=label)
        csv_path, svg_path = ev / f"{label}.csv", ev / f"{label}.svg"
        log.to_csv(csv_path)
        emit_svg(log, path=svg_path, title=f"{label}: closed loop on the held-out scenario")
        paths += [csv_path, svg_path]
        labels.append(label)
        n = max(len(stats.solve_times), 1)
        timings.append((label, stats.total_time, stats.total_time / n))
        logger.info("%s: EPI %.4f, dry matter %.2f g/m2, solve time %.1f s", label, stats.epi,
                    stats.dry_matter, stats.total_time)
    timing_path = ev / "timings.csv"
    with timing_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("label", "total_solve_s", "mean_step_s"))
        w.writerows([(lbl, repr(tot), repr(mean)) for lbl, tot, mean in timings])
    paths.append(timing_path)
    if manifest:
        manifest.add(*paths)
    build_report(cfg, out, manifest, labels)
    return labels


def read_timings(out: Path) -> dict[str, float]:
    path = Path(out) / "eval" / "timings.csv"
    if not path.is_file():
        return {}
    with path.open(newline="", encoding="utf-8") as fh:
        return {r["label"]: float(r["total_solve_s"]) for r in csv.DictReader(fh)}


def build_report(cfg: ExperimentConfig, out: Path, manifest: RunManifest | None = None,
                 labels: list[str] | None = None) -> Path:
    """Assemble report.csv from the evaluation logs on disk."""
    out = Path(out)
    ev = out / "eval"
    if labels is None:
        timings = read_timings(out)
        labels = list(timings) or sorted(p.stem for p in ev.glob("*.csv") if p.stem != "timings")
    if not labels:
        raise HarnessError("missing-data", f"no evaluation runs under {ev}; run evaluate first")
    timings = read_timings(out)
    wall = bool(cfg.raw["report"]["wall_clock"])
    runs = []
    for label in labels:
        path = ev / f"{label}.csv"
        if not path.is_file():
            raise HarnessError("missing-data", f"evaluation log {path} missing")
        stats = ControlStats(solve_times=[timings.get(label, 0.0) if wall else 0.0])
        runs.append((label, EpisodeLog.from_csv(path), stats))
    rows = report(runs)
    path = out / "report.csv"
    write_report_csv(rows, path)
    if manifest:
        manifest.add(path)
    return path


def simulate(cfg: ExperimentConfig, out: Path, policy: str, *, cell: str = "gru", horizon: int = 24,
             constant=None, manifest: RunManifest | None = None) -> Path:
    out = Path(out)
    sim = out / "simulate"
    sim.mkdir(parents=True, exist_ok=True)
    weather = _eval_weather_from_disk(cfg, out)
    pred = load_surrogate(out, cell) if policy == "surrogate-mpc" else None
    label = {"surrogate-mpc": f"{cell.upper()}{horizon}", "oracle-mpc": f"MPC{horizon}"}.get(policy, policy.upper())
    log, _ = run_policy(cfg, weather, policy, predictor=pred, horizon=horizon, constant=constant, label=label)
    path = sim / f"{label}.csv"
    log.to_csv(path)
    emit_svg(log, path=sim / f"{label}.svg", title=label)
    if manifest:
        manifest.add(path, sim / f"{label}.svg")
    return path


def finite_or_raise(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise HarnessError("numerics", f"{what} is not finite")
    return value
