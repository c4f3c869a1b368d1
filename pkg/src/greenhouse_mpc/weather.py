"""Weather disturbance series: CSV ingestion, resampling, synthetic generation, splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TypeVar

import numpy as np

from .dynamics import DEFAULT_PARAMS, STEP_SECONDS

WEATHER_COLUMNS = ("timestamp_s", "rad_w_m2", "temp_c", "co2_kg_m3", "hum_kg_m3")
# CSV column -> disturbance index (d1 radiation, d2 CO2, d3 temperature, d4 humidity)
_CSV_TO_D = (0, 2, 1, 3)


@dataclass(frozen=True)
class DisturbanceSeries:
    start: int
    interval: float
    values: np.ndarray  # (n, 4) in disturbance order

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if not self.interval > 0:
            raise ValueError(f"interval must be positive, got {self.interval}")
        if v.ndim != 2 or v.shape[1] != 4:
            raise ValueError(f"values must have shape (n, 4), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("disturbance series contains non-finite values")
        if np.any(v[:, [0, 1, 3]] < 0):
            raise ValueError("radiation, CO2 and humidity must be non-negative")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def timestamps(self) -> np.ndarray:
        return self.start + np.arange(len(self)) * self.interval

    def slice(self, start: int, stop: int) -> "DisturbanceSeries":
        return DisturbanceSeries(int(self.start + start * self.interval), self.interval, self.values[start:stop])


def write_weather_csv(series: DisturbanceSeries, path) -> None:
    if float(series.interval) != int(series.interval):
        raise ValueError("CSV timestamps are integer seconds; interval must be integral")
    lines = [",".join(WEATHER_COLUMNS)]
    for ts, d in zip(series.timestamps.astype(np.int64), series.values):
        lines.append(",".join([str(int(ts))] + [repr(float(d[i])) for i in _CSV_TO_D]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_weather_csv(path) -> DisturbanceSeries:
    """Parse a weather CSV, validating header, numbers, units and spacing."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        text = fh.read().split("\n")
    if not text or not text[0]:
        raise ValueError(f"{path}: empty file, header required")
    header = tuple(c.strip() for c in text[0].split(","))
    missing = [c for c in WEATHER_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    idx = [header.index(c) for c in WEATHER_COLUMNS]
    stamps, rows = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            ts = int(parts[idx[0]])
            rad, temp, co2, hum = (float(parts[i]) for i in idx[1:])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed row {line!r}") from None
        if not all(math.isfinite(v) for v in (rad, temp, co2, hum)):
            raise ValueError(f"{path}:{lineno}: non-finite value")
        if rad < 0 or co2 < 0 or hum < 0:
            raise ValueError(f"{path}:{lineno}: radiation, CO2 and humidity must be non-negative")
        if stamps and ts <= stamps[-1]:
            raise ValueError(f"{path}:{lineno}: timestamp {ts} does not increase (previous {stamps[-1]})")
        if len(stamps) >= 2 and ts - stamps[-1] != stamps[1] - stamps[0]:
            raise ValueError(f"{path}:{lineno}: spacing {ts - stamps[-1]} s differs from {stamps[1] - stamps[0]} s")
        stamps.append(ts)
        rows.append((rad, co2, temp, hum))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    interval = stamps[1] - stamps[0] if len(stamps) > 1 else int(STEP_SECONDS)
    return DisturbanceSeries(stamps[0], interval, np.array(rows))


def resample(series: DisturbanceSeries, target_interval: float = STEP_SECONDS) -> DisturbanceSeries:
    """Linear interpolation onto a ``target_interval`` grid starting at the first sample."""
    if len(series) < 2:
        raise ValueError("resampling needs at least 2 samples")
    if series.interval == target_interval:
        return series
    t = series.timestamps - series.start
    n = int(math.floor(t[-1] / target_interval + 1e-9)) + 1
    grid = np.arange(n) * target_interval
    out = np.column_stack([np.interp(grid, t, series.values[:, j]) for j in range(4)])
    out[:, 0] = np.maximum(out[:, 0], 0.0)
    return DisturbanceSeries(series.start, target_interval, out)


def saturation_density(temp_c):
    """Water-vapour density [kg m-3] at 100 % RH, inverse of the model's RH output map."""
    p = DEFAULT_PARAMS
    temp_c = np.asarray(temp_c, dtype=np.float64)
    return 11.0 * np.exp(p.p48 * temp_c / (temp_c + p.p49)) / (1e2 * p.p24 * (temp_c + p.p25)) * 100.0


@dataclass(frozen=True)
class WeatherProfile:
    """Parameters of the synthetic weather generator.

    The season is fixed by ``day_of_year`` for the whole generated span, so a
    noise-free profile repeats exactly from one day to the next.
    """

    day_of_year: int = 120
    latitude_deg: float = 52.3
    rad_peak: float = 850.0
    temp_mean: float = 12.0
    temp_diurnal_amp: float = 5.0
    temp_peak_hour: float = 15.0
    rh_mean: float = 78.0
    rh_diurnal_amp: float = 12.0
    co2_mean: float = 7.2e-4
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("rad_peak", "temp_diurnal_amp", "rh_diurnal_amp", "co2_mean", "noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def _ar1(rng: np.random.Generator, n: int, rho: float) -> np.ndarray:
    e = rng.standard_normal(n)
    out = np.empty(n)
    acc = 0.0
    scale = math.sqrt(1 - rho * rho)
    for i in range(n):
        acc = rho * acc + scale * e[i]
        out[i] = acc
    return out


def synth_weather(profile: WeatherProfile, days: int, interval: float = STEP_SECONDS) -> DisturbanceSeries:
    """Diurnal synthetic weather: clear-sky radiation scaled by cloud cover, lagged
    temperature, humidity tied to temperature, near-constant outdoor CO2."""
    if days < 1:
        raise ValueError("days must be >= 1")
    n = int(round(days * 86400 / interval)) + 1
    hours = (np.arange(n) * interval / 3600.0) % 24.0
    lat = math.radians(profile.latitude_deg)
    decl = math.radians(23.44) * math.sin(2 * math.pi * (284 + profile.day_of_year) / 365.0)
    hour_angle = np.radians(15.0 * (hours - 12.0))
    sin_elev = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * np.cos(hour_angle)
    clear = profile.rad_peak * np.clip(sin_elev, 0.0, None)

    rng = np.random.default_rng(profile.seed)
    cloud_noise = _ar1(rng, n, 0.97)
    temp_noise = _ar1(rng, n, 0.995)
    rh_noise = _ar1(rng, n, 0.98)
    co2_noise = rng.standard_normal(n)
    s = profile.noise

    cloud = np.clip(1.0 - 0.25 * s * np.abs(cloud_noise), 0.0, 1.0)
    rad = np.clip(clear * cloud, 0.0, profile.rad_peak)
    diurnal = np.cos(2 * math.pi * (hours - profile.temp_peak_hour) / 24.0)
    temp = profile.temp_mean + profile.temp_diurnal_amp * diurnal + 2.0 * s * temp_noise
    rh = np.clip(profile.rh_mean - profile.rh_diurnal_amp * diurnal + 5.0 * s * rh_noise, 30.0, 100.0)
    hum = rh / 100.0 * saturation_density(temp)
    co2 = np.clip(profile.co2_mean * (1.0 + 0.01 * s * co2_noise), 0.0, None)
    return DisturbanceSeries(0, interval, np.column_stack([rad, co2, temp, hum]))


T = TypeVar("T")


def split_train_test(episodes: Sequence[T], ratio: float = 0.8) -> tuple[list[T], list[T]]:
    """Split whole episodes, in order, into leading train and trailing test parts."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(episodes)
    if n < 2:
        raise ValueError("need at least 2 episodes to split")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    return list(episodes[:n_train]), list(episodes[n_train:])
