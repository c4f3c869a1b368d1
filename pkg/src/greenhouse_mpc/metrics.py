"""Economic and constraint-violation metrics over episode logs."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import NIGHT_RADIATION
from .episode import EpisodeLog

REPORT_COLUMNS = (
    "label", "temp_viol_pct", "day_temp_mag_c", "night_temp_mag_c", "hum_viol_pct",
    "hum_mean_pct", "epi_hf_m2", "dry_matter_g_m2", "proc_time_s",
)
HUMIDITY_LIMIT = 85.0
NIGHT_TEMP_MIN = 10.0
DAY_TEMP_MIN = 15.0


@dataclass(frozen=True)
class PriceBook:
    """Prices in Hf: CO2 per kg, heat per J, fixed revenue per m2 and crop per kg dry matter."""

    c_co2: float = 42e-2
    c_q: float = 6.35e-9
    c_pri1: float = 1.8
    c_pri2: float = 16.0

    def __post_init__(self):
        for name in ("c_co2", "c_q", "c_pri1", "c_pri2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class ControlStats:
    """Per-step solver timings plus the economic summary of a closed-loop run."""

    solve_times: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    epi: float | None = None
    dry_matter: float | None = None

    @property
    def total_time(self) -> float:
        return float(sum(self.solve_times))

    def summarize(self, log: EpisodeLog, prices: PriceBook | None = None) -> "ControlStats":
        self.epi = epi(log, prices)
        self.dry_matter = float(log.Y[-1, 0])
        return self


def epi(log: EpisodeLog, prices: PriceBook | None = None) -> float:
    """Crop revenue at the final record minus heating and CO2 costs over all control steps."""
    prices = prices or PriceBook()
    if len(log) < 1:
        raise ValueError("cannot score an empty episode")
    U = log.U[:log.steps]
    heat = prices.c_q * U[:, 2] * log.h
    co2 = prices.c_co2 * U[:, 0] * 1e-6 * log.h
    revenue = prices.c_pri1 + prices.c_pri2 * log.Y[-1, 0] * 1e-3
    return float(revenue - np.sum(heat + co2))


@dataclass(frozen=True)
class ThermalViolations:
    n_steps: int
    count: int
    rate_pct: float
    day_mag_c: float
    night_mag_c: float


@dataclass(frozen=True)
class HumidityViolations:
    n_steps: int
    count: int
    rate_pct: float
    mean_mag_pct: float


@dataclass(frozen=True)
class ViolationReport:
    thermal: ThermalViolations
    humidity: HumidityViolations


def _mean(v: np.ndarray) -> float:
    return float(np.mean(v)) if len(v) else 0.0


def thermal_violations(log: EpisodeLog, threshold: float = NIGHT_RADIATION) -> ThermalViolations:
    """Temperature shortfalls below 10 C at night and 15 C by day over records ``1..N``.

    Each record's temperature is classified by the radiation of the same record.
    """
    y3 = log.Y[1:, 2]
    night = log.D[1:, 0] < threshold
    night_mag = np.where(night & (y3 < NIGHT_TEMP_MIN), NIGHT_TEMP_MIN - y3, 0.0)
    day_mag = np.where(~night & (y3 < DAY_TEMP_MIN), DAY_TEMP_MIN - y3, 0.0)
    n = log.steps
    count = int(np.count_nonzero(night_mag > 0) + np.count_nonzero(day_mag > 0))
    return ThermalViolations(n, count, count / n * 100.0 if n else 0.0,
                             _mean(day_mag[day_mag > 0]), _mean(night_mag[night_mag > 0]))


def humidity_violations(log: EpisodeLog) -> HumidityViolations:
    """Relative humidity above 85 % over records ``1..N``; the magnitude is the mean excess."""
    excess = log.Y[1:, 3] - HUMIDITY_LIMIT
    bad = excess[excess > 0]
    n = log.steps
    return HumidityViolations(n, len(bad), len(bad) / n * 100.0 if n else 0.0, _mean(bad))


def violation_report(log: EpisodeLog, threshold: float = NIGHT_RADIATION) -> ViolationReport:
    return ViolationReport(thermal_violations(log, threshold), humidity_violations(log))


@dataclass(frozen=True)
class ReportRow:
    label: str
    temp_viol_pct: float
    day_temp_mag_c: float
    night_temp_mag_c: float
    hum_viol_pct: float
    hum_mean_pct: float
    epi_hf_m2: float
    dry_matter_g_m2: float
    proc_time_s: float


def report(runs: Iterable[tuple[str, EpisodeLog, ControlStats | None]],
           prices: PriceBook | None = None) -> list[ReportRow]:
    rows = []
    for label, log, stats in runs:
        v = violation_report(log)
        rows.append(ReportRow(
            label=label,
            temp_viol_pct=v.thermal.rate_pct,
            day_temp_mag_c=v.thermal.day_mag_c,
            night_temp_mag_c=v.thermal.night_mag_c,
            hum_viol_pct=v.humidity.rate_pct,
            hum_mean_pct=v.humidity.mean_mag_pct,
            epi_hf_m2=epi(log, prices),
            dry_matter_g_m2=float(log.Y[-1, 0]),
            proc_time_s=stats.total_time if stats is not None else 0.0,
        ))
    if not rows:
        raise ValueError("a report needs at least one run")
    return rows


def write_report_csv(rows: Sequence[ReportRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r.label] + [f"{getattr(r, c):.6f}" for c in REPORT_COLUMNS[1:]])


def load_report_csv(path) -> list[ReportRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report header {header}")
        return [ReportRow(r[0], *(float(v) for v in r[1:])) for r in reader]
