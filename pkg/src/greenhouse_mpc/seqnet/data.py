"""Unit-range scaling and sliding-window sample construction."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..episode import EpisodeLog
from .network import N_FEATURES, N_OUTPUTS

logger = logging.getLogger(__name__)

DEGENERATE_EPS = 1e-9
FEATURE_NAMES = ("d1", "d2", "d3", "d4", "u1", "u2", "u3", "y1", "y2", "y3", "y4")
TARGET_NAMES = ("y1_next", "y2_next", "y3_next", "y4_next")


@dataclass
class Scaler:
    """Per-channel min/max for the 11 input features followed by the 4 targets."""

    min_: np.ndarray
    max_: np.ndarray

    def __post_init__(self):
        self.min_ = np.asarray(self.min_, dtype=np.float64)
        self.max_ = np.asarray(self.max_, dtype=np.float64)
        if self.min_.shape != (N_FEATURES + N_OUTPUTS,) or self.max_.shape != self.min_.shape:
            raise ValueError(f"scaler needs {N_FEATURES + N_OUTPUTS} channels")
        if np.any(self.max_ <= self.min_):
            raise ValueError("scaler max must exceed min on every channel")

    @property
    def scale(self) -> np.ndarray:
        return self.max_ - self.min_

    def normalize_inputs(self, x):
        return (np.asarray(x) - self.min_[:N_FEATURES]) / self.scale[:N_FEATURES]

    def normalize_targets(self, y):
        return (np.asarray(y) - self.min_[N_FEATURES:]) / self.scale[N_FEATURES:]

    def denormalize_targets(self, y_hat):
        return np.asarray(y_hat) * self.scale[N_FEATURES:] + self.min_[N_FEATURES:]

    def denormalize_inputs(self, x_hat):
        return np.asarray(x_hat) * self.scale[:N_FEATURES] + self.min_[:N_FEATURES]


def _widen(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = hi - lo <= 0
    hi = hi.copy()
    hi[flat] = lo[flat] + DEGENERATE_EPS
    return lo, hi


def fit_scaler(episodes: Sequence[EpisodeLog]) -> Scaler:
    """Min/max over the training episodes; flat channels are widened by 1e-9."""
    if not episodes:
        raise ValueError("cannot fit a scaler on zero episodes")
    feats = np.vstack([ep.features()[:-1] for ep in episodes if len(ep) > 1] or
                      [ep.features() for ep in episodes])
    targets = np.vstack([ep.Y[1:] for ep in episodes if len(ep) > 1] or [ep.Y for ep in episodes])
    lo = np.concatenate([feats.min(axis=0), targets.min(axis=0)])
    hi = np.concatenate([feats.max(axis=0), targets.max(axis=0)])
    return Scaler(*_widen(lo, hi))


def normalize(x, scaler: Scaler):
    """Scale a 15-channel vector (inputs then targets) to the fitted unit range; no clipping."""
    return (np.asarray(x, dtype=np.float64) - scaler.min_) / scaler.scale


def denormalize(x_hat, scaler: Scaler):
    return np.asarray(x_hat, dtype=np.float64) * scaler.scale + scaler.min_


def make_windows(episodes: Sequence[EpisodeLog], w: int, scaler: Scaler | None = None):
    """Windows of rows ``t-w+1..t`` with target ``y(t+1)``, never crossing episodes.

    Returns ``(X, Y, skipped)`` with ``X`` of shape ``(n, w, 11)`` and ``Y`` of
    shape ``(n, 4)``, normalized when a scaler is given.  Episodes shorter than
    ``w + 1`` records contribute nothing and are counted in ``skipped``.
    """
    if w < 1:
        raise ValueError("window length must be >= 1")
    xs, ys = [], []
    skipped = 0
    for ep in episodes:
        L = len(ep)
        if L < w + 1:
            skipped += 1
            continue
        feats = ep.features()
        if scaler is not None:
            feats = scaler.normalize_inputs(feats)
            targets = scaler.normalize_targets(ep.Y)
        else:
            targets = ep.Y
        idx = np.arange(w - 1, L - 1)
        xs.append(np.stack([feats[t - w + 1:t + 1] for t in idx]))
        ys.append(targets[idx + 1])
    if skipped:
        logger.warning("skipped %d episode(s) shorter than window+1 = %d records", skipped, w + 1)
    if not xs:
        return np.empty((0, w, N_FEATURES)), np.empty((0, N_OUTPUTS)), skipped
    return np.concatenate(xs), np.concatenate(ys), skipped
