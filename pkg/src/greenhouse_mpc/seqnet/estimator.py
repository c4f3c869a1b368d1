"""scikit-learn style wrappers so the surrogate composes with pipelines and grid tools."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..episode import EpisodeLog
from .cells import GATES
from .data import DEGENERATE_EPS, fit_scaler, make_windows
from .network import NetworkWeights, predict
from .training import TrainConfig, evaluate, train


class UnitRangeScaler(TransformerMixin, BaseEstimator):
    """Column-wise min/max scaling to [0, 1] without clipping unseen values."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        lo, hi = X.min(axis=0), X.max(axis=0)
        hi = np.where(hi - lo <= 0, lo + DEGENERATE_EPS, hi)
        self.data_min_, self.data_max_ = lo, hi
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=np.float64)
        return (X - self.data_min_) / (self.data_max_ - self.data_min_)

    def inverse_transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=np.float64)
        return X * (self.data_max_ - self.data_min_) + self.data_min_


class RecurrentSurrogate(RegressorMixin, BaseEstimator):
    """One-step-ahead greenhouse output predictor (bidirectional LSTM or GRU).

    ``fit`` takes either a list of :class:`EpisodeLog` (the scaler is then fitted
    on them and windows are built internally) or pre-normalized windows
    ``X`` of shape ``(n, window, 11)`` with targets ``y`` of shape ``(n, 4)``.
    ``predict`` always works on normalized windows.
    """

    def __init__(self, cell="gru", window=24, batch_size=8, epochs=15, learning_rate=3e-5,
                 step_size=5, gamma=0.5, dropout=0.2, hidden_size=16, head_hidden=16, random_state=0):
        self.cell = cell
        self.window = window
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.step_size = step_size
        self.gamma = gamma
        self.dropout = dropout
        self.hidden_size = hidden_size
        self.head_hidden = head_hidden
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(window=self.window, batch_size=self.batch_size, epochs=self.epochs,
                           learning_rate=self.learning_rate, step_size=self.step_size, gamma=self.gamma,
                           dropout=self.dropout, hidden=self.hidden_size, head_hidden=self.head_hidden,
                           seed=self.random_state)

    def _windows(self, X, y=None):
        if y is None:
            episodes = list(X)
            if not episodes or not all(isinstance(e, EpisodeLog) for e in episodes):
                raise TypeError("without y, X must be a non-empty sequence of EpisodeLog")
            X, y, _ = make_windows(episodes, self.window, self.scaler_)
            return X, y
        X = check_array(X, dtype=np.float64, allow_nd=True)
        y = check_array(y, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"windows must be 3-D (n, window, features), got {X.shape}")
        return X, y

    def fit(self, X, y=None):
        if self.cell not in GATES:
            raise ValueError(f"cell must be one of {sorted(GATES)}, got {self.cell!r}")
        self.scaler_ = fit_scaler(list(X)) if y is None else None
        Xw, yw = self._windows(X, y)
        result = train(self.cell, Xw, yw, self._config())
        self.weights_: NetworkWeights = result.weights
        self.weights_.scaler = self.scaler_
        self.loss_history_ = result.loss_history
        self.epoch_seconds_ = result.epoch_seconds
        self.n_features_in_ = Xw.shape[2]
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=np.float64, allow_nd=True)
        return predict(X, self.weights_)

    def evaluate(self, X, y=None) -> tuple[float, float]:
        """(MSE, RMSE) in normalized units on episodes or on windows."""
        check_is_fitted(self, "weights_")
        Xw, yw = self._windows(X, y)
        return evaluate(self.weights_, Xw, yw)
