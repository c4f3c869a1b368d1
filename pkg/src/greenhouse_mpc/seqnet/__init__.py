"""Recurrent one-step surrogates (bidirectional LSTM/GRU) trained with BPTT."""
from .cells import GRU, LSTM, gru_cell_forward, lstm_cell_forward
from .data import Scaler, denormalize, fit_scaler, make_windows, normalize
from .estimator import RecurrentSurrogate, UnitRangeScaler
from .network import NetworkWeights, backward, forward, init_weights, predict
from .training import AdamState, TrainConfig, adam_step, evaluate, mse_loss, steplr, train

__all__ = [
    "GRU", "LSTM", "gru_cell_forward", "lstm_cell_forward",
    "Scaler", "denormalize", "fit_scaler", "make_windows", "normalize",
    "RecurrentSurrogate", "UnitRangeScaler",
    "NetworkWeights", "backward", "forward", "init_weights", "predict",
    "AdamState", "TrainConfig", "adam_step", "evaluate", "mse_loss", "steplr", "train",
]
