"""Shared oracles and fixtures.

The oracles are written out longhand with literal coefficients so they share no
code with the package under test.
"""
from __future__ import annotations

import math

import numpy as np
import pytest


# --------------------------------------------------------------------------- plant oracle

def oracle_phot(x1, x2, x3, d1):
    a = 3.55e-9 * d1
    b = (-5.11e-6 * x3 ** 2 + 2.3e-4 * x3 - 6.29e-4) * (x2 - 5.2e-5)
    if a + b == 0.0:
        return 0.0
    return (1.0 - math.exp(-53.0 * x1)) * a * b / (a + b)


def oracle_resp(x1, x3):
    return x1 * 2.0 ** (0.1 * x3 - 2.5)


def oracle_vent_co2(x2, u2, d2):
    return (u2 / 1000.0 + 7.5e-6) * (x2 - d2)


def oracle_vent_h2o(x4, u2, d4):
    return (u2 / 1000.0 + 7.5e-6) * (x4 - d4)


def oracle_transp(x1, x3, x4):
    sat = 9348.0 / (8314.0 * (x3 + 273.15)) * math.exp(17.4 * x3 / (x3 + 239.0))
    return 0.0036 * (1.0 - math.exp(-53.0 * x1)) * (sat - x4)


def oracle_deriv(x, u, d):
    x1, x2, x3, x4 = x
    u1, u2, u3 = u
    d1, d2, d3, d4 = d
    ph = oracle_phot(x1, x2, x3, d1)
    r = oracle_resp(x1, x3)
    return [
        0.544 * ph - 2.65e-7 * r,
        (-ph + 4.87e-7 * r + u1 * 1e-6 - oracle_vent_co2(x2, u2, d2)) / 4.1,
        (u3 - (1290.0 * u2 / 1000.0 + 6.1) * (x3 - d3) + 0.2 * d1) / 3.0e4,
        (oracle_transp(x1, x3, x4) - oracle_vent_h2o(x4, u2, d4)) / 4.1,
    ]


def oracle_measure(x):
    x1, x2, x3, x4 = x
    return [
        1000.0 * x1,
        1000.0 * 8.314 * (x3 + 273.15) / (101.325 * 0.044) * x2,
        x3,
        100.0 * 8.314 * (x3 + 273.15) / (11.0 * math.exp(17.4 * x3 / (x3 + 239.0))) * x4,
    ]


def random_admissible(rng, n):
    """States, inputs and weather drawn from their physically meaningful ranges."""
    X = np.column_stack([rng.uniform(1e-4, 0.3, n), rng.uniform(3e-4, 3e-3, n),
                         rng.uniform(0.0, 35.0, n), rng.uniform(2e-3, 2e-2, n)])
    U = np.column_stack([rng.uniform(0, 1.2, n), rng.uniform(0, 7.5, n), rng.uniform(0, 150, n)])
    D = np.column_stack([rng.uniform(0, 900, n), rng.uniform(6e-4, 8e-4, n),
                         rng.uniform(-10, 30, n), rng.uniform(1e-3, 1.5e-2, n)])
    return X, U, D


# --------------------------------------------------------------------------- recurrent oracle

def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def oracle_net_forward(X, w):
    """Bidirectional stacked LSTM/GRU plus MLP head in plain numpy (eval mode)."""
    t = w.tensors()
    H = w.hidden
    seq = np.asarray(X, dtype=np.float64)
    B, T, _ = seq.shape
    for layer in range(w.layers):
        outs = []
        for direction in ("fwd", "rev"):
            p = f"l{layer}_{direction}_"
            Wx, Wh, b = t[p + "Wx"], t[p + "Wh"], t[p + "b"]
            h = np.zeros((B, H))
            c = np.zeros((B, H))
            hs = np.zeros((B, T, H))
            steps = range(T) if direction == "fwd" else range(T - 1, -1, -1)
            for s in steps:
                xt = seq[:, s]
                if w.kind == "lstm":
                    g = xt @ Wx + h @ Wh + b
                    i, f, gg, o = (g[:, k * H:(k + 1) * H] for k in range(4))
                    c = _sig(f) * c + _sig(i) * np.tanh(gg)
                    h = _sig(o) * np.tanh(c)
                else:
                    ax = xt @ Wx + b
                    z = _sig(ax[:, :H] + h @ Wh[:, :H])
                    r = _sig(ax[:, H:2 * H] + h @ Wh[:, H:2 * H])
                    n = np.tanh(ax[:, 2 * H:] + (r * h) @ Wh[:, 2 * H:])
                    h = (1.0 - z) * h + z * n
                hs[:, s] = h
            outs.append(hs)
        seq = np.concatenate(outs, axis=2)
    final = seq[:, -1, :]
    a1 = np.maximum(final @ t["W1"] + t["b1"], 0.0)
    return a1 @ t["W2"] + t["b2"]


# --------------------------------------------------------------------------- fixtures

@pytest.fixture(scope="session")
def rng_factory():
    return lambda seed=0: np.random.default_rng(seed)


# --------------------------------------------------------------------------- acceptance summary

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        print(line)
        request.config.stash[_VERDICTS].append((number, line))
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
