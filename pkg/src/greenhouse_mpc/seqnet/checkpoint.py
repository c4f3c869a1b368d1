"""Binary checkpoint container.

Layout (all integers unsigned little-endian, all reals little-endian f64)::

    b"SEQNET1"                 magic, 7 bytes
    u8   kind                  0 = LSTM, 1 = GRU
    u32  n_in, hidden, layers, head_hidden, n_out
    u32  n_scaler              0, or 15 (11 inputs + 4 targets)
    f64  scaler min[n_scaler], scaler max[n_scaler]
    u64  n_params
    f64  theta[n_params]       order of NetworkWeights.shapes()
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .cells import GRU, LSTM
from .data import Scaler
from .network import NetworkWeights

MAGIC = b"SEQNET1"
_KINDS = {LSTM: 0, GRU: 1}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}


def dumps(w: NetworkWeights) -> bytes:
    parts = [MAGIC, struct.pack("<B5I", _KINDS[w.kind], w.n_in, w.hidden, w.layers, w.head_hidden, w.n_out)]
    if w.scaler is None:
        parts.append(struct.pack("<I", 0))
    else:
        parts.append(struct.pack("<I", len(w.scaler.min_)))
        parts.append(w.scaler.min_.astype("<f8").tobytes())
        parts.append(w.scaler.max_.astype("<f8").tobytes())
    parts.append(struct.pack("<Q", w.n_params))
    parts.append(w.theta.astype("<f8").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> NetworkWeights:
    if buf[:7] != MAGIC:
        raise ValueError("not a SEQNET1 checkpoint (bad magic)")
    off = 7
    kind, n_in, hidden, layers, head_hidden, n_out = struct.unpack_from("<B5I", buf, off)
    off += struct.calcsize("<B5I")
    if kind not in _KIND_NAMES:
        raise ValueError(f"unknown cell kind code {kind}")
    (n_scaler,) = struct.unpack_from("<I", buf, off)
    off += 4
    scaler = None
    if n_scaler:
        lo = np.frombuffer(buf, "<f8", n_scaler, off).astype(np.float64)
        off += 8 * n_scaler
        hi = np.frombuffer(buf, "<f8", n_scaler, off).astype(np.float64)
        off += 8 * n_scaler
        scaler = Scaler(lo, hi)
    (n_params,) = struct.unpack_from("<Q", buf, off)
    off += 8
    if len(buf) != off + 8 * n_params:
        raise ValueError(f"checkpoint length {len(buf)} does not match {n_params} parameters")
    theta = np.frombuffer(buf, "<f8", n_params, off).astype(np.float64)
    w = NetworkWeights(_KIND_NAMES[kind], n_in, hidden, layers, head_hidden, n_out, theta, scaler)
    return w


def save(w: NetworkWeights, path) -> None:
    Path(path).write_bytes(dumps(w))


def load(path) -> NetworkWeights:
    return loads(Path(path).read_bytes())
