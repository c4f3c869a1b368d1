"""Time-indexed (d, u, x, y) records shared by simulation, training and metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import DEFAULT_PARAMS, ModelParams, _measure

EPISODE_COLUMNS = (
    "k", "t_s",
    "d1", "d2", "d3", "d4",
    "u1", "u2", "u3",
    "x1", "x2", "x3", "x4",
    "y1", "y2", "y3", "y4",
)
_META_PREFIX = "# meta: "


@dataclass
class EpisodeLog:
    """Episode of ``n`` records at a fixed step ``h``.

    Row ``k`` holds the weather ``D[k]``, the state ``X[k]`` and its measurement
    ``Y[k]``, and the input ``U[k]`` held over ``[k, k+1)``.  The last row has no
    following interval; its input is stored as zeros and never used.
    """

    D: np.ndarray
    U: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    h: float = DEFAULT_PARAMS.h
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        n = len(self.X)
        if n < 1:
            raise ValueError("an episode needs at least one record")
        for name, arr, width in (("D", self.D, 4), ("U", self.U, 3), ("X", self.X, 4), ("Y", self.Y, 4)):
            if arr.shape != (n, width):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(n, width)}")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def steps(self) -> int:
        """Number of control intervals."""
        return len(self) - 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self)) * self.h

    def features(self) -> np.ndarray:
        """``(n, 11)`` network input rows ``[d, u, y]``."""
        return np.hstack([self.D, self.U, self.Y])

    def validate(self, p: ModelParams | None = None, atol: float = 0.0) -> None:
        """Raise ``ValueError`` unless every record satisfies the episode invariants."""
        p = p or DEFAULT_PARAMS
        if not self.h > 0:
            raise ValueError("step size must be positive")
        for name in ("D", "U", "X", "Y"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(self.X[:, [0, 1, 3]] < 0):
            raise ValueError("negative dry weight, CO2 or humidity state")
        if np.any(self.D[:, [0, 1, 3]] < 0):
            raise ValueError("negative radiation, CO2 or humidity disturbance")
        pa = p.as_array()
        y = np.empty(4)
        for k, x in enumerate(self.X):
            _measure(x, pa, y)
            if not np.allclose(self.Y[k], y, rtol=1e-12, atol=atol):
                raise ValueError(f"record {k}: output {self.Y[k]} does not match measure(x) = {y}")

    # ----------------------------------------------------------------------- CSV

    def to_csv(self, path) -> None:
        path = Path(path)
        lines = []
        if self.metadata:
            lines.append(_META_PREFIX + json.dumps(self.metadata, sort_keys=True))
        lines.append(",".join(EPISODE_COLUMNS))
        t = self.t
        for k in range(len(self)):
            vals = [str(k), repr(float(t[k]))]
            vals += [repr(float(v)) for v in (*self.D[k], *self.U[k], *self.X[k], *self.Y[k])]
            lines.append(",".join(vals))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "EpisodeLog":
        path = Path(path)
        metadata = {}
        rows = []
        header_seen = False
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if line.startswith(_META_PREFIX) and not header_seen:
                    metadata = json.loads(line[len(_META_PREFIX):])
                    continue
                if not header_seen:
                    cols = tuple(line.split(","))
                    if cols != EPISODE_COLUMNS:
                        raise ValueError(f"{path}:{lineno}: bad episode header {line!r}")
                    header_seen = True
                    continue
                parts = line.split(",")
                if len(parts) != len(EPISODE_COLUMNS):
                    raise ValueError(f"{path}:{lineno}: expected {len(EPISODE_COLUMNS)} fields, got {len(parts)}")
                try:
                    k = int(parts[0])
                    rows.append([float(v) for v in parts[1:]])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed number in {line!r}") from None
                if k != len(rows) - 1:
                    raise ValueError(f"{path}:{lineno}: step index {k} out of sequence")
        if not rows:
            raise ValueError(f"{path}: no records")
        a = np.array(rows)
        t = a[:, 0]
        h = float(t[1] - t[0]) if len(t) > 1 else DEFAULT_PARAMS.h
        if len(t) > 1 and not np.allclose(np.diff(t), h, rtol=0, atol=1e-9):
            raise ValueError(f"{path}: record times are not evenly spaced")
        return cls(D=a[:, 1:5], U=a[:, 5:8], X=a[:, 8:12], Y=a[:, 12:16], h=h, metadata=metadata)
