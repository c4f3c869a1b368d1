"""Dependency-free SVG 1.1 line charts for episode logs."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..episode import EpisodeLog


@dataclass(frozen=True)
class Channel:
    name: str
    label: str
    unit: str
    source: str
    index: int


CHANNELS = {
    "y1": Channel("y1", "Dry matter", "g/m2", "Y", 0),
    "y2": Channel("y2", "Indoor CO2", "ppm", "Y", 1),
    "y3": Channel("y3", "Indoor temperature", "C", "Y", 2),
    "y4": Channel("y4", "Relative humidity", "%", "Y", 3),
    "u1": Channel("u1", "CO2 injection", "mg/m2/s", "U", 0),
    "u2": Channel("u2", "Ventilation", "mm/s", "U", 1),
    "u3": Channel("u3", "Heating", "W/m2", "U", 2),
    "d1": Channel("d1", "Solar radiation", "W/m2", "D", 0),
    "d2": Channel("d2", "Outdoor CO2", "kg/m3", "D", 1),
    "d3": Channel("d3", "Outdoor temperature", "C", "D", 2),
    "d4": Channel("d4", "Outdoor humidity", "kg/m3", "D", 3),
}

DEFAULT_BOUNDS = {"y2": (None, 1000.0), "y4": (50.0, 85.0)}
DEFAULT_CHANNELS = ("y1", "y2", "y3", "y4", "u1", "u2", "u3", "d1", "d3")

_W, _PANEL_H, _LEFT, _RIGHT, _TOP, _GAP = 720, 130, 80, 20, 30, 40


def _series(log: EpisodeLog, ch: Channel) -> np.ndarray:
    arr = getattr(log, ch.source)[:, ch.index]
    # the last input row is a placeholder with no following interval
    return arr[:-1] if ch.source == "U" and len(arr) > 1 else arr


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _temp_band(log: EpisodeLog) -> list[tuple[float, float]]:
    night = log.D[:, 0] < 10.0
    return [(10.0, 15.0) if n else (15.0, 20.0) for n in night]


def emit_svg(log: EpisodeLog, channels: Sequence[str] = DEFAULT_CHANNELS, bounds: dict | None = None,
             path=None, title: str = "") -> str:
    """Stacked line charts, one panel per channel, with dashed constraint lines.

    ``bounds`` maps a channel name to ``(low, high)`` (either may be None); the
    indoor temperature panel always shows the day/night band.  Returns the SVG
    text and writes it to ``path`` when given.
    """
    if not channels:
        raise ValueError("at least one channel is required")
    unknown = [c for c in channels if c not in CHANNELS]
    if unknown:
        raise ValueError(f"unknown channel(s): {', '.join(unknown)}")
    bounds = dict(DEFAULT_BOUNDS if bounds is None else bounds)
    height = _TOP + len(channels) * (_PANEL_H + _GAP) + 10
    plot_w = _W - _LEFT - _RIGHT
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" height="{height}" '
        f'viewBox="0 0 {_W} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{_W}" height="{height}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    hours = log.t / 3600.0
    for i, name in enumerate(channels):
        ch = CHANNELS[name]
        y = _series(log, ch)
        t = hours[:len(y)]
        top = _TOP + i * (_PANEL_H + _GAP)
        limits = [v for v in bounds.get(name, (None, None)) if v is not None]
        ref = list(limits)
        band = _temp_band(log)[:len(y)] if name == "y3" else None
        if band:
            ref += [b for pair in band for b in pair]
        lo_v = float(min(np.min(y), *ref)) if ref else float(np.min(y))
        hi_v = float(max(np.max(y), *ref)) if ref else float(np.max(y))
        if hi_v - lo_v <= 0:
            pad = abs(hi_v) * 0.05 or 1.0
            lo_v, hi_v = lo_v - pad, hi_v + pad
        t_max = float(t[-1]) if len(t) > 1 and t[-1] > 0 else 1.0

        def sx(v):
            return _LEFT + plot_w * float(v) / t_max

        def sy(v):
            return top + _PANEL_H - _PANEL_H * (float(v) - lo_v) / (hi_v - lo_v)

        out.append(f'<g id="panel-{name}">')
        out.append(f'<rect x="{_LEFT}" y="{top}" width="{plot_w}" height="{_PANEL_H}" fill="none" stroke="#888"/>')
        out.append(f'<text x="{_LEFT}" y="{top - 5}">{escape(ch.label)} [{escape(ch.unit)}]</text>')
        out.append(f'<text x="{_LEFT - 5}" y="{top + 10}" text-anchor="end">{_fmt(hi_v)}</text>')
        out.append(f'<text x="{_LEFT - 5}" y="{top + _PANEL_H}" text-anchor="end">{_fmt(lo_v)}</text>')
        out.append(f'<text x="{_LEFT + plot_w}" y="{top + _PANEL_H + 14}" text-anchor="end">'
                   f'time [h] (0 to {_fmt(t_max)})</text>')
        for v in limits:
            out.append(f'<line x1="{_LEFT}" y1="{sy(v):.2f}" x2="{_LEFT + plot_w}" y2="{sy(v):.2f}" '
                       'stroke="#c00" stroke-dasharray="6,4"/>')
        if band:
            for k in (0, 1):
                pts = " ".join(f"{sx(tt):.2f},{sy(b[k]):.2f}" for tt, b in zip(t, band))
                out.append(f'<polyline points="{pts}" fill="none" stroke="#c00" stroke-dasharray="6,4"/>')
        if len(y) == 1:
            out.append(f'<circle cx="{sx(0):.2f}" cy="{sy(y[0]):.2f}" r="3" fill="#1f77b4"/>')
        else:
            pts = " ".join(f"{sx(tt):.2f},{sy(v):.2f}" for tt, v in zip(t, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.2"/>')
        out.append("</g>")
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
