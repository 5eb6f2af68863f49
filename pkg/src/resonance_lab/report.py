"""Deterministic CSV and SVG emission in the style of the reference figures:
solid trajectory curves with dashed theoretical reference curves.

SVG output is hand-rolled (polylines and text only) so identical inputs give
byte-identical files, suitable for golden-file tests.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .integrate import TrajectoryRecord

#: polyline point budget per series; longer series are decimated evenly
MAX_POINTS = 1600

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


@dataclass(frozen=True)
class Curve:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False


@dataclass(frozen=True)
class AxesSpec:
    x_label: str = "t"
    y_label: str = ""
    x_scale: str = "linear"  # "linear" | "log"
    title: str = ""
    width: int = 840
    height: int = 520
    config_hash: str = ""


def emit_csv(obj, path) -> None:
    """Write a trajectory record as CSV or a summary dict as JSON text."""
    if isinstance(obj, TrajectoryRecord):
        obj.to_csv(path)
        return
    if isinstance(obj, dict):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    raise TypeError(f"cannot emit {type(obj).__name__}")


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if raw <= step:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * abs(hi):
        ticks.append(round(v, 12))
        v += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    ticks = []
    d = math.ceil(math.log10(lo) - 1e-12)
    while 10.0**d <= hi * (1 + 1e-12):
        if 10.0**d >= lo * (1 - 1e-12):
            ticks.append(10.0**d)
        d += 1
    return ticks or [lo]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _decimate(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(x) <= MAX_POINTS:
        return x, y
    idx = np.linspace(0, len(x) - 1, MAX_POINTS).astype(int)
    return x[idx], y[idx]


def emit_svg(series: list[Curve], references: list[Curve], axes: AxesSpec, path) -> None:
    """Self-contained deterministic SVG line plot.

    Non-finite points are dropped (a count is left in an SVG comment); the
    generating config hash is embedded as metadata.
    """
    if not series:
        raise ValueError("need at least one series")
    curves = list(series) + [
        Curve(label=r.label, x=r.x, y=r.y, dashed=True) for r in references
    ]

    dropped = 0
    clean = []
    for c in curves:
        x = np.asarray(c.x, dtype=float)
        y = np.asarray(c.y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if axes.x_scale == "log":
            ok &= x > 0
        dropped += int(len(x) - np.count_nonzero(ok))
        x, y = _decimate(x[ok], y[ok])
        clean.append(Curve(label=c.label, x=x, y=y, dashed=c.dashed))

    xs = np.concatenate([c.x for c in clean if len(c.x)])
    ys = np.concatenate([c.y for c in clean if len(c.y)])
    if len(xs) == 0:
        raise ValueError("no finite data points to plot")
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    ml, mr, mt, mb = 64, 16, 28, 44
    pw, ph = axes.width - ml - mr, axes.height - mt - mb

    def sx(v):
        if axes.x_scale == "log":
            return ml + pw * (math.log10(v) - math.log10(x_lo)) / (
                math.log10(x_hi) - math.log10(x_lo)
            )
        return ml + pw * (v - x_lo) / (x_hi - x_lo)

    def sy(v):
        return mt + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    lines = []
    lines.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{axes.width}" '
        f'height="{axes.height}" viewBox="0 0 {axes.width} {axes.height}">'
    )
    lines.append(f"<metadata>config-hash:{axes.config_hash}</metadata>")
    if dropped:
        lines.append(f"<!-- dropped {dropped} non-finite points -->")
    lines.append(f'<rect width="{axes.width}" height="{axes.height}" fill="white"/>')
    lines.append(
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="black" stroke-width="1"/>'
    )
    if axes.title:
        lines.append(
            f'<text x="{axes.width // 2}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{axes.title}</text>'
        )

    x_ticks = _log_ticks(x_lo, x_hi) if axes.x_scale == "log" else _nice_ticks(x_lo, x_hi)
    for v in x_ticks:
        px = sx(v)
        lines.append(
            f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" '
            f'y2="{mt + ph + 5}" stroke="black" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{px:.2f}" y="{mt + ph + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>'
        )
    for v in _nice_ticks(y_lo, y_hi):
        py = sy(v)
        lines.append(
            f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" '
            f'stroke="black" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{ml - 8}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>'
        )
    lines.append(
        f'<text x="{ml + pw // 2}" y="{axes.height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{axes.x_label}</text>'
    )
    lines.append(
        f'<text x="16" y="{mt + ph // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {mt + ph // 2})">{axes.y_label}</text>'
    )

    solid_idx = 0
    for c in clean:
        if len(c.x) < 2:
            continue
        pts = " ".join(f"{sx(xx):.2f},{sy(yy):.2f}" for xx, yy in zip(c.x, c.y))
        if c.dashed:
            style = 'stroke="black" stroke-width="1.4" stroke-dasharray="7,5"'
        else:
            color = PALETTE[solid_idx % len(PALETTE)]
            style = f'stroke="{color}" stroke-width="1.2"'
            solid_idx += 1
        lines.append(f'<polyline fill="none" {style} points="{pts}"/>')

    ly = mt + 14
    solid_idx = 0
    for c in clean:
        if c.dashed:
            style = "stroke:black;stroke-dasharray:7,5"
        else:
            style = f"stroke:{PALETTE[solid_idx % len(PALETTE)]}"
            solid_idx += 1
        lines.append(
            f'<line x1="{ml + pw - 150}" y1="{ly - 4}" x2="{ml + pw - 120}" '
            f'y2="{ly - 4}" style="{style};stroke-width:1.4"/>'
        )
        lines.append(
            f'<text x="{ml + pw - 114}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{c.label}</text>'
        )
        ly += 16
    lines.append("</svg>")
    data = "\n".join(lines) + "\n"
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(data)
