"""Standalone SVG line plots of energy traces, with an optional power-law overlay."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .decay import DecayFit, EnergyTrace


class PlotError(ValueError):
    pass


MARGIN = 60.0


def _axis(values, log: bool):
    v = np.log10(values) if log else np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        pad = 0.5 if lo == 0 else 0.5 * abs(lo)
        lo, hi = lo - pad, hi + pad
    return lo, hi


def _map(values, lo, hi, log, start, length, flip):
    v = np.log10(values) if log else np.asarray(values, dtype=float)
    frac = (v - lo) / (hi - lo)
    if flip:
        frac = 1 - frac
    return start + frac * length


def _points(xs, ys) -> str:
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))


def emit_plot(trace: EnergyTrace, fit: DecayFit | None = None, *, log_log: bool = False,
              width: int = 1000, height: int = 600, title: str | None = None) -> str:
    """SVG document with the trace polyline and, given ``fit``, its envelope.

    On log-log axes only samples with ``t > 0`` and ``E > 0`` are drawn.
    """
    t, e = np.asarray(trace.times, float), np.asarray(trace.energies, float)
    if log_log:
        keep = (t > 0) & (e > 0)
        t, e = t[keep], e[keep]
    if len(t) == 0:
        raise PlotError("nothing to plot")
    fit_t = fit_e = None
    if fit is not None:
        lo_w, hi_w = fit.window
        fit_t = np.geomspace(lo_w, hi_w, 64) if lo_w > 0 else np.linspace(lo_w, hi_w, 64)
        fit_e = fit.envelope(fit_t)
    all_t = t if fit_t is None else np.concatenate([t, fit_t])
    all_e = e if fit_e is None else np.concatenate([e, fit_e])
    xlo, xhi = _axis(all_t, log_log)
    ylo, yhi = _axis(all_e, log_log)
    pw, ph = width - 2 * MARGIN, height - 2 * MARGIN
    px = _map(t, xlo, xhi, log_log, MARGIN, pw, False)
    py = _map(e, ylo, yhi, log_log, MARGIN, ph, True)

    label = "log10 " if log_log else ""
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2}" y="{MARGIN / 2}" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle">{label}t '
               f'[{xlo:.4g}, {xhi:.4g}]</text>')
    out.append(f'<text x="15" y="{height / 2}" transform="rotate(-90 15 {height / 2})" '
               f'text-anchor="middle">{label}energy [{ylo:.4g}, {yhi:.4g}]</text>')
    out.append(f'<polyline class="trace" fill="none" stroke="#1f4e9c" stroke-width="1.5" '
               f'points="{_points(px, py)}"/>')
    if fit is not None:
        fx = _map(fit_t, xlo, xhi, log_log, MARGIN, pw, False)
        fy = _map(fit_e, ylo, yhi, log_log, MARGIN, ph, True)
        out.append(f'<polyline class="fit" fill="none" stroke="#c0392b" stroke-dasharray="6 4" '
                   f'points="{_points(fx, fy)}"/>')
        out.append(f'<text x="{width - MARGIN}" y="{MARGIN - 8}" text-anchor="end">'
                   f'C={fit.envelope_C:.4g}, delta={fit.delta:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def polyline_points(svg: str, cls: str = "trace"):
    """Parse the points of the polyline with the given class (test helper)."""
    marker = f'class="{cls}"'
    start = svg.find(marker)
    if start < 0:
        return None
    p0 = svg.find('points="', start) + len('points="')
    p1 = svg.find('"', p0)
    pairs = [tuple(map(float, item.split(","))) for item in svg[p0:p1].split()]
    return np.array(pairs)


def max_chord_deviation(points) -> float:
    """Largest distance of a polyline vertex from the chord joining its ends."""
    a, b = points[0], points[-1]
    d = b - a
    n = math.hypot(*d)
    if n == 0:
        return float(np.max(np.linalg.norm(points - a, axis=1)))
    return float(np.max(np.abs(d[0] * (points[:, 1] - a[1]) - d[1] * (points[:, 0] - a[0])) / n))
