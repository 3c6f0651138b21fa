"""Artifact emission: RFC-4180 CSV tables, self-contained SVG line plots,
and the run manifest.

Everything written here is deterministic for a fixed (config, seed): no
timestamps, insertion-ordered rows, and shortest round-trip float
formatting.
"""

from __future__ import annotations

import csv
import hashlib
import math

import numpy as np


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, np.ndarray):
        return " ".join(repr(float(x)) for x in v.ravel())
    return str(v)


def write_csv(path, header, rows, statement=None):
    """RFC-4180 table; an optional leading row states what is checked."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if statement is not None:
            w.writerow(["checks", statement])
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, config_path, seed, extra=None):
    import numpy
    import scipy

    from .. import __version__

    lines = [
        f"config_sha256 {sha256_file(config_path)}",
        f"seed {seed}",
        f"stablelab {__version__}",
        f"numpy {numpy.__version__}",
        f"scipy {scipy.__version__}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k} {v}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# minimal deterministic SVG plotting
# ---------------------------------------------------------------------------

_COLORS = ["#1f6fb2", "#c23f2e", "#3c8a3f", "#8658a5", "#b07f24", "#3a3a3a"]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / n))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if span / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * span:
        out.append(round(t, 12))
        t += step
    return out


def svg_line_plot(path, series, title="", xlabel="", ylabel="",
                  logx=False, logy=False, width=640, height=420):
    """Write a plot of (label, xs, ys) series as one standalone SVG file."""
    ml, mr, mt, mb = 70, 20, 36, 50
    pw, ph = width - ml - mr, height - mt - mb

    def tx(vals, log):
        v = np.asarray(vals, dtype=float)
        if log:
            v = np.where(v > 0, v, np.nan)
            return np.log10(v)
        return v

    all_x = np.concatenate([tx(s[1], logx) for s in series])
    all_y = np.concatenate([tx(s[2], logy) for s in series])
    all_x = all_x[np.isfinite(all_x)]
    all_y = all_y[np.isfinite(all_y)]
    if all_x.size == 0 or all_y.size == 0:
        all_x, all_y = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    padx, pady = 0.03 * (x1 - x0), 0.06 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width/2:.1f}" y="20" text-anchor="middle" '
           f'font-family="sans-serif" font-size="14">{title}</text>']
    # axes box
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="#444" stroke-width="1"/>')
    for t in _ticks(x0, x1):
        lbl = f"1e{t:.3g}" if logx else f"{t:.6g}"
        out.append(f'<line x1="{px(t):.1f}" y1="{mt+ph}" x2="{px(t):.1f}" '
                   f'y2="{mt+ph+5}" stroke="#444"/>')
        out.append(f'<text x="{px(t):.1f}" y="{mt+ph+18}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{lbl}</text>')
    for t in _ticks(y0, y1):
        lbl = f"1e{t:.3g}" if logy else f"{t:.6g}"
        out.append(f'<line x1="{ml-5}" y1="{py(t):.1f}" x2="{ml}" '
                   f'y2="{py(t):.1f}" stroke="#444"/>')
        out.append(f'<text x="{ml-8}" y="{py(t)+3:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{lbl}</text>')
    out.append(f'<text x="{ml+pw/2:.1f}" y="{height-12}" '
               f'text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{mt+ph/2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {mt+ph/2:.1f})">{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(series):
        xv, yv = tx(xs, logx), tx(ys, logy)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}"
                       for a, b in zip(xv, yv)
                       if np.isfinite(a) and np.isfinite(b))
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        out.append(f'<text x="{ml+pw-6}" y="{mt+16+14*i}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11" '
                   f'fill="{color}">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
