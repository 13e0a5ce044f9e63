"""Atomic CSV/JSON writers and plot-ready figure data (CSV + gnuplot scripts)."""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .ode import Outcome, classify_grid, sweep_options, vector_field
from .threshold import K_SADDLE, X_INTERCEPT, eval_G, eval_S, first_integral_residual


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, Outcome):
        return v.value
    return str(v)


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a sibling temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    return atomic_write(path, csv_text(header, rows))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, Outcome):
        return v.value
    return v


def write_json(path, obj):
    return atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# --- figure geometry ---------------------------------------------------------

def _in_frame(x, y, x_range, y_range):
    return (x >= x_range[0]) & (x <= x_range[1]) & (y >= y_range[0]) & (y <= y_range[1])


def _z_grid(x_range, y_range, z_min, num):
    # the curves leave any finite frame once z = y - x exceeds its diagonal extent
    z_max = (y_range[1] - x_range[0]) * 1.01
    return np.geomspace(z_min, max(z_max, z_min * 1.01), num)


def separatrix_polyline(x_range, y_range, num=801):
    """Points of ``G = 0`` in the frame, from the x-intercept upward.

    With ``z = y - x`` the curve is ``x + y = -S(z)``, ``z >= 4/e``.
    """
    z = _z_grid(x_range, y_range, -X_INTERCEPT, num)
    z = np.unique(np.append(z, 4.0))  # include the saddle exactly
    v = -np.asarray(eval_S(z))
    x, y = 0.5 * (v - z), 0.5 * (v + z)
    x[0], y[0] = X_INTERCEPT, 0.0
    keep = _in_frame(x, y, x_range, y_range)
    return np.column_stack([x[keep], y[keep]])


def level_contour(x_range, y_range, num=801):
    """Both branches of the first-integral level set through the saddle.

    Branch ``stable`` is ``x + y = -S(z)``; branch ``unstable`` is ``x + y = S(z)``.
    """
    z = np.unique(np.append(_z_grid(x_range, y_range, 1e-3, num), 4.0))
    s = np.asarray(eval_S(z))
    out = []
    for name, v in (("stable", -s), ("unstable", s)):
        x, y = 0.5 * (v - z), 0.5 * (v + z)
        keep = _in_frame(x, y, x_range, y_range)
        out.extend((name, a, b) for a, b in zip(x[keep], y[keep]))
    return out


def seliger_segment(x_range, y_range, k0=1.0):
    """Endpoints of ``m1 + m2 = -2 k0`` clipped to the frame (empty if it misses)."""
    c = -2.0 * k0
    cand = [(x_range[0], c - x_range[0]), (x_range[1], c - x_range[1]),
            (c - y_range[0], y_range[0]), (c - y_range[1], y_range[1])]
    pts = sorted({(float(x), float(y)) for x, y in cand
                  if x_range[0] <= x <= x_range[1] and y_range[0] <= y <= y_range[1]})
    return [pts[0], pts[-1]] if len(pts) >= 2 else []


def vector_arrows(x_range, y_range, count):
    xs = np.linspace(*x_range, count)
    ys = np.linspace(*y_range, count)
    X, Y = np.meshgrid(xs, ys)
    F, H = vector_field(X, Y)
    speed = np.hypot(F, H)
    scale = 0.4 * min(xs[1] - xs[0], ys[1] - ys[0])
    with np.errstate(invalid="ignore", divide="ignore"):
        dx = np.where(speed > 0, F / speed * scale, 0.0)
        dy = np.where(speed > 0, H / speed * scale, 0.0)
    return [row for row in zip(X.ravel(), Y.ravel(), dx.ravel(), dy.ravel(), speed.ravel())]


def cell_centers(rng, n):
    h = (rng[1] - rng[0]) / n
    return [rng[0] + 0.5 * h, rng[1] - 0.5 * h]


_GP_HEAD = """set datafile separator ','
set key outside right
set xlabel 'm1'
set ylabel 'm2'
set xrange [{x0}:{x1}]
set yrange [{y0}:{y1}]
"""


def emit_figure_data(figure, out_dir, x_range=(-8.0, 0.0), y_range=(0.0, 8.0), nx=101, ny=101,
                     arrows=21, rtol=1e-8, workers=1, stem=None):
    """Write the CSV files and gnuplot script for ``fig1`` or ``fig2``; return the written paths."""
    out = Path(out_dir)
    stem = stem or figure
    head = _GP_HEAD.format(x0=fmt(x_range[0]), x1=fmt(x_range[1]), y0=fmt(y_range[0]), y1=fmt(y_range[1]))
    sep = separatrix_polyline(x_range, y_range)
    sep_rows = [(x, y, eval_G(x, y)) for x, y in sep]
    paths = [write_csv(out / f"{stem}_separatrix.csv", ("m1", "m2", "G_residual"), sep_rows)]

    if figure == "fig1":
        contour = level_contour(x_range, y_range)
        paths.append(write_csv(out / f"{stem}_vectors.csv", ("m1", "m2", "dm1", "dm2", "speed"),
                               vector_arrows(x_range, y_range, arrows)))
        paths.append(write_csv(out / f"{stem}_contour.csv", ("branch", "m1", "m2", "residual"),
                               [(b, x, y, first_integral_residual(x, y)) for b, x, y in contour]))
        script = head + (
            f"set title 'phase portrait, level {fmt(K_SADDLE)} through the saddle'\n"
            f"plot '{stem}_vectors.csv' skip 1 using 1:2:3:4 with vectors head size 0.08,20 lc rgb 'gray' "
            "title 'field', \\\n"
            f"     '{stem}_contour.csv' skip 1 using 2:3 with points pt 7 ps 0.2 lc rgb 'red' "
            "title 'first integral level', \\\n"
            f"     '{stem}_separatrix.csv' skip 1 using 1:2 with lines lw 2 lc rgb 'blue' title 'G = 0'\n")
    else:
        xr, yr = cell_centers(x_range, nx), cell_centers(y_range, ny)
        cmap = classify_grid(xr, yr, nx, ny, opts=sweep_options(rtol), workers=workers)
        rows = []
        for i, y in enumerate(cmap.ys):
            for j, x in enumerate(cmap.xs):
                o = cmap.outcome[i, j]
                label = "blow-up" if o is Outcome.BLOW_UP else ("failed" if o is Outcome.FAILED else "bounded")
                rows.append((x, y, label, int(label == "blow-up"), o, cmap.g[i, j]))
        paths.append(write_csv(out / f"{stem}_raster.csv", ("m1", "m2", "label", "blowup", "outcome", "G"),
                               rows))
        seg = seliger_segment(x_range, y_range)
        paths.append(write_csv(out / f"{stem}_seliger.csv", ("m1", "m2"), seg))
        script = head + (
            "set title 'breaking region'\n"
            "set palette defined (0 'white', 1 '#9ecae1')\n"
            "unset colorbox\n"
            f"plot '{stem}_raster.csv' skip 1 using 1:2:4 with image notitle, \\\n"
            f"     '{stem}_separatrix.csv' skip 1 using 1:2 with lines lw 2 lc rgb 'blue' title 'G = 0', \\\n"
            f"     '{stem}_seliger.csv' skip 1 using 1:2 with lines lw 2 dt 2 lc rgb 'black' "
            "title 'm1 + m2 = -2'\n")
    paths.append(atomic_write(out / f"{stem}.gp", script))
    return paths
