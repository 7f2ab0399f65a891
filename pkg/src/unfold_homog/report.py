"""Artifact emission: CSV tables, JSON reports, SVG plots, run manifests.

Every artifact except the manifest is byte-deterministic for a given
input: floats print through repr/%.17g, JSON keys are sorted, and the
SVG embeds no timestamps or environment details.  Wall-clock data goes
into the manifest only.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV ('.' decimal separator, 17 significant digits)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(header))
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, config_path, options, timings, artifacts,
                   seed=None, threads=None) -> None:
    """Run manifest: the one artifact allowed to vary between reruns."""
    from . import __version__
    from ._kernels import BACKEND

    now = datetime.datetime.now(datetime.timezone.utc)
    body = {
        "config_sha256": sha256_file(config_path) if config_path else None,
        "config_path": str(config_path) if config_path else None,
        "options": _jsonable(options),
        "seed": seed,
        "threads": threads,
        "timings_seconds": _jsonable(timings),
        "artifacts": [str(a) for a in artifacts],
        "versions": {
            "package": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
            "platform": platform.platform(),
            "kernel_backend": BACKEND,
        },
        "written_utc": now.isoformat(),
    }
    write_json(path, body)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 720, 520
_ML, _MR, _MT, _MB = 70, 160, 30, 50


def _ticks(lo, hi):
    """Decade tick positions covering [lo, hi] in log10 units."""
    first = int(np.ceil(lo - 1e-12))
    last = int(np.floor(hi + 1e-12))
    return list(range(first, last + 1))


def svg_loglog(path, xs, series: dict, xlabel="eps", ylabel="error",
               title="") -> None:
    """Log-log polyline plot; nonpositive values are dropped per series."""
    xs = [float(x) for x in xs]
    if not xs or any(x <= 0 for x in xs):
        raise ValueError("log-log plot needs positive x values")
    lx = [np.log10(x) for x in xs]
    ly_all = []
    cleaned = {}
    for name, ys in series.items():
        pts = [(np.log10(x), np.log10(y))
               for x, y in zip(xs, ys) if y is not None and y > 0]
        cleaned[name] = pts
        ly_all.extend(p[1] for p in pts)
    if not ly_all:
        ly_all = [0.0]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly_all), max(ly_all)
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

    def py(v):
        return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">')
    out.append(f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>')
    if title:
        out.append(f'<text x="{_W // 2}" y="20" text-anchor="middle" '
                   f'font-family="monospace" font-size="14">{title}</text>')
    # frame
    out.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
               f'height="{_H - _MT - _MB}" fill="none" stroke="black" '
               'stroke-width="1"/>')
    for t in _ticks(x0, x1):
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{_H - _MB}" x2="{x:.2f}" '
                   f'y2="{_H - _MB + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{_H - _MB + 18}" text-anchor="middle" '
                   f'font-family="monospace" font-size="11">1e{t}</text>')
    for t in _ticks(y0, y1):
        y = py(t)
        out.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" text-anchor="end" '
                   f'font-family="monospace" font-size="11">1e{t}</text>')
    out.append(f'<text x="{(_ML + _W - _MR) // 2}" y="{_H - 12}" '
               'text-anchor="middle" font-family="monospace" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{(_MT + _H - _MB) // 2}" text-anchor="middle" '
               f'font-family="monospace" font-size="12" '
               f'transform="rotate(-90 16 {(_MT + _H - _MB) // 2})">{ylabel}</text>')
    for k, (name, pts) in enumerate(cleaned.items()):
        color = _PALETTE[k % len(_PALETTE)]
        if pts:
            coords = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pts)
            out.append(f'<polyline points="{coords}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
            for a, b in pts:
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" '
                           f'fill="{color}"/>')
        ly = _MT + 16 + 18 * k
        out.append(f'<line x1="{_W - _MR + 10}" y1="{ly - 4}" '
                   f'x2="{_W - _MR + 30}" y2="{ly - 4}" stroke="{color}" '
                   'stroke-width="1.5"/>')
        out.append(f'<text x="{_W - _MR + 35}" y="{ly}" font-family="monospace" '
                   f'font-size="11">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
