"""CSV, JSON and SVG writers for curves, profiles and run manifests."""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .family import FamilyParams
from .odecore import ToleranceSpec

GAMMA_COLUMNS = ("idx", "a", "H", "T", "tan_a", "tan_H", "tan_T", "res_f1", "res_theta")
PROFILE_COLUMNS = ("t", "f1", "f2", "theta", "f", "g", "h")


@dataclass
class RunManifest:
    command: str
    params: dict
    tolerances: dict
    seed: dict = field(default_factory=dict)
    tool_version: str = ""
    wall_time: float = 0.0
    argv: list = field(default_factory=list)
    python: str = field(default_factory=platform.python_version)
    started: float = field(default_factory=time.time)

    @classmethod
    def start(cls, command: str, params: FamilyParams | None, tol: ToleranceSpec, argv=()):
        from . import __version__
        return cls(command, params.as_dict() if params is not None else {}, tol.as_dict(),
                   tool_version=__version__, argv=list(argv))

    def finish(self) -> "RunManifest":
        self.wall_time = time.time() - self.started
        return self

    def as_dict(self) -> dict:
        return asdict(self)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict, manifest: RunManifest | None = None) -> Path:
    path = Path(path)
    body = dict(payload)
    if manifest is not None:
        body["manifest"] = manifest.as_dict()
    path.write_text(json.dumps(_jsonable(body), indent=2) + "\n", encoding="utf-8")
    return path


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def gamma_rows(curve):
    for i, (p, v) in enumerate(zip(curve.points, curve.tangents)):
        yield (i, p.a, p.H, p.T, v[0], v[1], v[2], p.res_f1, p.res_theta)


def write_gamma_csv(path, curve) -> Path:
    return _write_csv(path, GAMMA_COLUMNS, gamma_rows(curve))


def write_profile_csv(path, profile) -> Path:
    return _write_csv(path, PROFILE_COLUMNS, profile.samples)


def read_csv(path) -> tuple[list, np.ndarray]:
    with Path(path).open(encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader]
    return header, np.array(rows).reshape(-1, len(header))


# ---------------------------------------------------------------------------
# SVG

def _path(points, sx, sy, closed=False) -> str:
    parts = [f"{'M' if i == 0 else 'L'}{sx(x):.3f},{sy(y):.3f}" for i, (x, y) in enumerate(points)]
    return " ".join(parts) + (" Z" if closed else "")


def _document(width, height, body, title, manifest) -> str:
    meta = ""
    if manifest is not None:
        meta = f"<metadata>{escape(json.dumps(_jsonable(manifest.as_dict())))}</metadata>\n"
    return (
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f"<title>{escape(title)}</title>\n{meta}"
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n'
        f"{body}</svg>\n"
    )


def profile_svg(profile, manifest: RunManifest | None = None, size: int = 480) -> str:
    """Unit circle, the f2-axis and the closed profile curve in the (f1, f2) plane."""
    pad = 20
    scale = (size - 2 * pad) / 2.2

    def sx(x):
        return size / 2 + scale * x

    def sy(y):
        return size / 2 - scale * y

    r = scale
    body = [
        f'<circle cx="{sx(0):.3f}" cy="{sy(0):.3f}" r="{r:.3f}" fill="none" stroke="#888" stroke-width="1"/>',
        f'<line x1="{sx(0):.3f}" y1="{sy(-1.1):.3f}" x2="{sx(0):.3f}" y2="{sy(1.1):.3f}" stroke="#888" stroke-dasharray="4 3"/>',
        f'<line x1="{sx(-1.1):.3f}" y1="{sy(0):.3f}" x2="{sx(1.1):.3f}" y2="{sy(0):.3f}" stroke="#ccc"/>',
        f'<path d="{_path(profile.xy, sx, sy, closed=True)}" fill="none" stroke="#1f4e9a" stroke-width="1.5"/>',
        f'<text x="{pad}" y="{pad}" font-family="sans-serif" font-size="12">'
        f"{escape(profile.params.label)} a={profile.point.a:.6g} H={profile.point.H:.6g} T={profile.point.T:.6g}</text>",
    ]
    return _document(size, size, "\n".join(body) + "\n", f"profile curve {profile.params.label}", manifest)


def _ticks(lo, hi, count=5):
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def projection_svg(x, y, xlabel: str, ylabel: str, title: str,
                   manifest: RunManifest | None = None, width: int = 560, height: int = 420) -> str:
    """Polyline plot of y against x on labeled rectangular axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    left, right, top, bottom = 70, 20, 30, 50
    x_lo, x_hi = float(np.min(x)), float(np.max(x))
    y_lo, y_hi = float(np.min(y)), float(np.max(y))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * (width - left - right)

    def sy(v):
        return height - bottom - (v - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    body = [
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
    ]
    for v in _ticks(x_lo, x_hi):
        body.append(f'<text x="{sx(v):.2f}" y="{height - bottom + 16}" font-size="10" '
                    f'text-anchor="middle" font-family="sans-serif">{v:.4g}</text>')
    for v in _ticks(y_lo, y_hi):
        body.append(f'<text x="{left - 6}" y="{sy(v) + 3:.2f}" font-size="10" '
                    f'text-anchor="end" font-family="sans-serif">{v:.4g}</text>')
    body.append(f'<text x="{(left + width - right) / 2:.1f}" y="{height - 12}" font-size="12" '
                f'text-anchor="middle" font-family="sans-serif">{escape(xlabel)}</text>')
    body.append(f'<text x="16" y="{(top + height - bottom) / 2:.1f}" font-size="12" text-anchor="middle" '
                f'font-family="sans-serif" transform="rotate(-90 16 {(top + height - bottom) / 2:.1f})">'
                f"{escape(ylabel)}</text>")
    body.append(f'<text x="{left}" y="18" font-size="12" font-family="sans-serif">{escape(title)}</text>')
    body.append(f'<path d="{_path(zip(x, y), sx, sy)}" fill="none" stroke="#b03020" stroke-width="1.2"/>')
    return _document(width, height, "\n".join(body) + "\n", title, manifest)


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
