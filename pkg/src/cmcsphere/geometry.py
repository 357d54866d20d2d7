"""Profile curves, embeddedness, immersion points and volumes of the hypersurfaces."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError, NonAdmissible
from .family import FamilyParams, clifford_comparison_ls, clifford_volume, sphere_volume
from .odecore import DEFAULT_TOL, ProfileState, ToleranceSpec, integrate
from .shooting import ShootingPoint

COLUMNS = ("t", "f1", "f2", "theta", "f", "g", "h")


@dataclass
class ProfileCurve:
    """Samples of the closed profile curve over one period [0, 2T].

    ``samples`` has the columns of ``COLUMNS``; the first half comes from
    integration, the second half from the reflection symmetry about the
    f2-axis. ``direct`` holds the same grid integrated straight through,
    and ``reflection_deviation`` the largest difference between the two.
    """

    params: FamilyParams
    point: ShootingPoint
    samples: np.ndarray
    dtheta: np.ndarray
    direct: np.ndarray
    reflection_deviation: float

    @property
    def n_half(self) -> int:
        return (self.samples.shape[0] + 1) // 2

    @property
    def first_half(self) -> np.ndarray:
        return self.samples[: self.n_half]

    @property
    def xy(self) -> np.ndarray:
        """Polyline (f1, f2) over the full period."""
        return self.samples[:, 1:3]


@dataclass
class EmbeddingVerdict:
    embedded: bool
    violation: tuple | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.embedded


@dataclass
class VolumeReport:
    vol: float
    clifford: list = field(default_factory=list)
    yau_ok: bool = False
    quadrature_error_estimate: float = math.nan

    def as_dict(self) -> dict:
        return {"vol": self.vol,
                "clifford": [{"l": lp, "volC": v} for lp, v in self.clifford],
                "yau_ok": self.yau_ok,
                "quadrature_error_estimate": self.quadrature_error_estimate}


@dataclass
class YauVerdict:
    ok: bool
    margins: dict
    sphere_volume: float
    above_sphere: bool

    def as_dict(self) -> dict:
        return {"ok": self.ok, "margins": {str(k): v for k, v in self.margins.items()},
                "sphere_volume": self.sphere_volume, "above_sphere": self.above_sphere}


def _derived_columns(t, y):
    f1, f2, th = y[:, 0], y[:, 1], y[:, 2]
    f = np.sqrt(1.0 - f1**2 - f2**2)
    g = f2 * np.cos(th) - f1 * np.sin(th)
    h = np.sqrt(1.0 - g**2)
    return np.column_stack([t, f1, f2, th, f, g, h])


def reconstruct(point: ShootingPoint, params: FamilyParams, n_samples: int = 1025,
                tol: ToleranceSpec = DEFAULT_TOL) -> ProfileCurve:
    """Sample the profile curve of a converged point over [0, 2T].

    ``n_samples`` points cover [0, T]; the full curve has 2 * n_samples - 1.
    """
    if n_samples < 3:
        raise ValueError("need at least 3 samples per half period")
    T = point.T
    t_half = np.linspace(0.0, T, n_samples)
    t_full = np.concatenate([t_half, T + (T - t_half[-2::-1])])
    try:
        tr = integrate(ProfileState.initial(point.a), params, point.H, 2.0 * T,
                       tol=tol, sample_t=t_full)
    except IntegrationError as exc:
        raise NonAdmissible(f"cannot integrate the period of {point.x}: {exc}") from exc

    half = tr.samples[:n_samples]
    mirror = half[-2::-1].copy()
    mirror[:, 0] *= -1.0
    mirror[:, 2] = 2.0 * math.pi - mirror[:, 2]
    y = np.vstack([half, mirror])
    samples = _derived_columns(t_full, y)
    dtheta = np.concatenate([tr.sample_dtheta[:n_samples], tr.sample_dtheta[n_samples - 2::-1]])
    direct = _derived_columns(t_full, tr.samples)
    deviation = float(np.max(np.abs(direct[:, 1:4] - samples[:, 1:4])))

    f1, f2 = samples[:, 1], samples[:, 2]
    if np.any(f2 <= 0.0) or np.any(f1**2 + f2**2 >= 1.0):
        raise NonAdmissible(f"profile curve of {point.x} leaves the admissible domain")
    return ProfileCurve(params, point, samples, dtheta, direct, deviation)


# ---------------------------------------------------------------------------
# embeddedness

def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    return (min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1]))


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test, touching and collinear overlap included."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def first_self_intersection(xy, closed: bool = True):
    """Return the first pair (i, j) of non-adjacent intersecting segments, or None.

    Segment i joins xy[i] and xy[i+1] (wrapping around when ``closed``).
    Candidate pairs come from a uniform grid hash over segment bounding boxes.
    """
    pts = np.asarray(xy, dtype=float)
    if closed and np.allclose(pts[0], pts[-1], rtol=0.0, atol=1e-12):
        pts = pts[:-1]
    m = len(pts)
    n_seg = m if closed else m - 1
    if n_seg < 3:
        return None
    ends = [(pts[i], pts[(i + 1) % m]) for i in range(n_seg)]
    lengths = [float(np.hypot(*(b - a))) for a, b in ends]
    cell = max(2.0 * float(np.median(lengths)), 1e-12)
    origin = pts.min(axis=0)

    grid = defaultdict(list)
    for i, (a, b) in enumerate(ends):
        lo = np.floor((np.minimum(a, b) - origin) / cell).astype(int)
        hi = np.floor((np.maximum(a, b) - origin) / cell).astype(int)
        for cx in range(lo[0], hi[0] + 1):
            for cy in range(lo[1], hi[1] + 1):
                grid[cx, cy].append(i)

    hits = set()
    for members in grid.values():
        for ii, i in enumerate(members):
            for j in members[ii + 1:]:
                i0, j0 = min(i, j), max(i, j)
                gap = j0 - i0
                if gap <= 1 or (closed and gap == n_seg - 1):
                    continue
                if (i0, j0) in hits:
                    continue
                if segments_intersect(*ends[i0], *ends[j0]):
                    hits.add((i0, j0))
    return min(hits) if hits else None


def check_embedded(curve) -> EmbeddingVerdict:
    """Simple-closed-curve test of a profile curve (or a raw closed (N, 2) polyline)."""
    xy = curve.xy if isinstance(curve, ProfileCurve) else np.asarray(curve, dtype=float)
    if isinstance(curve, ProfileCurve) and np.any(xy[:, 1] <= 0.0):
        i = int(np.argmax(xy[:, 1] <= 0.0))
        return EmbeddingVerdict(False, (i,), "f2 <= 0")
    hit = first_self_intersection(xy, closed=True)
    if hit is not None:
        return EmbeddingVerdict(False, hit, "segments intersect")
    return EmbeddingVerdict(True)


# ---------------------------------------------------------------------------
# immersion and volume

def immersion_point(sample, y, z) -> np.ndarray:
    """phi(y, z, t) = (f y, f2 z, f1) for a sample row (t, f1, f2, ...) or a ProfileState."""
    if isinstance(sample, ProfileState):
        f1, f2 = sample.f1, sample.f2
    else:
        f1, f2 = float(sample[1]), float(sample[2])
    f = math.sqrt(1.0 - f1 * f1 - f2 * f2)
    return np.concatenate([f * np.asarray(y, dtype=float), f2 * np.asarray(z, dtype=float), [f1]])


def volume_integrand(samples: np.ndarray, params: FamilyParams) -> np.ndarray:
    """f2^l f^(k-1) h on sample rows with the ``COLUMNS`` layout."""
    f2, f, h = samples[:, 2], samples[:, 4], samples[:, 6]
    return f2**params.l * f ** (params.k - 1) * h


def volume_integrand_unsimplified(samples: np.ndarray, params: FamilyParams) -> np.ndarray:
    """f2^l f^k sqrt(1 + (df/dt)^2), the arc-length element before simplification."""
    f1, f2, th, f = samples[:, 1], samples[:, 2], samples[:, 3], samples[:, 4]
    dfdt = -(f1 * np.cos(th) + f2 * np.sin(th)) / f
    return f2**params.l * f**params.k * np.sqrt(1.0 + dfdt**2)


def romberg(values: np.ndarray, span: float) -> tuple[float, float]:
    """Romberg extrapolation of trapezoid sums on 2^m + 1 equally spaced values.

    Returns (estimate, error estimate) where the error estimate is the
    difference between the last two diagonal entries of the table.
    """
    values = np.asarray(values, dtype=float)
    intervals = len(values) - 1
    m = int(round(math.log2(intervals))) if intervals > 0 else -1
    if m < 1 or 2**m != intervals:
        raise ValueError("Romberg needs 2^m + 1 samples with m >= 1")
    table = []
    for level in range(m + 1):
        stride = 2 ** (m - level)
        sub = values[::stride]
        step = span / (len(sub) - 1)
        row = [step * (sub.sum() - 0.5 * (sub[0] + sub[-1]))]
        for j in range(1, level + 1):
            prev = table[level - 1][j - 1]
            row.append(row[j - 1] + (row[j - 1] - prev) / (4**j - 1))
        table.append(row)
    return table[-1][-1], abs(table[-1][-1] - table[-2][-2])


def volume_integral(curve: ProfileCurve, half: str = "first") -> tuple[float, float]:
    """Integral of the volume density over [0, T] ("first") or [T, 2T] ("second").

    The second half uses the directly integrated samples, not the reflection.
    """
    n = curve.n_half
    rows = curve.samples[:n] if half == "first" else curve.direct[n - 1:]
    return romberg(volume_integrand(rows, curve.params), curve.point.T)


def volume(curve: ProfileCurve) -> VolumeReport:
    """Volume of the hypersurface with profile ``curve`` and its Clifford comparisons."""
    p = curve.params
    integral, err = volume_integral(curve)
    scale = 2.0 * sphere_volume(p.k) * sphere_volume(p.l)
    vol = scale * integral
    cliff = [(lp, clifford_volume(p.n, lp)) for lp in clifford_comparison_ls(p.n)]
    yau_ok = bool(vol > max(v for _, v in cliff))
    return VolumeReport(vol, cliff, yau_ok, scale * err)


def yau_check(params: FamilyParams, report: VolumeReport) -> YauVerdict:
    margins = {lp: report.vol - v for lp, v in report.clifford}
    sigma = sphere_volume(params.n)
    return YauVerdict(all(m > 0 for m in margins.values()), margins, sigma, report.vol > sigma)


def is_tabulated_minimal(params: FamilyParams) -> bool:
    """Whether (n, l) is listed among the minimal examples whose volumes are tabulated (l <= k)."""
    return params.l <= params.k
