"""Pseudo-arclength continuation of the solution curve in (a, H, T) space.

Predictor: step along the unit tangent grad F1 x grad Theta. Corrector:
Newton restricted to the plane through the predicted point orthogonal to
the tangent, which passes the fold of H(a) at the minimum of H without
special treatment.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CMCError, NotSpanned, RankDrop, StallError
from .family import FamilyParams
from .odecore import DEFAULT_TOL, ToleranceSpec
from .shooting import Plane, ShootingPoint, find_seed, jacobian, solve

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class StepControl:
    h0: float = 1e-2
    h_min: float = 1e-5
    h_max: float = 5e-2
    grow: float = 1.3
    easy_iters: int = 2
    hard_iters: int = 5


@dataclass(frozen=True)
class StopRules:
    a_min: float = 1e-3
    T_min: float = 5e-3
    H_cap: float = 50.0
    max_points: int = 4000


@dataclass
class SpecialPoints:
    a_H0: float = math.nan
    T_H0: float = math.nan
    a_Hmin: float = math.nan
    H_min: float = math.nan
    T_Hmin: float = math.nan
    a_star_bracket: tuple = (math.nan, math.nan)
    endpoint_a_to_0: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"a_H0": self.a_H0, "T_H0": self.T_H0, "a_Hmin": self.a_Hmin,
                "H_min": self.H_min, "T_Hmin": self.T_Hmin,
                "a_star_bracket": list(self.a_star_bracket),
                "endpoint_a_to_0": dict(self.endpoint_a_to_0)}


@dataclass
class GammaCurve:
    params: FamilyParams
    points: list = field(default_factory=list)
    tangents: list = field(default_factory=list)
    special: SpecialPoints | None = None
    stop_reason: str = ""

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        """Array of shape (N, 3) with columns a, H, T."""
        return np.array([p.x for p in self.points]).reshape(-1, 3)

    @property
    def tangent_array(self) -> np.ndarray:
        return np.array(self.tangents).reshape(-1, 3)

    def reversed(self) -> "GammaCurve":
        return GammaCurve(self.params, self.points[::-1], [-v for v in self.tangents[::-1]],
                          self.special, self.stop_reason)


def tangent(point: ShootingPoint, params: FamilyParams | None = None,
            tol: ToleranceSpec = DEFAULT_TOL) -> np.ndarray:
    """Unit vector along grad F1 x grad Theta at a converged point."""
    jac = point.jac
    if jac is None:
        if params is None:
            raise ValueError("point has no Jacobian and no family was given")
        jac = jacobian(point.a, point.H, point.T, params, tol)
    v = np.cross(jac.grad_F1, jac.grad_Theta)
    norm = float(np.linalg.norm(v))
    if norm < 1e-10:
        raise RankDrop(f"|grad F1 x grad Theta| = {norm:.3g} at {point.x}")
    return v / norm


def _stop_reason(p: ShootingPoint, stop: StopRules) -> str:
    if p.a < stop.a_min:
        return "a_min"
    if p.T < stop.T_min:
        return "T_min"
    if p.H > stop.H_cap:
        return "H_cap"
    return ""


def trace(start: ShootingPoint, params: FamilyParams, direction: int = 1,
          step: StepControl = StepControl(), stop: StopRules = StopRules(),
          tol: ToleranceSpec = DEFAULT_TOL, until=None) -> GammaCurve:
    """Follow the solution curve from a converged ``start``.

    ``direction=+1`` moves toward increasing a at the start point, -1 toward
    decreasing a. ``until`` is an optional predicate on each accepted
    point that ends the trace when it returns True.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if start.jac is None:
        start = solve(start, params, frozen="H", tol=tol)
    v = tangent(start, params)
    if v[0] < 0:
        v = -v
    v = direction * v

    curve = GammaCurve(params, [start], [v])
    p = start
    h = step.h0
    while len(curve.points) < stop.max_points:
        accepted = None
        while accepted is None:
            if h < step.h_min:
                curve.stop_reason = "stall"
                raise StallError(f"continuation step fell below {step.h_min:g} at {p.x}", curve)
            x_pred = p.x + h * v
            try:
                q = solve(ShootingPoint(*x_pred), params, frozen=Plane(v, x_pred), tol=tol,
                          max_iter=max(step.hard_iters, 8))
                if q.iterations > step.hard_iters:
                    raise CMCError("corrector too slow")
                v_new = tangent(q, params)
            except CMCError as exc:
                log.debug("corrector failed at h=%g: %s", h, exc)
                h *= 0.5
                continue
            if np.dot(v_new, v) < 0:
                v_new = -v_new
            # reject steps that jump across the curve rather than along it
            chord = q.x - p.x
            if np.dot(chord, v) <= 0 or np.dot(v_new, v) < 0.9:
                h *= 0.5
                continue
            accepted = q
        curve.points.append(accepted)
        curve.tangents.append(v_new)
        p, v = accepted, v_new
        if accepted.iterations <= step.easy_iters:
            h = min(step.h_max, h * step.grow)
        reason = _stop_reason(p, stop)
        if not reason and until is not None and until(p):
            reason = "until"
        if reason:
            curve.stop_reason = reason
            return curve
    curve.stop_reason = "max_points"
    return curve


def join(minus: GammaCurve, plus: GammaCurve) -> GammaCurve:
    """Concatenate traces in both directions from a shared start point.

    The result is ordered by increasing a at the start, with tangents
    oriented along that ordering.
    """
    back = minus.reversed()
    points = back.points + plus.points[1:]
    tangents = back.tangents + plus.tangents[1:]
    reason = f"{minus.stop_reason}|{plus.stop_reason}"
    return GammaCurve(plus.params, points, tangents, None, reason)


def trace_family(params: FamilyParams, seed: ShootingPoint | None = None,
                 step: StepControl = StepControl(), stop: StopRules = StopRules(),
                 tol: ToleranceSpec = DEFAULT_TOL, minus_until=None, plus_until=None,
                 a_range=(0.05, 0.6)) -> GammaCurve:
    """Trace both branches from the minimal (H = 0) solution of the family.

    A branch whose step size underflows is kept up to the stall; its stop
    reason reads "stall" and a warning is logged.
    """
    if seed is None:
        seed = find_seed(params, 0.0, a_range, tol=tol)
    curves = []
    for direction, until in ((-1, minus_until), (1, plus_until)):
        try:
            curves.append(trace(seed, params, direction, step, stop, tol, until))
        except StallError as exc:
            log.warning("trace %+d of %s stalled: %s", direction, params.label, exc)
            curves.append(exc.partial)
    return join(*curves)


# ---------------------------------------------------------------------------
# special points

def _point_on_chord(lo: ShootingPoint, hi: ShootingPoint, s: float, params, tol) -> ShootingPoint:
    d = hi.x - lo.x
    x = lo.x + s * d
    return solve(ShootingPoint(*x), params, frozen=Plane(d / np.linalg.norm(d), x), tol=tol)


def _locate_h0(curve: GammaCurve, tol: ToleranceSpec) -> ShootingPoint:
    pts = curve.points
    for p in pts:
        if p.H == 0.0:
            return p
    for i in range(len(pts) - 1):
        u, w = pts[i], pts[i + 1]
        if u.H * w.H < 0 and w.H > u.H:
            s = -u.H / (w.H - u.H)
            x = u.x + s * (w.x - u.x)
            return solve(ShootingPoint(x[0], 0.0, x[2]), curve.params, frozen="H", tol=tol)
    raise NotSpanned(f"curve for {curve.params.label} does not cross H = 0 upward")


def _locate_hmin(curve: GammaCurve, tol: ToleranceSpec, dh: float = 1e-8) -> ShootingPoint:
    pts, tans = curve.points, curve.tangents
    idx = None
    for i in range(len(pts) - 1):
        if tans[i][1] < 0 <= tans[i + 1][1]:
            idx = i
            break
    if idx is None:
        raise NotSpanned(f"curve for {curve.params.label} has no interior minimum of H")
    lo, hi = pts[idx], pts[idx + 1]
    cache = {}

    def H_at(s):
        if s not in cache:
            cache[s] = _point_on_chord(lo, hi, s, curve.params, tol)
        return cache[s]

    s0, s3 = 0.0, 1.0
    s1 = s3 - GOLDEN * (s3 - s0)
    s2 = s0 + GOLDEN * (s3 - s0)
    for _ in range(200):
        p1, p2 = H_at(s1), H_at(s2)
        if abs(p1.H - p2.H) < dh and s3 - s0 < 1e-6:
            break
        if p1.H < p2.H:
            s3, s2 = s2, s1
            s1 = s3 - GOLDEN * (s3 - s0)
        else:
            s0, s1 = s1, s2
            s2 = s0 + GOLDEN * (s3 - s0)
    candidates = [H_at(s1), H_at(s2), lo, hi]
    return min(candidates, key=lambda p: p.H)


def _bracket_a_star(curve: GammaCurve, n_fit: int = 10) -> tuple:
    pts = curve.points
    if len(pts) < n_fit + 1:
        raise NotSpanned("too few points toward the collapse end to bracket a*")
    tail = pts[-n_fit:]
    a = np.array([p.a for p in tail])
    T = np.array([p.T for p in tail])
    if not (np.all(np.diff(T) < 0) and np.all(np.diff(a) > 0)):
        raise NotSpanned("tail of the curve is not in the collapse regime (T decreasing, a increasing)")
    # a(T) ~ a* - c1 T - c2 T^2
    coeffs = np.polyfit(T, a, 2)
    a_star = float(coeffs[-1])
    lower = float(a[-1])
    return (lower, max(lower, a_star))


def detect_special(curve: GammaCurve, tol: ToleranceSpec = DEFAULT_TOL,
                   require=("H0", "Hmin", "a_star")) -> SpecialPoints:
    """Locate the H = 0 crossing, the minimum of H and bracket the collapse limit a*.

    ``curve`` must be ordered by increasing a at the minimal point (as
    produced by :func:`trace_family`). Features listed in ``require`` raise
    :class:`NotSpanned` when absent; the others are left as nan.
    """
    sp = SpecialPoints()
    for name in ("H0", "Hmin", "a_star"):
        try:
            if name == "H0":
                p = _locate_h0(curve, tol)
                sp.a_H0, sp.T_H0 = p.a, p.T
            elif name == "Hmin":
                p = _locate_hmin(curve, tol)
                sp.a_Hmin, sp.H_min, sp.T_Hmin = p.a, p.H, p.T
            else:
                sp.a_star_bracket = _bracket_a_star(curve)
        except NotSpanned:
            if name in require:
                raise
    first = curve.points[0]
    sp.endpoint_a_to_0 = {"a": first.a, "H": first.H, "T": first.T}
    curve.special = sp
    return sp
