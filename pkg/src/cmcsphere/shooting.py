"""Half-period shooting problem.

A point (a, H, T) is a solution when the trajectory started at
(f1, f2, theta) = (0, a, 0) reaches f1 = 0 with theta = pi at time T.
Two equations in three unknowns: Newton acts on a two-dimensional slice
selected by freezing one coordinate or by a plane constraint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IntegrationError, NoBracket, NoConvergence, NonAdmissible, SingularJacobian
from .family import FamilyParams
from .odecore import (
    DEFAULT_TOL, WRT_A, WRT_H, ProfileState, ToleranceSpec, integrate, integrate_to_pi, vector_field,
)

log = logging.getLogger(__name__)

MAX_HALVINGS = 8
COND_LIMIT = 1e12
COORDS = ("a", "H", "T")


@dataclass(frozen=True)
class ShootingJacobian:
    grad_F1: np.ndarray
    grad_Theta: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack([self.grad_F1, self.grad_Theta])


@dataclass(frozen=True)
class ShootingPoint:
    a: float
    H: float
    T: float
    res_f1: float = math.nan
    res_theta: float = math.nan
    jac: ShootingJacobian | None = field(default=None, compare=False)
    iterations: int = field(default=0, compare=False)

    @property
    def x(self) -> np.ndarray:
        return np.array([self.a, self.H, self.T])

    @property
    def residual(self) -> float:
        return max(abs(self.res_f1), abs(self.res_theta))

    def as_dict(self) -> dict:
        out = {"a": self.a, "H": self.H, "T": self.T,
               "res_f1": self.res_f1, "res_theta": self.res_theta}
        if self.jac is not None:
            out["grad_F1"] = self.jac.grad_F1.tolist()
            out["grad_Theta"] = self.jac.grad_Theta.tolist()
        return out


@dataclass(frozen=True)
class Plane:
    """Constraint normal . (a, H, T) = normal . point."""

    normal: np.ndarray
    point: np.ndarray

    @property
    def offset(self) -> float:
        return float(np.dot(self.normal, self.point))


def _check_args(a: float, T: float) -> None:
    if not 0.0 < a < 1.0:
        raise NonAdmissible(f"a = {a!r} outside (0, 1)")
    if not T > 0.0:
        raise NonAdmissible(f"T = {T!r} must be positive")


def evaluate(a: float, H: float, T: float, params: FamilyParams,
             tol: ToleranceSpec = DEFAULT_TOL) -> ShootingPoint:
    _check_args(a, T)
    try:
        tr = integrate(ProfileState.initial(a), params, H, T, tol=tol)
    except IntegrationError as exc:
        raise NonAdmissible(f"(a, H, T) = ({a:.8g}, {H:.8g}, {T:.8g}): {exc}") from exc
    return ShootingPoint(a, H, T, float(tr.y[0]), float(tr.y[2] - math.pi))


def _evaluate_full(x, params: FamilyParams, tol: ToleranceSpec) -> ShootingPoint:
    a, H, T = map(float, x)
    _check_args(a, T)
    try:
        tr = integrate(ProfileState.initial(a), params, H, T,
                       sensitivities=(WRT_A, WRT_H), tol=tol)
    except IntegrationError as exc:
        raise NonAdmissible(f"(a, H, T) = ({a:.8g}, {H:.8g}, {T:.8g}): {exc}") from exc
    y = tr.y
    theta_T = float(y[2])
    K_T = vector_field(tr.state, params, H)[2]
    grad_F1 = np.array([y[3], y[6], math.cos(theta_T)])
    grad_Theta = np.array([y[5], y[8], K_T])
    return ShootingPoint(a, H, T, float(y[0]), theta_T - math.pi,
                         ShootingJacobian(grad_F1, grad_Theta))


def jacobian(a: float, H: float, T: float, params: FamilyParams,
             tol: ToleranceSpec = DEFAULT_TOL) -> ShootingJacobian:
    """Gradients of F1 and Theta in (a, H, T) from the variational systems."""
    return _evaluate_full((a, H, T), params, tol).jac


def _constraint(frozen, guess: ShootingPoint):
    """Row c and offset d of the linear constraint c . x = d."""
    if isinstance(frozen, Plane):
        normal = np.asarray(frozen.normal, dtype=float)
        return normal, frozen.offset
    if frozen not in COORDS:
        raise ValueError(f"frozen must be one of {COORDS} or a Plane, got {frozen!r}")
    c = np.zeros(3)
    i = COORDS.index(frozen)
    c[i] = 1.0
    return c, float(guess.x[i])


def _slice_condition(J: np.ndarray, frozen, c: np.ndarray) -> float:
    if isinstance(frozen, Plane):
        return np.linalg.cond(np.vstack([J, c]))
    keep = [i for i in range(3) if COORDS[i] != frozen]
    return np.linalg.cond(J[:, keep])


def solve(guess: ShootingPoint, params: FamilyParams, frozen="H",
          tol: ToleranceSpec = DEFAULT_TOL, newton_tol: float | None = None,
          max_iter: int | None = None) -> ShootingPoint:
    """Damped Newton on (F1, Theta - pi) restricted to a slice of (a, H, T).

    ``frozen`` is "a", "H" or "T" (that coordinate is held at its guess
    value) or a :class:`Plane`. The returned point carries the Jacobian at
    the converged location and the number of Newton updates taken.
    """
    newton_tol = tol.newton_tol if newton_tol is None else newton_tol
    max_iter = tol.max_iter if max_iter is None else max_iter
    c, d = _constraint(frozen, guess)
    cnorm = float(np.linalg.norm(c))

    def merit(p: ShootingPoint) -> float:
        return max(p.residual, abs(float(np.dot(c, p.x)) - d) / cnorm)

    point = _evaluate_full(guess.x, params, tol)
    current = merit(point)
    for it in range(max_iter + 1):
        if point.residual < newton_tol and abs(float(np.dot(c, point.x)) - d) <= 1e-12 * max(1.0, abs(d)):
            return replace(point, iterations=it)
        if it == max_iter:
            break
        J = point.jac.matrix
        cond = _slice_condition(J, frozen, c)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularJacobian(f"slice Jacobian condition number {cond:.3g} at {point.x}")
        A = np.vstack([J, c])
        rhs = -np.array([point.res_f1, point.res_theta, float(np.dot(c, point.x)) - d])
        step = np.linalg.solve(A, rhs)

        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            try:
                trial = _evaluate_full(point.x + lam * step, params, tol)
            except NonAdmissible:
                trial = None
            if trial is not None and merit(trial) < current:
                break
            lam *= 0.5
        else:
            raise NoConvergence(
                f"no residual decrease along the Newton direction at {point.x} "
                f"(residual {current:.3g})")
        point, current = trial, merit(trial)
        log.debug("newton it=%d lam=%g residual=%.3e", it + 1, lam, current)
    raise NoConvergence(f"Newton did not reach {newton_tol:g} in {max_iter} iterations "
                        f"(residual {current:.3g} at {point.x})")


def psi(a: float, params: FamilyParams, H: float, t_max: float = 20.0,
        tol: ToleranceSpec = DEFAULT_TOL) -> tuple[float, float]:
    """(f1, t) at the first time theta reaches pi, or (nan, nan) if it does not."""
    try:
        tr = integrate_to_pi(a, params, H, t_max=t_max, tol=tol)
    except IntegrationError:
        return math.nan, math.nan
    if tr is None:
        return math.nan, math.nan
    return float(tr.y[0]), tr.t


def scan_psi(params: FamilyParams, H: float, a_values, tol: ToleranceSpec = DEFAULT_TOL) -> np.ndarray:
    """Rows (a, psi(a), t_event) over ``a_values``."""
    rows = [(a, *psi(float(a), params, H, tol=tol)) for a in a_values]
    return np.array(rows, dtype=float).reshape(-1, 3)


def sign_changes(values) -> list[int]:
    """Indices i with values[i] and values[i+1] finite and of opposite sign (or values[i] == 0)."""
    out = []
    for i in range(len(values) - 1):
        u, v = values[i], values[i + 1]
        if math.isfinite(u) and math.isfinite(v) and (u == 0.0 or u * v < 0.0):
            out.append(i)
    return out


def find_seed(params: FamilyParams, H: float = 0.0, a_range=(0.05, 0.5),
              resolution: float = 1e-3, tol: ToleranceSpec = DEFAULT_TOL) -> ShootingPoint:
    """Locate a solution with mean curvature ``H`` by scanning a and bisecting psi."""
    lo, hi = a_range
    if not 0.0 < lo < hi < 1.0:
        raise ValueError(f"a_range must lie inside (0, 1), got {a_range}")
    count = int(math.ceil((hi - lo) / resolution))
    grid = np.linspace(lo, hi, count + 1)
    table = scan_psi(params, H, grid, tol)
    changes = sign_changes(table[:, 1])
    if not changes:
        raise NoBracket(f"psi has no sign change on a in [{lo}, {hi}] for {params.label}, H={H}")
    i = changes[0]
    a_lo, a_hi = table[i, 0], table[i + 1, 0]
    p_lo = table[i, 1]
    t_event = table[i, 2]
    while a_hi - a_lo > 1e-12:
        mid = 0.5 * (a_lo + a_hi)
        p_mid, t_mid = psi(mid, params, H, tol=tol)
        if not math.isfinite(p_mid):
            break
        if p_mid == 0.0:
            a_lo = a_hi = mid
            t_event = t_mid
            break
        if (p_mid < 0.0) == (p_lo < 0.0):
            a_lo, p_lo = mid, p_mid
        else:
            a_hi = mid
        t_event = t_mid
    a0 = 0.5 * (a_lo + a_hi)
    return solve(ShootingPoint(a0, H, t_event), params, frozen="H", tol=tol)
