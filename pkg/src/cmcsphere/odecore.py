"""Profile-curve vector field, variational systems and the adaptive integrator.

The profile curve (f1, f2) is parametrized by arc length with tangent angle
theta, so f1' = cos(theta), f2' = sin(theta) and theta' = K(f1, f2, theta; H).
Sensitivity blocks (d/da or d/dH of the three base components) are appended
to the base state and integrated alongside it.

The integrator is a Dormand-Prince 5(4) pair with its quartic dense output,
compiled with numba. All kernels report failures through integer status
codes that the Python wrappers turn into exceptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DomainBreach, IntegrationError, StepSizeUnderflow
from .family import FamilyParams

EPS_DOM = 1e-12
MIN_STEP = 1e-14
MAX_STEPS = 200_000

OK = 0
BREACH = 1
UNDERFLOW = 2
TOO_MANY_STEPS = 3
NO_EVENT = 4

WRT_A = "wrt_a"
WRT_H = "wrt_H"
SENSITIVITY_TAGS = (WRT_A, WRT_H)


@dataclass(frozen=True)
class ToleranceSpec:
    rtol: float = 1e-10
    atol: float = 1e-10
    newton_tol: float = 1e-10
    max_iter: int = 20

    def as_dict(self) -> dict:
        return {"rtol": self.rtol, "atol": self.atol,
                "newton_tol": self.newton_tol, "max_iter": self.max_iter}


DEFAULT_TOL = ToleranceSpec()


@dataclass(frozen=True)
class ProfileState:
    f1: float
    f2: float
    theta: float

    @property
    def f(self) -> float:
        return math.sqrt(1.0 - self.f1**2 - self.f2**2)

    @property
    def g(self) -> float:
        return self.f2 * math.cos(self.theta) - self.f1 * math.sin(self.theta)

    @property
    def h(self) -> float:
        return math.sqrt(1.0 - self.g**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.theta])

    @classmethod
    def initial(cls, a: float) -> "ProfileState":
        return cls(0.0, a, 0.0)


@dataclass(frozen=True)
class SensitivityState:
    base: ProfileState
    s_f1: float
    s_f2: float
    s_theta: float
    tag: str = WRT_A

    def __post_init__(self):
        if self.tag not in SENSITIVITY_TAGS:
            raise ValueError(f"unknown sensitivity tag {self.tag!r}")

    @classmethod
    def initial(cls, a: float, tag: str) -> "SensitivityState":
        s_f2 = 1.0 if tag == WRT_A else 0.0
        return cls(ProfileState.initial(a), 0.0, s_f2, 0.0, tag)

    @property
    def s(self) -> np.ndarray:
        return np.array([self.s_f1, self.s_f2, self.s_theta])


@dataclass(frozen=True)
class CurvatureDiagnostics:
    kappa1: float
    kappa2: float
    g: float
    h: float
    f: float
    H_reconstructed: float


# ---------------------------------------------------------------------------
# compiled kernels

@njit(cache=True)
def _k_partials(f1, f2, th, n, l, H):
    """Return (K, K_f1, K_f2, K_theta, K_H); K is nan outside the domain."""
    F = 1.0 - f1 * f1 - f2 * f2
    if f2 <= EPS_DOM or F <= EPS_DOM:
        return math.nan, 0.0, 0.0, 0.0, 0.0
    c = math.cos(th)
    s = math.sin(th)
    g = f2 * c - f1 * s
    q = 1.0 - g * g
    h = math.sqrt(q)
    B = n * f1 * f2 * s + n * H * f2 * h - n * f2 * f2 * c + l * c
    D = f2 * F
    K = q * B / D

    g_f1 = -s
    g_f2 = c
    g_th = -f2 * s - f1 * c
    q_f1 = -2.0 * g * g_f1
    q_f2 = -2.0 * g * g_f2
    q_th = -2.0 * g * g_th
    h_f1 = -g * g_f1 / h
    h_f2 = -g * g_f2 / h
    h_th = -g * g_th / h

    B_f1 = n * f2 * s + n * H * f2 * h_f1
    B_f2 = n * f1 * s + n * H * h + n * H * f2 * h_f2 - 2.0 * n * f2 * c
    B_th = n * f1 * f2 * c + n * H * f2 * h_th + n * f2 * f2 * s - l * s
    D_f1 = -2.0 * f1 * f2
    D_f2 = F - 2.0 * f2 * f2

    K_f1 = (q_f1 * B + q * B_f1) / D - K * D_f1 / D
    K_f2 = (q_f2 * B + q * B_f2) / D - K * D_f2 / D
    K_th = (q_th * B + q * B_th) / D
    K_H = n * q * h / F
    return K, K_f1, K_f2, K_th, K_H


@njit(cache=True)
def _rhs(y, n, l, H, forcing, out):
    """Fill ``out`` with d/dt of the augmented state; False on domain breach."""
    K, K_f1, K_f2, K_th, K_H = _k_partials(y[0], y[1], y[2], n, l, H)
    if math.isnan(K):
        return False
    c = math.cos(y[2])
    s = math.sin(y[2])
    out[0] = c
    out[1] = s
    out[2] = K
    for j in range(forcing.shape[0]):
        i = 3 + 3 * j
        out[i] = -y[i + 2] * s
        out[i + 1] = y[i + 2] * c
        out[i + 2] = K_f1 * y[i] + K_f2 * y[i + 1] + K_th * y[i + 2] + forcing[j] * K_H
    return True


# Dormand-Prince 5(4) tableau
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic continuous extension: y(t + s*h) = y + h * sum_i k_i * (P[i] . [s, s^2, s^3, s^4])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(cache=True)
def _dense(y, k, h, s, out):
    p1 = s
    p2 = s * s
    p3 = p2 * s
    p4 = p3 * s
    for m in range(y.shape[0]):
        acc = 0.0
        for i in range(7):
            w = _P[i, 0] * p1 + _P[i, 1] * p2 + _P[i, 2] * p3 + _P[i, 3] * p4
            acc += k[i, m] * w
        out[m] = y[m] + h * acc


@njit(cache=True)
def _dopri(y0, n, l, H, forcing, t_end, rtol, atol, sample_t, samples, stop_on_pi):
    """Integrate from t=0 to ``t_end`` (or to the first theta = pi crossing).

    Returns (status, t, y, n_accepted, n_rejected). ``samples[j]`` is filled
    for every ``sample_t[j]`` (ascending) reached before termination.
    """
    dim = y0.shape[0]
    y = y0.copy()
    y_new = np.empty(dim)
    tmp = np.empty(dim)
    k = np.empty((7, dim))
    t = 0.0
    n_acc = 0
    n_rej = 0
    n_samp = sample_t.shape[0]
    j_samp = 0

    while j_samp < n_samp and sample_t[j_samp] <= 0.0:
        samples[j_samp, :] = y
        j_samp += 1
    if t_end <= 0.0:
        return OK, t, y, 0, 0

    if not _rhs(y, n, l, H, forcing, k[0]):
        return BREACH, t, y, 0, 0

    # initial step (Hairer-Wanner heuristic)
    d0 = 0.0
    d1 = 0.0
    for m in range(dim):
        sc = atol + rtol * abs(y[m])
        d0 += (y[m] / sc) ** 2
        d1 += (k[0, m] / sc) ** 2
    d0 = math.sqrt(d0 / dim)
    d1 = math.sqrt(d1 / dim)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for m in range(dim):
        tmp[m] = y[m] + h0 * k[0, m]
    if not _rhs(tmp, n, l, H, forcing, k[1]):
        h = min(h0, t_end)
    else:
        d2 = 0.0
        for m in range(dim):
            sc = atol + rtol * abs(y[m])
            d2 += ((k[1, m] - k[0, m]) / sc) ** 2
        d2 = math.sqrt(d2 / dim) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        h = min(100.0 * h0, h1, t_end)

    while t < t_end:
        if n_acc + n_rej >= MAX_STEPS:
            return TOO_MANY_STEPS, t, y, n_acc, n_rej
        if h < MIN_STEP and t_end - t > MIN_STEP:
            return UNDERFLOW, t, y, n_acc, n_rej
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True

        ok = True
        for st in range(1, 6):
            for m in range(dim):
                acc = 0.0
                for i in range(st):
                    acc += _A[st, i] * k[i, m]
                tmp[m] = y[m] + h * acc
            if not _rhs(tmp, n, l, H, forcing, k[st]):
                ok = False
                break
        if ok:
            for m in range(dim):
                acc = 0.0
                for i in range(6):
                    acc += _B[i] * k[i, m]
                y_new[m] = y[m] + h * acc
            ok = _rhs(y_new, n, l, H, forcing, k[6])
        if not ok:
            # stage left the domain: shrink and retry
            n_rej += 1
            h *= 0.25
            if h < MIN_STEP:
                return BREACH, t, y, n_acc, n_rej
            continue

        err = 0.0
        for m in range(dim):
            acc = 0.0
            for i in range(7):
                acc += _E[i] * k[i, m]
            sc = atol + rtol * max(abs(y[m]), abs(y_new[m]))
            err += (h * acc / sc) ** 2
        err = math.sqrt(err / dim)

        if err > 1.0 or math.isnan(err):
            n_rej += 1
            if math.isnan(err):
                h *= 0.25
            else:
                h *= max(0.2, 0.9 * err ** -0.2)
            continue

        t_new = t_end if last else t + h
        n_acc += 1

        if stop_on_pi and y_new[2] >= math.pi and y[2] < math.pi:
            lo = 0.0
            hi = 1.0
            while (hi - lo) * h > 1e-12:
                mid = 0.5 * (lo + hi)
                _dense(y, k, h, mid, tmp)
                if tmp[2] >= math.pi:
                    hi = mid
                else:
                    lo = mid
            t_ev = t + hi * h
            while j_samp < n_samp and sample_t[j_samp] <= t_ev:
                _dense(y, k, h, (sample_t[j_samp] - t) / h, samples[j_samp])
                j_samp += 1
            _dense(y, k, h, hi, tmp)
            return OK, t_ev, tmp.copy(), n_acc, n_rej

        while j_samp < n_samp and sample_t[j_samp] <= t_new:
            s = (sample_t[j_samp] - t) / h
            if s >= 1.0:
                samples[j_samp, :] = y_new
            else:
                _dense(y, k, h, s, samples[j_samp])
            j_samp += 1

        for m in range(dim):
            y[m] = y_new[m]
            k[0, m] = k[6, m]
        t = t_new
        if err == 0.0:
            fac = 10.0
        else:
            fac = min(10.0, max(0.2, 0.9 * err ** -0.2))
        h *= fac

    if stop_on_pi:
        return NO_EVENT, t, y, n_acc, n_rej
    return OK, t, y, n_acc, n_rej


@njit(cache=True)
def _theta_rate(samples, n, l, H):
    out = np.empty(samples.shape[0])
    for i in range(samples.shape[0]):
        out[i] = _k_partials(samples[i, 0], samples[i, 1], samples[i, 2], n, l, H)[0]
    return out


# ---------------------------------------------------------------------------
# Python-level API

def _K_terms(state: ProfileState, params: FamilyParams, H: float):
    terms = _k_partials(state.f1, state.f2, state.theta, float(params.n), float(params.l), float(H))
    if math.isnan(terms[0]):
        raise DomainBreach(f"state {state} outside f2 > 0, f1^2 + f2^2 < 1")
    return terms


def vector_field(state: ProfileState, params: FamilyParams, H: float) -> tuple[float, float, float]:
    """(f1', f2', theta') at ``state``."""
    K = _K_terms(state, params, H)[0]
    return math.cos(state.theta), math.sin(state.theta), K


def k_partials(state: ProfileState, params: FamilyParams, H: float) -> dict:
    K, K_f1, K_f2, K_th, K_H = _K_terms(state, params, H)
    return {"K": K, "K_f1": K_f1, "K_f2": K_f2, "K_theta": K_th, "K_H": K_H}


def variational_field(state: SensitivityState, params: FamilyParams, H: float) -> tuple[float, float, float]:
    """Time derivative of the sensitivity components of ``state``."""
    _, K_f1, K_f2, K_th, K_H = _K_terms(state.base, params, H)
    th = state.base.theta
    d_theta = K_f1 * state.s_f1 + K_f2 * state.s_f2 + K_th * state.s_theta
    if state.tag == WRT_H:
        d_theta += K_H
    return -state.s_theta * math.sin(th), state.s_theta * math.cos(th), d_theta


@dataclass
class Trajectory:
    """Result of :func:`integrate`.

    ``y`` is the final augmented state: the base (f1, f2, theta) followed by
    one (s_f1, s_f2, s_theta) block per entry of ``sensitivities``.
    """

    t: float
    y: np.ndarray
    sensitivities: tuple
    sample_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    samples: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    sample_dtheta: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_steps: int = 0
    n_rejected: int = 0

    @property
    def state(self) -> ProfileState:
        return ProfileState(*map(float, self.y[:3]))

    def sensitivity(self, tag: str) -> np.ndarray:
        j = self.sensitivities.index(tag)
        return self.y[3 + 3 * j: 6 + 3 * j]


def _raise_for_status(status: int, t: float, y: np.ndarray) -> None:
    if status == OK:
        return
    where = f"t={t:.6g}, (f1, f2, theta)=({y[0]:.6g}, {y[1]:.6g}, {y[2]:.6g})"
    if status == BREACH:
        raise DomainBreach(f"trajectory left the admissible domain near {where}")
    if status == UNDERFLOW:
        raise StepSizeUnderflow(f"step size below {MIN_STEP:g} near {where}")
    if status == TOO_MANY_STEPS:
        raise StepSizeUnderflow(f"step budget {MAX_STEPS} exhausted near {where}")
    raise IntegrationError(f"integration failed with status {status} near {where}")


def _initial_vector(initial, sensitivities):
    if isinstance(initial, SensitivityState):
        if sensitivities and tuple(sensitivities) != (initial.tag,):
            raise ValueError("a SensitivityState carries its own tag")
        return np.concatenate([initial.base.as_array(), initial.s]), (initial.tag,)
    if isinstance(initial, ProfileState):
        base = initial.as_array()
        blocks = [SensitivityState(initial, 0.0, 1.0 if tag == WRT_A else 0.0, 0.0, tag).s
                  for tag in sensitivities]
        return np.concatenate([base, *blocks]) if blocks else base, tuple(sensitivities)
    y0 = np.asarray(initial, dtype=float)
    if y0.shape != (3 + 3 * len(sensitivities),):
        raise ValueError("raw initial vector does not match the requested sensitivities")
    return y0.copy(), tuple(sensitivities)


def _forcing(tags) -> np.ndarray:
    for tag in tags:
        if tag not in SENSITIVITY_TAGS:
            raise ValueError(f"unknown sensitivity tag {tag!r}")
    return np.array([1.0 if tag == WRT_H else 0.0 for tag in tags])


def integrate(initial, params: FamilyParams, H: float, t_end: float, *,
              sensitivities=(), tol: ToleranceSpec = DEFAULT_TOL,
              n_samples: int = 0, sample_t=None) -> Trajectory:
    """Integrate the profile ODE (and optional sensitivity blocks) to exactly ``t_end``.

    ``initial`` is a ProfileState, a SensitivityState or a raw state vector.
    With ``n_samples`` > 0 the trajectory is also sampled at that many equally
    spaced times on [0, t_end] using the dense output; ``sample_t`` gives
    explicit ascending sample times instead.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    y0, tags = _initial_vector(initial, sensitivities)
    if sample_t is None:
        sample_t = np.linspace(0.0, t_end, n_samples) if n_samples > 0 else np.empty(0)
    sample_t = np.ascontiguousarray(sample_t, dtype=float)
    samples = np.full((sample_t.shape[0], y0.shape[0]), np.nan)
    status, t, y, n_acc, n_rej = _dopri(
        y0, float(params.n), float(params.l), float(H), _forcing(tags), float(t_end),
        tol.rtol, tol.atol, sample_t, samples, False)
    _raise_for_status(status, t, y)
    dtheta = _theta_rate(samples, float(params.n), float(params.l), float(H))
    return Trajectory(t, y, tags, sample_t, samples, dtheta, n_acc, n_rej)


def integrate_to_pi(a: float, params: FamilyParams, H: float, t_max: float = 20.0,
                    tol: ToleranceSpec = DEFAULT_TOL) -> Trajectory | None:
    """Integrate from (0, a, 0) until theta first reaches pi.

    Returns None if theta stays below pi up to ``t_max``; domain breaches
    raise as in :func:`integrate`.
    """
    y0 = ProfileState.initial(a).as_array()
    status, t, y, n_acc, n_rej = _dopri(
        y0, float(params.n), float(params.l), float(H), np.empty(0), float(t_max),
        tol.rtol, tol.atol, np.empty(0), np.empty((0, 3)), True)
    if status == NO_EVENT:
        return None
    _raise_for_status(status, t, y)
    return Trajectory(t, y, ())


def curvature_diagnostics(state: ProfileState, params: FamilyParams, H: float,
                          kappa1: float | None = None) -> CurvatureDiagnostics:
    """Evaluate the mean-curvature expression of the immersion at one point.

    ``kappa1`` is the profile curvature theta'; by default it is taken from
    the vector field, which is what an exact trajectory would carry.
    """
    n, l = params.n, params.l
    c, s = math.cos(state.theta), math.sin(state.theta)
    if state.f2 <= EPS_DOM or 1.0 - state.f1**2 - state.f2**2 <= EPS_DOM:
        raise DomainBreach(f"state {state} outside the admissible domain")
    if kappa1 is None:
        kappa1 = vector_field(state, params, H)[2]
    f, g, h = state.f, state.g, state.h
    kappa2 = -c / state.f2
    ff_prime = -(state.f1 * c + state.f2 * s)
    nH = (n * g + kappa1 + l * kappa2) / h - kappa1 * ff_prime**2 / h**3
    return CurvatureDiagnostics(kappa1, kappa2, g, h, f, nH / n)


def curvature_residual(samples, params: FamilyParams, H: float, kappa1=None) -> float:
    """Largest |H_reconstructed - H| along a trajectory.

    ``samples`` is a :class:`Trajectory` (its samples and the theta' recorded
    while integrating are used) or an array with rows (f1, f2, theta, ...)
    together with ``kappa1``, the profile curvature theta' at each row.
    """
    if isinstance(samples, Trajectory):
        if kappa1 is None:
            kappa1 = samples.sample_dtheta
        samples = samples.samples
    if kappa1 is None:
        raise ValueError("kappa1 is required with raw sample arrays")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    kappa1 = np.asarray(kappa1, dtype=float)
    worst = 0.0
    for row, k1 in zip(samples, kappa1):
        state = ProfileState(float(row[0]), float(row[1]), float(row[2]))
        diag = curvature_diagnostics(state, params, H, float(k1))
        worst = max(worst, abs(diag.H_reconstructed - H))
    return worst


def gauss_map(state: ProfileState, y, z) -> np.ndarray:
    """Unit normal of the immersion at (y, z, t) for the convention in which H is computed."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    h = state.h
    if h <= EPS_DOM:
        raise DomainBreach("h vanished")
    c, s = math.cos(state.theta), math.sin(state.theta)
    g, f = state.g, state.f
    return np.concatenate([-g * f * y, (-g * state.f2 + c) * z, [-g * state.f1 - s]]) / h
