import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from cmcsphere.errors import DomainBreach, StepSizeUnderflow
from cmcsphere.family import FamilyParams
from cmcsphere.odecore import (
    WRT_A, WRT_H, ProfileState, SensitivityState, ToleranceSpec, curvature_diagnostics,
    curvature_residual, gauss_map, integrate, integrate_to_pi, k_partials, variational_field,
    vector_field,
)

from conftest import Q0_A, Q0_T

P31 = FamilyParams.from_nl(3, 1)
P52 = FamilyParams.from_nl(5, 2)


def _symbolic_partials(n, l):
    f1, f2, th, H = sp.symbols("f1 f2 th H", real=True)
    f = sp.sqrt(1 - f1**2 - f2**2)
    g = f2 * sp.cos(th) - f1 * sp.sin(th)
    h2 = 1 - g**2
    K = h2 / (f2 * f**2) * (n * f1 * f2 * sp.sin(th) + n * H * f2 * sp.sqrt(h2)
                            - n * f2**2 * sp.cos(th) + l * sp.cos(th))
    exprs = [K, sp.diff(K, f1), sp.diff(K, f2), sp.diff(K, th), sp.diff(K, H)]
    return sp.lambdify((f1, f2, th, H), exprs, "math")


_SYMBOLIC = {}


def symbolic(params):
    key = (params.n, params.l)
    if key not in _SYMBOLIC:
        _SYMBOLIC[key] = _symbolic_partials(*key)
    return _SYMBOLIC[key]


@st.composite
def states(draw):
    r = draw(st.floats(0.05, 0.9))
    phi = draw(st.floats(-1.2, 1.2))
    th = draw(st.floats(-math.pi, 2 * math.pi))
    return ProfileState(r * math.sin(phi), r * math.cos(phi), th)


def _scipy_rhs(params, H):
    def rhs(t, y):
        return list(vector_field(ProfileState(*y), params, H))
    return rhs


class TestProfileState:
    def test_derived(self):
        s = ProfileState(0.3, 0.4, 0.5)
        assert s.f == pytest.approx(math.sqrt(0.75))
        assert s.g == pytest.approx(0.4 * math.cos(0.5) - 0.3 * math.sin(0.5))
        assert s.h == pytest.approx(math.sqrt(1 - s.g**2))

    def test_initial(self):
        assert ProfileState.initial(0.25) == ProfileState(0.0, 0.25, 0.0)
        assert np.array_equal(SensitivityState.initial(0.25, WRT_A).s, [0.0, 1.0, 0.0])
        assert np.array_equal(SensitivityState.initial(0.25, WRT_H).s, [0.0, 0.0, 0.0])

    def test_bad_tag(self):
        with pytest.raises(ValueError):
            SensitivityState.initial(0.25, "wrt_T")


class TestVectorField:
    def test_worked_example(self):
        df1, df2, dth = vector_field(ProfileState(0.0, 0.5, 0.0), P31, 0.0)
        assert (df1, df2) == (1.0, 0.0)
        assert dth == pytest.approx(0.5, rel=1e-15)

    @given(st.floats(0.01, 0.99), st.floats(-5, 5))
    def test_no_vertical_speed_at_start(self, a, H):
        assert vector_field(ProfileState.initial(a), P52, H)[1] == 0.0

    @given(states())
    def test_unit_speed(self, s):
        df1, df2, _ = vector_field(s, P31, 0.3)
        assert df1**2 + df2**2 == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=50)
    @given(states(), st.floats(-3, 3), st.sampled_from([P31, P52, FamilyParams.from_nl(12, 5)]))
    def test_partials_match_symbolic(self, s, H, params):
        ref = symbolic(params)(s.f1, s.f2, s.theta, H)
        got = k_partials(s, params, H)
        for key, want in zip(("K", "K_f1", "K_f2", "K_theta", "K_H"), ref):
            assert got[key] == pytest.approx(want, rel=1e-9, abs=1e-9 * max(1.0, abs(ref[0])))

    def test_partials_match_finite_differences(self, rng):
        for _ in range(20):
            r, phi = rng.uniform(0.1, 0.8), rng.uniform(-1.0, 1.0)
            s = ProfileState(r * math.sin(phi), r * math.cos(phi), rng.uniform(0, 2 * math.pi))
            H, eps = rng.uniform(-1, 1), 1e-6
            got = k_partials(s, P52, H)
            K = lambda f1, f2, th, HH: vector_field(ProfileState(f1, f2, th), P52, HH)[2]
            fd = [
                (K(s.f1 + eps, s.f2, s.theta, H) - K(s.f1 - eps, s.f2, s.theta, H)) / (2 * eps),
                (K(s.f1, s.f2 + eps, s.theta, H) - K(s.f1, s.f2 - eps, s.theta, H)) / (2 * eps),
                (K(s.f1, s.f2, s.theta + eps, H) - K(s.f1, s.f2, s.theta - eps, H)) / (2 * eps),
                (K(s.f1, s.f2, s.theta, H + eps) - K(s.f1, s.f2, s.theta, H - eps)) / (2 * eps),
            ]
            for key, want in zip(("K_f1", "K_f2", "K_theta", "K_H"), fd):
                assert got[key] == pytest.approx(want, rel=1e-6, abs=1e-6)

    @pytest.mark.parametrize("state", [ProfileState(0.0, 0.0, 0.0), ProfileState(0.0, -0.1, 0.0),
                                       ProfileState(0.6, 0.8, 0.0), ProfileState(0.9, 0.9, 1.0)])
    def test_domain_breach(self, state):
        with pytest.raises(DomainBreach):
            vector_field(state, P31, 0.0)


class TestVariationalField:
    def test_initial_structure_wrt_a(self):
        s = SensitivityState.initial(0.3, WRT_A)
        d = variational_field(s, P31, 0.2)
        assert d[:2] == (0.0, 0.0)
        assert d[2] == pytest.approx(k_partials(s.base, P31, 0.2)["K_f2"], rel=1e-15)

    def test_initial_structure_wrt_H(self):
        s = SensitivityState.initial(0.3, WRT_H)
        d = variational_field(s, P31, 0.2)
        assert d[:2] == (0.0, 0.0)
        assert d[2] == pytest.approx(k_partials(s.base, P31, 0.2)["K_H"], rel=1e-15)
        assert d[2] != 0.0

    def test_linear_combination(self):
        base = ProfileState(0.1, 0.3, 0.7)
        p = k_partials(base, P31, -0.1)
        d = variational_field(SensitivityState(base, 0.2, -0.5, 1.5, WRT_A), P31, -0.1)
        assert d[0] == pytest.approx(-1.5 * math.sin(0.7))
        assert d[1] == pytest.approx(1.5 * math.cos(0.7))
        assert d[2] == pytest.approx(0.2 * p["K_f1"] - 0.5 * p["K_f2"] + 1.5 * p["K_theta"])


class TestIntegrate:
    def test_zero_time_is_identity(self):
        tr = integrate(ProfileState.initial(0.3), P31, 0.0, 0.0, sensitivities=(WRT_A, WRT_H))
        assert np.array_equal(tr.y, [0.0, 0.3, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])

    def test_q0_endpoint(self):
        tr = integrate(ProfileState.initial(Q0_A), P31, 0.0, Q0_T)
        assert tr.t == Q0_T
        assert abs(tr.y[0]) < 1e-4
        assert abs(tr.y[2] - math.pi) < 1e-4

    def test_against_scipy(self):
        tr = integrate(ProfileState.initial(Q0_A), P31, 0.0, Q0_T)
        ref = solve_ivp(_scipy_rhs(P31, 0.0), (0.0, Q0_T), [0.0, Q0_A, 0.0],
                        method="DOP853", rtol=1e-13, atol=1e-13)
        assert np.max(np.abs(tr.y - ref.y[:, -1])) < 1e-8

    def test_self_convergence(self):
        x0, t_end = ProfileState.initial(0.3), 1.4

        def run(tol):
            return integrate(x0, P52, -0.05, t_end, tol=ToleranceSpec(rtol=tol, atol=tol)).y

        ref = run(1e-13)
        errors = [np.max(np.abs(run(tol) - ref)) for tol in (1e-5, 1e-7, 1e-9, 1e-11)]
        assert all(e2 < e1 for e1, e2 in zip(errors, errors[1:]))
        assert errors[-1] < 1e-9

    def test_samples(self):
        tr = integrate(ProfileState.initial(Q0_A), P31, 0.0, Q0_T, n_samples=11)
        assert tr.samples.shape == (11, 3)
        assert np.allclose(tr.sample_t, np.linspace(0, Q0_T, 11))
        assert np.array_equal(tr.samples[0], [0.0, Q0_A, 0.0])
        assert np.allclose(tr.samples[-1], tr.y, atol=1e-12)
        for t, row in zip(tr.sample_t[1:-1], tr.samples[1:-1]):
            ref = solve_ivp(_scipy_rhs(P31, 0.0), (0.0, t), [0.0, Q0_A, 0.0],
                            method="DOP853", rtol=1e-12, atol=1e-12)
            assert np.max(np.abs(row - ref.y[:, -1])) < 1e-8

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.1, 0.4), st.floats(-0.1, 0.5), st.floats(0.3, 1.2))
    def test_sensitivities_match_finite_differences(self, a, H, T):
        tr = integrate(ProfileState.initial(a), P52, H, T, sensitivities=(WRT_A, WRT_H))
        eps = 1e-5
        end = lambda aa, HH: integrate(ProfileState.initial(aa), P52, HH, T).y
        fd_a = (end(a + eps, H) - end(a - eps, H)) / (2 * eps)
        fd_H = (end(a, H + eps) - end(a, H - eps)) / (2 * eps)
        for got, want in ((tr.sensitivity(WRT_A), fd_a), (tr.sensitivity(WRT_H), fd_H)):
            assert np.max(np.abs(got - want)) <= 1e-4 * max(1.0, np.max(np.abs(want)))

    def test_domain_breach_is_typed(self):
        with pytest.raises((DomainBreach, StepSizeUnderflow)):
            integrate(ProfileState(0.0, 1e-13, 0.0), P31, 0.0, 1.0)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            integrate(ProfileState.initial(0.3), P31, 0.0, -1.0)

    def test_deterministic(self):
        runs = [integrate(ProfileState.initial(0.2), P52, 0.1, 1.0, sensitivities=(WRT_A,), n_samples=33)
                for _ in range(2)]
        assert np.array_equal(runs[0].y, runs[1].y)
        assert np.array_equal(runs[0].samples, runs[1].samples)

    def test_event_at_pi(self):
        tr = integrate_to_pi(Q0_A, P31, 0.0)
        assert tr.y[2] == pytest.approx(math.pi, abs=1e-9)
        assert tr.t == pytest.approx(Q0_T, abs=1e-4)


@pytest.fixture(scope="module")
def q0_traj():
    return integrate(ProfileState.initial(Q0_A), P31, 0.0, Q0_T, n_samples=201)


class TestCurvature:

    def test_residual_small_on_q0(self, q0_traj):
        assert curvature_residual(q0_traj, P31, 0.0) < 1e-8

    @pytest.mark.parametrize("params,a,H,T", [(P52, 0.25, -0.1, 1.0), (FamilyParams.from_nl(9, 4), 0.4, 0.7, 0.8)])
    def test_residual_small_elsewhere(self, params, a, H, T):
        tr = integrate(ProfileState.initial(a), params, H, T, n_samples=101)
        assert curvature_residual(tr, params, H) < 1e-8

    def test_perturbed_trajectory(self, q0_traj):
        bent = q0_traj.samples.copy()
        bent[:, 2] += 0.01
        assert curvature_residual(bent, P31, 0.0, kappa1=q0_traj.sample_dtheta) > 1e-3

    def test_requires_kappa_for_arrays(self, q0_traj):
        with pytest.raises(ValueError):
            curvature_residual(q0_traj.samples, P31, 0.0)

    def test_diagnostics_fields(self):
        s = ProfileState(0.1, 0.4, 0.3)
        d = curvature_diagnostics(s, P31, 0.25)
        assert d.kappa1 == pytest.approx(vector_field(s, P31, 0.25)[2])
        assert d.kappa2 == pytest.approx(-math.cos(0.3) / 0.4)
        assert d.H_reconstructed == pytest.approx(0.25, abs=1e-12)

    def test_domain_preserved_on_q0(self, q0_traj):
        f1, f2 = q0_traj.samples[:, 0], q0_traj.samples[:, 1]
        assert f2.min() > 0
        assert (f1**2 + f2**2).max() < 1

    def test_arclength_element_identity(self, q0_traj):
        f1, f2, th = q0_traj.samples.T
        f = np.sqrt(1 - f1**2 - f2**2)
        g = f2 * np.cos(th) - f1 * np.sin(th)
        dfdt = -(f1 * np.cos(th) + f2 * np.sin(th)) / f
        assert np.max(np.abs(1 + dfdt**2 - (1 - g**2) / f**2)) < 1e-10


class TestGaussMap:
    def _random_unit(self, rng, dim):
        v = rng.normal(size=dim)
        return v / np.linalg.norm(v)

    def test_unit_and_normal(self, rng):
        p = P52
        for _ in range(200):
            r, phi = rng.uniform(0.05, 0.9), rng.uniform(-1.2, 1.2)
            s = ProfileState(r * math.sin(phi), r * math.cos(phi), rng.uniform(0, 2 * math.pi))
            y, z = self._random_unit(rng, p.k + 1), self._random_unit(rng, p.l + 1)
            xi = gauss_map(s, y, z)
            assert abs(np.linalg.norm(xi) - 1) < 1e-12
            c, sn = math.cos(s.theta), math.sin(s.theta)
            dfdt = -(s.f1 * c + s.f2 * sn) / s.f
            dphi_dt = np.concatenate([dfdt * y, sn * z, [c]])
            phi_pt = np.concatenate([s.f * y, s.f2 * z, [s.f1]])
            assert abs(np.dot(xi, dphi_dt)) < 1e-10
            assert abs(np.dot(xi, phi_pt)) < 1e-10

    def test_start_point_last_coordinate(self):
        xi = gauss_map(ProfileState.initial(0.3), [1.0, 0.0], [0.0, 1.0])
        assert xi[-1] == 0.0
