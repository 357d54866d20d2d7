import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmcsphere.errors import NoBracket, NoConvergence, NonAdmissible, SingularJacobian
from cmcsphere.family import FamilyParams
from cmcsphere.odecore import DEFAULT_TOL, ProfileState, integrate
from cmcsphere.shooting import (
    Plane, ShootingPoint, evaluate, find_seed, jacobian, psi, scan_psi, sign_changes, solve,
)

from conftest import Q0_A, Q0_T

P31 = FamilyParams.from_nl(3, 1)
P52 = FamilyParams.from_nl(5, 2)

GRAD_F1 = np.array([0.966592, -0.883772, -1.0])
GRAD_THETA = np.array([-0.287382, 0.505903, 1.92866])


def _fd_jacobian(x, params, eps=1e-5):
    cols = []
    for i in range(3):
        up, dn = np.array(x, float), np.array(x, float)
        up[i] += eps
        dn[i] -= eps
        pu, pd = evaluate(*up, params), evaluate(*dn, params)
        cols.append([(pu.res_f1 - pd.res_f1) / (2 * eps), (pu.res_theta - pd.res_theta) / (2 * eps)])
    return np.array(cols).T


class TestEvaluate:
    def test_q0_residuals(self):
        p = evaluate(Q0_A, 0.0, Q0_T, P31)
        assert abs(p.res_f1) < 1e-4 and abs(p.res_theta) < 1e-4

    def test_short_time(self):
        p = evaluate(0.1876, 0.0, 1e-7, P31)
        assert p.res_theta == pytest.approx(-math.pi, abs=1e-5)
        assert p.res_f1 == pytest.approx(1e-7, rel=1e-6)

    @pytest.mark.parametrize("a,T", [(0.0, 1.0), (1.0, 1.0), (1.3, 1.0), (0.2, 0.0), (0.2, -1.0)])
    def test_rejects_inadmissible(self, a, T):
        with pytest.raises(NonAdmissible):
            evaluate(a, 0.0, T, P31)

    @pytest.mark.parametrize("a", [1e-13, 1 - 1e-13])
    def test_breach_reported_as_nonadmissible(self, a):
        with pytest.raises(NonAdmissible):
            evaluate(a, 0.0, 1.0, P31)


class TestJacobian:
    def test_q0_printed_gradients(self, q0):
        jac = jacobian(q0.a, q0.H, q0.T, P31)
        assert np.all(np.abs(jac.grad_F1 - GRAD_F1) <= 1e-3 * np.abs(GRAD_F1))
        assert np.all(np.abs(jac.grad_Theta - GRAD_THETA) <= 1e-3 * np.abs(GRAD_THETA))

    def test_time_derivatives(self, q0):
        jac = jacobian(q0.a, q0.H, q0.T, P31)
        assert jac.grad_F1[2] == pytest.approx(-1.0, abs=1e-12)
        tr = integrate(ProfileState.initial(q0.a), P31, 0.0, q0.T)
        assert jac.grad_F1[2] == math.cos(tr.y[2])

    def test_solved_point_carries_jacobian(self, q0):
        fresh = jacobian(q0.a, q0.H, q0.T, P31)
        assert np.allclose(q0.jac.matrix, fresh.matrix, rtol=0, atol=1e-12)
        assert q0.jac.matrix.shape == (2, 3)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.1, 0.45), st.floats(-0.1, 0.6), st.floats(0.5, 1.3))
    def test_matches_finite_differences(self, a, H, T):
        jac = jacobian(a, H, T, P52).matrix
        fd = _fd_jacobian((a, H, T), P52)
        for j in range(3):
            scale = max(np.max(np.abs(fd[:, j])), 1e-3)
            assert np.max(np.abs(jac[:, j] - fd[:, j])) / scale < 1e-4


class TestSolve:
    def test_q0_from_rough_guess(self):
        p = solve(ShootingPoint(0.18, 0.0, 1.2), P31, frozen="H")
        assert p.a == pytest.approx(Q0_A, abs=5e-6)
        assert p.T == pytest.approx(Q0_T, abs=5e-5)
        assert p.H == 0.0
        assert p.residual < DEFAULT_TOL.newton_tol

    def test_five_two(self):
        seed = find_seed(P52, 0.0, (0.3, 0.36))
        p = solve(ShootingPoint(0.3310, 0.0, seed.T), P52, frozen="H")
        assert round(p.a, 5) == pytest.approx(0.33098, abs=1e-5)

    def test_fixed_point(self, q0):
        again = solve(ShootingPoint(q0.a, q0.H, q0.T), P31, frozen="H")
        assert again.iterations <= 1
        assert np.allclose(again.x, q0.x, rtol=0, atol=1e-12)

    def test_residual_consistency(self, q0):
        assert evaluate(q0.a, q0.H, q0.T, P31).residual < DEFAULT_TOL.newton_tol

    @pytest.mark.parametrize("frozen", ["a", "T"])
    def test_other_slices(self, q0, frozen):
        guess = {"a": ShootingPoint(q0.a, 0.01, 1.17), "T": ShootingPoint(0.19, 0.01, q0.T)}[frozen]
        p = solve(guess, P31, frozen=frozen)
        assert np.allclose(p.x, q0.x, atol=1e-8)

    def test_plane_slice(self, q0):
        normal = np.array([1.0, 0.0, 0.0])
        guess = np.array([q0.a + 1e-3, 0.0, q0.T])
        p = solve(ShootingPoint(*guess), P31, frozen=Plane(normal, guess))
        assert p.a == pytest.approx(guess[0], abs=1e-12)
        assert p.residual < 1e-10

    def test_singular_slice(self, q0):
        normal = q0.jac.grad_F1 / np.linalg.norm(q0.jac.grad_F1)
        with pytest.raises(SingularJacobian):
            solve(q0, P31, frozen=Plane(normal, q0.x + 1e-4 * normal))

    def test_iteration_budget(self):
        with pytest.raises(NoConvergence):
            solve(ShootingPoint(0.15, 0.0, 1.3), P31, frozen="H", max_iter=1)

    def test_bad_slice_name(self, q0):
        with pytest.raises(ValueError):
            solve(q0, P31, frozen="b")

    def test_deterministic(self):
        runs = [solve(ShootingPoint(0.3, 0.0, 1.0), P52, frozen="H") for _ in range(2)]
        assert runs[0] == runs[1]
        assert np.array_equal(runs[0].jac.matrix, runs[1].jac.matrix)


class TestSeed:
    def test_q0(self, q0):
        assert q0.a == pytest.approx(Q0_A, abs=1e-6)
        assert q0.T == pytest.approx(Q0_T, abs=1e-5)
        assert q0.H == 0.0

    def test_four_one(self):
        p = find_seed(FamilyParams.from_nl(4, 1), 0.0, (0.05, 0.5))
        assert p.a == pytest.approx(0.16853, abs=1e-5)

    def test_single_sign_change(self):
        grid = np.linspace(0.05, 0.5, 451)
        table = scan_psi(P31, 0.0, grid)
        assert np.all(np.isfinite(table[:, 1]))
        changes = sign_changes(table[:, 1])
        assert len(changes) == 1
        assert grid[changes[0]] <= Q0_A <= grid[changes[0] + 1]

    def test_psi_vanishes_at_q0(self, q0):
        value, t = psi(q0.a, P31, 0.0)
        assert abs(value) < 1e-9
        assert t == pytest.approx(q0.T, abs=1e-9)

    def test_no_bracket(self):
        with pytest.raises(NoBracket):
            find_seed(P31, 0.0, (0.25, 0.5), resolution=1e-2)

    def test_bad_range(self):
        with pytest.raises(ValueError):
            find_seed(P31, 0.0, (0.5, 0.2))

    def test_sign_changes(self):
        assert sign_changes([1.0, -1.0, float("nan"), 2.0, 0.0, 3.0, -1.0]) == [0, 4, 5]


class TestSymmetry:
    @pytest.mark.parametrize("family,a_range", [((3, 1), (0.05, 0.5)), ((5, 2), (0.3, 0.36)),
                                               ((9, 4), (0.4, 0.5))])
    def test_period_and_reflection(self, family, a_range):
        params = FamilyParams.from_nl(*family)
        p = find_seed(params, 0.0, a_range)
        t = np.linspace(0.0, p.T, 100)
        grid = np.concatenate([p.T - t, p.T + t])
        tr = integrate(ProfileState.initial(p.a), params, p.H, 2 * p.T, sample_t=np.sort(grid))
        ordered = {round(s, 15): row for s, row in zip(tr.sample_t, tr.samples)}
        before = np.array([ordered[round(s, 15)] for s in p.T - t])
        after = np.array([ordered[round(s, 15)] for s in p.T + t])
        assert np.max(np.abs(before[:, 0] + after[:, 0])) < 1e-6
        assert np.max(np.abs(before[:, 1] - after[:, 1])) < 1e-6
        assert np.max(np.abs(before[:, 2] + after[:, 2] - 2 * math.pi)) < 1e-6
        end = tr.y
        assert abs(end[0]) < 1e-8 and abs(end[1] - p.a) < 1e-8 and abs(end[2] - 2 * math.pi) < 1e-8
