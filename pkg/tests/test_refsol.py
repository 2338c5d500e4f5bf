import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhtp.refsol import (
    ConstDriftSolution,
    SeriesConvergenceError,
    eval_u_const,
    eval_u_const_grid,
    steady_state,
    u_const_images,
    u_const_spectral,
    u_heat_layer,
    uses_spectral,
)

T_CROSS = 0.1 / np.pi**2


def mp_spectral(v0, t, x, terms=400):
    """High-precision eigenfunction sum with coefficients from numerical quadrature."""
    mp.mp.dps = 30
    v0, t, x = mp.mpf(v0), mp.mpf(t), mp.mpf(x)

    def us(y):
        return 1 - y if v0 == 0 else (mp.e ** (-v0 * y) - mp.e ** (-v0)) / (1 - mp.e ** (-v0))

    total = mp.mpf(0)
    for k in range(1, terms + 1):
        kp = k * mp.pi
        ck = -2 * kp / (kp**2 + v0**2 / 4)
        total += ck * mp.e ** (-(kp**2 + v0**2 / 4) * t) * mp.sin(kp * x)
    return float(us(x) + mp.e ** (-v0 * x / 2) * total)


class TestHeatLayer:
    def test_at_boundary(self):
        assert u_heat_layer(0.01, 0.0) == 1.0

    def test_against_mpmath(self):
        assert u_heat_layer(0.01, 0.1) == pytest.approx(float(mp.erfc(0.5)), rel=1e-14)
        assert u_heat_layer(0.01, 0.1) == pytest.approx(0.4795001222, abs=1e-10)

    def test_tail(self):
        assert u_heat_layer(0.01, 10.0) < 1e-300

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            u_heat_layer(0.0, 0.5)


class TestSeries:
    @pytest.mark.parametrize("v0", [-3.0, 0.0, 2.5])
    @pytest.mark.parametrize("k", [1, 2, 7])
    def test_coefficients_match_projection(self, v0, k):
        # c_k = -2 int_0^1 exp(v0 x / 2) u_s(x) sin(k pi x) dx
        mp.mp.dps = 25
        us = lambda y: float(steady_state(v0, float(y)))
        val = -2 * mp.quad(lambda y: mp.e ** (v0 * y / 2) * us(y) * mp.sin(k * mp.pi * y), [0, 1])
        kp = k * np.pi
        assert -2 * kp / (kp**2 + v0**2 / 4) == pytest.approx(float(val), rel=1e-10)

    def test_steady_state_zero_drift(self):
        assert eval_u_const(ConstDriftSolution(0.0, 10.0), 10.0, 0.5) == pytest.approx(0.5, abs=1e-12)

    def test_steady_state_unit_drift(self):
        expected = (np.exp(-1) - np.exp(-2)) / (1 - np.exp(-2))
        assert eval_u_const(ConstDriftSolution(2.0, 10.0), 10.0, 0.5) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.2689414214, abs=1e-10)

    @pytest.mark.parametrize("v0", [-40.0, -1e-3, 1e-3, 40.0])
    def test_steady_state_stable(self, v0):
        x = np.linspace(0, 1, 11)
        ref = [float((mp.e ** (-v0 * xi) - mp.e ** (-v0)) / (1 - mp.e ** (-v0))) for xi in x]
        np.testing.assert_allclose(steady_state(v0, x), ref, rtol=1e-12, atol=1e-300)

    def test_small_time_single_boundary(self):
        # the right boundary contributes less than exp(-0.81 / 0.04)
        val = eval_u_const(ConstDriftSolution(0.0), 0.01, 0.1)
        assert val == pytest.approx(float(mp.erfc(0.5)), abs=1e-8)

    @pytest.mark.parametrize("v0", [-6.0, -1.0, 0.0, 1.0, 6.0])
    @pytest.mark.parametrize("t", [0.02, 0.1, 0.5])
    def test_spectral_against_mpmath(self, v0, t):
        x = np.array([0.05, 0.3, 0.5, 0.8])
        got = u_const_spectral(v0, t, x)
        ref = [mp_spectral(v0, t, xi) for xi in x]
        np.testing.assert_allclose(got, ref, atol=1e-10)

    @pytest.mark.parametrize("v0", [-4.0, -1.0, 0.0, 1.0, 4.0])
    def test_representations_agree_near_crossover(self, v0):
        x = np.linspace(0, 1, 11)
        for t in np.geomspace(T_CROSS / 2, 2 * T_CROSS, 9):
            diff = np.abs(u_const_spectral(v0, t, x) - u_const_images(v0, t, x))
            assert diff.max() <= 1e-8

    @pytest.mark.parametrize("v0", [-20.0, -4.0, 0.0, 4.0, 20.0])
    def test_satisfies_pde(self, v0):
        s = ConstDriftSolution(v0, 1.0)
        h = 2e-5
        for t, x in [(0.005, 0.3), (0.02, 0.5), (0.3, 0.7)]:
            u = lambda tt, xx: eval_u_const(s, tt, xx)
            ut = (u(t + h, x) - u(t - h, x)) / (2 * h)
            ux = (u(t, x + h) - u(t, x - h)) / (2 * h)
            uxx = (u(t, x + h) - 2 * u(t, x) + u(t, x - h)) / h**2
            assert ut - uxx - v0 * ux == pytest.approx(0.0, abs=2e-4 * (1 + abs(v0)) ** 2)

    def test_convergence_error(self):
        with pytest.raises(SeriesConvergenceError):
            u_const_spectral(0.0, 1e-6, 0.5, max_terms=5)
        with pytest.raises(SeriesConvergenceError):
            u_const_images(0.0, 50.0, 0.5, max_terms=2)


class TestEvaluation:
    @pytest.mark.parametrize("v0", [-10.0, 0.0, 10.0])
    def test_boundary_values(self, v0):
        s = ConstDriftSolution(v0, 1.0)
        for t in np.geomspace(1e-4, 1.0, 9):
            assert abs(eval_u_const(s, t, 0.0) - 1.0) <= s.spectral_tol
            assert abs(eval_u_const(s, t, 1.0)) <= s.spectral_tol

    def test_vanishes_for_small_time(self):
        s = ConstDriftSolution(0.0)
        assert np.all(eval_u_const(s, 1e-6, np.array([0.1, 0.5, 0.9])) <= 1e-10)

    def test_initial_data(self):
        s = ConstDriftSolution(1.0)
        assert eval_u_const(s, 0.0, 0.0) == 1.0
        assert eval_u_const(s, 0.0, 0.3) == 0.0

    def test_selection_rule(self):
        assert not uses_spectral(ConstDriftSolution(0.0), T_CROSS / 2)
        assert uses_spectral(ConstDriftSolution(0.0), T_CROSS)
        # strongly negative drift near the crossover amplifies the prefactor
        assert not uses_spectral(ConstDriftSolution(-40.0), T_CROSS)

    @settings(max_examples=60, deadline=None)
    @given(v0=st.floats(-30, 30), t=st.floats(1e-4, 2.0))
    def test_bounds_and_monotonicity(self, v0, t):
        s = ConstDriftSolution(v0, 2.0)
        u = eval_u_const(s, t, np.linspace(0, 1, 41))
        assert np.all((u >= 0) & (u <= 1))
        assert np.all(np.diff(u) <= 1e-12)


class TestGrid:
    def test_single_entry_matches_pointwise(self):
        s = ConstDriftSolution(1.3)
        assert eval_u_const_grid(s, [0.2], [0.4])[0, 0] == eval_u_const(s, 0.2, 0.4)

    def test_zero_drift_reflection(self):
        # u(t, x) + u(t, 1 - x) has data 1 on both sides and 0 initially
        ts, x = [0.1, 0.2], 0.25
        g = eval_u_const_grid(ConstDriftSolution(0.0), ts, [x, 1 - x])
        k = np.arange(1, 400, 2)
        two_sided = [1 - np.sum(4 / (k * np.pi) * np.exp(-((k * np.pi) ** 2) * t) * np.sin(k * np.pi * x)) for t in ts]
        np.testing.assert_allclose(g[:, 0] + g[:, 1], two_sided, atol=1e-10)

    def test_zero_drift_reflection_steady(self):
        g = eval_u_const_grid(ConstDriftSolution(0.0, 20.0), [20.0], [0.25, 0.75])
        assert g[0, 0] + g[0, 1] == pytest.approx(1.0, abs=1e-10)

    def test_rows_nonincreasing(self):
        g = eval_u_const_grid(ConstDriftSolution(-3.0), [0.001, 0.01, 0.1, 1.0], np.linspace(0, 1, 21))
        assert np.all(np.diff(g, axis=1) <= 0)

    def test_matches_pointwise_calls(self):
        s = ConstDriftSolution(2.0)
        ts, xs = [0.005, 0.05, 0.5], np.linspace(0, 1, 7)
        g = eval_u_const_grid(s, ts, xs)
        for i, t in enumerate(ts):
            assert np.array_equal(g[i], eval_u_const(s, t, xs))
