import math

import numpy as np
import pytest

from chordfield.chord import (
    chord_two_tap_kernel,
    dirac_kernel,
    kernel_smooth,
    shipped_causal_kernels,
    uniform_causal_kernel,
)
from chordfield.diagnostics import (
    bb_energy,
    consistency_proxy,
    global_error_sweep,
    lte_check,
    projection_energy_gap,
    risk_experiment,
    risk_experiment_symmetric,
    stability_margin,
)
from chordfield.errors import DomainError


class TestBbEnergy:
    def test_zero_fields(self):
        assert bb_energy([np.zeros(3)] * 5, 3) == 0.0

    def test_unit_coordinates(self):
        fields = [np.array([1.0, -1.0])] * 3
        assert bb_energy(fields, 2) == pytest.approx(1.0)

    def test_concatenation_identity(self):
        rng = np.random.default_rng(0)
        a = [rng.normal(size=2) for _ in range(3)]
        b = [rng.normal(size=2) for _ in range(5)]
        combined = bb_energy(a + b, 2)
        weighted = (3 * bb_energy(a, 2) + 5 * bb_energy(b, 2)) / 8
        assert combined == pytest.approx(weighted, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            bb_energy([], 2)


BOUNDS_1D = [(-1.0, 1.0)]
T_RANGE = (0.0, 1.0)


class TestConsistencyProxy:
    def test_constant_field_is_zero(self):
        c = np.array([0.7, -0.3])
        value, parts = consistency_proxy(
            lambda x, t: c, [(-1, 1), (-1, 1)], T_RANGE, 8
        )
        assert value == pytest.approx(0.0, abs=1e-12)
        assert parts[0] == pytest.approx(0.0, abs=1e-12)

    def test_time_linear_field(self):
        a = np.array([2.0, -1.0])
        value, parts = consistency_proxy(
            lambda x, t: a * t, [(-1, 1), (-1, 1)], T_RANGE, 10
        )
        assert parts[0] == pytest.approx(np.linalg.norm(a), rel=1e-9)
        assert value == pytest.approx(np.linalg.norm(a), rel=1e-6)

    def test_grid_floor(self):
        with pytest.raises(DomainError):
            consistency_proxy(lambda x, t: x, BOUNDS_1D, T_RANGE, 7)

    def test_smoothing_contracts_proxy(self):
        # time-separable field: smoothing its time profile with a causal
        # unit-mass kernel cannot increase the consistency proxy
        rng = np.random.default_rng(5)
        ds = 1.0 / 31
        kernel = uniform_causal_kernel(4, ds)
        for trial in range(20):
            count = 32 + kernel.taps - 1
            t_all = np.arange(count) * ds
            profile = np.zeros(count)
            for m in range(1, 5):
                profile += rng.normal() / m * np.sin(2 * np.pi * m * t_all)
                profile += rng.normal() / m * np.cos(2 * np.pi * m * t_all)
            series = [(float(ts), np.array([p])) for ts, p in zip(t_all, profile)]
            smoothed = kernel_smooth(series, kernel)
            sm = np.array([v[0] for _, v in smoothed])
            t0 = smoothed[0][0]

            def spatial(x):
                return np.array([math.sin(1.3 * x[0]) + 0.5 * x[0]])

            def raw_fn(x, t):
                j = int(round((t - t0) / ds))
                return spatial(x) * profile[j + kernel.taps - 1]

            def smooth_fn(x, t):
                j = int(round((t - t0) / ds))
                return spatial(x) * sm[j]

            t_range = (t0, float(smoothed[-1][0]))
            c_raw, _ = consistency_proxy(raw_fn, BOUNDS_1D, t_range, 32)
            c_smooth, _ = consistency_proxy(smooth_fn, BOUNDS_1D, t_range, 32)
            assert c_smooth <= c_raw * (1 + 1e-9)


class TestStabilityMargin:
    def test_constant_field(self):
        assert stability_margin(
            lambda x, t: np.array([1.0, 2.0]), [(-1, 1), (-1, 1)], T_RANGE, 8
        ) == pytest.approx(0.0, abs=1e-12)

    def test_affine_field_matches_jacobian_norm(self):
        j_mat = np.array([[1.0, 0.4], [-0.2, 2.0]])
        got = stability_margin(
            lambda x, t: j_mat @ x, [(-1, 1), (-1, 1)], T_RANGE, 12
        )
        assert got == pytest.approx(np.linalg.norm(j_mat, 2), rel=1e-6)

    def test_series_smoothing_never_raises_margin(self):
        rng = np.random.default_rng(9)
        ds = 1.0 / 31
        kernel = chord_two_tap_kernel(0.9, 4 * ds, ds)
        count = 40
        t_all = np.arange(count) * ds
        profile = np.sin(2 * np.pi * t_all) + 0.3 * np.cos(6 * np.pi * t_all)
        series = [(float(ts), np.array([p])) for ts, p in zip(t_all, profile)]
        smoothed = kernel_smooth(series, kernel)
        sm = np.array([v[0] for _, v in smoothed])
        t0 = smoothed[0][0]

        def raw_fn(x, t):
            j = int(round((t - t0) / ds))
            return np.array([math.tanh(x[0])]) * profile[j + kernel.taps - 1]

        def smooth_fn(x, t):
            j = int(round((t - t0) / ds))
            return np.array([math.tanh(x[0])]) * sm[j]

        t_range = (t0, float(smoothed[-1][0]))
        m_raw = stability_margin(raw_fn, BOUNDS_1D, t_range, 16)
        m_smooth = stability_margin(smooth_fn, BOUNDS_1D, t_range, 16)
        assert m_smooth <= m_raw * (1 + 1e-9)


class TestLteCheck:
    def test_constant_field_exact(self):
        obs, bound = lte_check(lambda x, t: np.array([1.0, -2.0]), np.zeros(2), 0.0, 0.2)
        assert obs <= 1e-12
        assert bound <= 1e-9

    def test_affine_field_closed_form(self):
        # dx/ds = A x + b has exact flow; the Euler remainder follows from
        # the matrix exponential series
        a_mat = np.array([[0.3, -0.8], [0.5, 0.1]])
        b = np.array([0.2, -0.1])
        x0 = np.array([0.4, 1.0])
        h = 0.05

        def fn(x, t):
            return a_mat @ x + b

        # closed form via scaling-and-squaring free series (small h)
        term = np.eye(2)
        phi1 = np.zeros((2, 2))
        acc = np.eye(2)
        fact = 1.0
        for k in range(1, 25):
            fact *= k
            term = term @ (a_mat * h)
            acc = acc + term / fact
            phi1 = phi1 + np.linalg.matrix_power(a_mat * h, k - 1) / fact
        exact = acc @ x0 + (phi1 * h) @ b
        euler = x0 + h * fn(x0, 0.0)
        expected_obs = np.linalg.norm(exact - euler)
        obs, bound = lte_check(fn, x0, 0.0, h)
        assert obs == pytest.approx(expected_obs, abs=1e-8)
        assert obs <= bound * 1.05

    def test_halving_ratio_near_four(self):
        def fn(x, t):
            return np.array([math.sin(x[0]) + 0.5, 0.3 * x[0] * x[1] - x[1]])

        x0 = np.array([0.5, 0.8])
        obs1, _ = lte_check(fn, x0, 0.0, 0.1)
        obs2, _ = lte_check(fn, x0, 0.0, 0.05)
        assert obs1 / obs2 == pytest.approx(4.0, abs=0.5)


class TestGlobalErrorSweep:
    H_VALUES = [1 / 8, 1 / 16, 1 / 32, 1 / 64]

    def test_constant_field_exact(self):
        errors, slope = global_error_sweep(
            lambda x, t: np.array([1.0]), np.zeros(1), self.H_VALUES
        )
        assert all(e <= 1e-13 for e in errors)
        assert math.isnan(slope)

    def test_first_order_convergence(self):
        def fn(x, t):
            return np.array([math.tanh(1.5 * x[0]) + 0.2, -0.5 * x[1]])

        errors, slope = global_error_sweep(fn, np.array([0.3, 1.0]), self.H_VALUES)
        assert 0.8 <= slope <= 1.2

    def test_divergent_runs_marked(self):
        # stiff decay: the true flow contracts but Euler at h = 1/8 sits far
        # outside the stability region and blows up
        def fn(x, t):
            return -100.0 * x

        errors, _ = global_error_sweep(
            fn, np.array([1.0]), self.H_VALUES, horizon=1.0, ref_steps=4096
        )
        assert math.isinf(errors[0])
        assert math.isfinite(errors[-1])

    def test_needs_enough_span(self):
        with pytest.raises(DomainError):
            global_error_sweep(
                lambda x, t: x, np.ones(1), [1 / 8, 1 / 10, 1 / 12, 1 / 16]
            )


class TestRiskExperiment:
    def test_noiseless_decomposition(self):
        t = np.arange(40) * 0.05
        u_star = np.stack([np.sin(t), np.cos(t)], axis=1)
        kernel = uniform_causal_kernel(4, 0.05)
        mse_naive, mse_chord = risk_experiment(u_star, 0.0, kernel, 100, seed=0)
        assert mse_naive == 0.0
        assert mse_chord > 0.0  # pure smoothing bias

    def test_constant_truth_variance_reduction(self):
        u_star = np.full((48, 2), 0.9)
        for name, kernel in shipped_causal_kernels(0.05).items():
            if kernel.taps == 1:
                continue
            mse_naive, mse_chord = risk_experiment(u_star, 0.3, kernel, 300, seed=1)
            assert mse_chord < mse_naive, name

    def test_naive_risk_matches_noise_level(self):
        u_star = np.full((64, 2), -1.3)
        sigma = 0.25
        trials = 400
        mse_naive, _ = risk_experiment(
            u_star, sigma, uniform_causal_kernel(4, 0.05), trials, seed=2
        )
        expected = 2 * sigma * sigma
        # chi-square spread of the mean of trials * points squared residuals
        points = 64 - 3
        se = expected * math.sqrt(2.0 / (trials * points * 2))
        assert abs(mse_naive - expected) <= 3 * se

    def test_dirac_bit_equality(self):
        t = np.arange(32) * 0.05
        u_star = np.stack([np.sin(t), t], axis=1)
        mse_naive, mse_chord = risk_experiment(
            u_star, 0.2, dirac_kernel(0.05), 128, seed=3
        )
        assert mse_naive == mse_chord

    def test_symmetric_kernel_variant_reduces_risk(self):
        u_star = np.full((64, 2), 0.4)
        mse_naive, mse_chord = risk_experiment_symmetric(
            u_star, 0.3, half_width=3, grid_step=0.05, trials=200, seed=4
        )
        assert mse_chord < mse_naive

    def test_trial_floor(self):
        with pytest.raises(DomainError):
            risk_experiment(
                np.zeros((32, 1)), 0.1, dirac_kernel(0.05), 50, seed=0
            )


def fine_series(fn, dt=1.0 / 1024):
    t = np.arange(0.0, 1.0 + dt / 2, dt)
    return np.stack([f(t) for f in fn], axis=1), dt


class TestProjectionEnergyGap:
    def test_piecewise_linear_input_exact(self):
        dt = 1.0 / 256
        t = np.arange(0.0, 1.0 + dt / 2, dt)
        u = np.abs(t - 0.5)[:, None]  # kink at an eligible knot
        eo, ep, er = projection_energy_gap(u, 0.25, dt)
        assert er <= 1e-20
        assert ep == pytest.approx(eo, rel=1e-12)

    def test_constant_input_exact(self):
        dt = 1.0 / 128
        u = np.full((129, 2), 1.5)
        eo, ep, er = projection_energy_gap(u, 0.25, dt)
        assert er <= 1e-20

    def test_pythagorean_identity_and_ordering(self):
        u, dt = fine_series([np.sin, np.cos])
        for delta in (0.25, 0.125, 0.0625):
            eo, ep, er = projection_energy_gap(u, delta, dt)
            assert ep <= eo
            assert abs((eo - ep) - er) <= 1e-10 * max(eo, 1.0)

    def test_smooth_signal_has_fourth_order_energy_rate(self):
        # classical best-approximation rate for a C^2 signal: residual
        # energy falls ~16x per halving (O(delta^4))
        u, dt = fine_series([lambda t: np.sin(2 * np.pi * t)])
        residuals = [
            projection_energy_gap(u, delta, dt)[2]
            for delta in (0.125, 0.0625, 0.03125)
        ]
        for a, b in zip(residuals, residuals[1:]):
            assert 12.0 <= a / b <= 20.0

    def test_h1_critical_signal_has_quadratic_energy_rate(self):
        # a power-law spectrum at the H^1 edge exhibits the O(delta^2)
        # residual-energy rate, i.e. ~4x per halving
        dt = 1.0 / 1024
        t = np.arange(0.0, 1.0 + dt / 2, dt)
        golden = math.pi * (3 - math.sqrt(5))
        u = np.zeros((t.size, 2))
        for f in range(1, 257):
            a = f**-1.5
            u[:, 0] += a * np.sin(2 * np.pi * f * t + golden * f)
            u[:, 1] += a * np.cos(2 * np.pi * f * t + 0.7 * golden * f)
        residuals = [
            projection_energy_gap(u, delta, dt)[2]
            for delta in (0.125, 0.0625, 0.03125)
        ]
        for a, b in zip(residuals, residuals[1:]):
            assert 3.0 <= a / b <= 5.0

    def test_indivisible_delta_rejected(self):
        u = np.zeros((101, 1))
        with pytest.raises(DomainError):
            projection_energy_gap(u, 0.3, 0.01)

    def test_too_few_samples_per_segment(self):
        u = np.zeros((5, 1))
        with pytest.raises(DomainError):
            projection_energy_gap(u, 0.25, 0.25)
