"""Pressing-bench simulator: contact law, stiffness field, scan protocol."""

import numpy as np
import pytest

from it2pf.core import ParameterError
from it2pf.envsim import (
    GaussianBump,
    PressProtocol,
    SiliconeEnv,
    contact_force,
    default_env,
    generate_benchmark,
    generate_benchmark_ticks,
    generate_trial,
)


class TestContactForce:
    def test_no_penetration_no_force(self):
        env = SiliconeEnv()
        F = contact_force(env, [0.1, 0.1, 0.002], [0.0, 0.0, -0.1])
        assert np.array_equal(F, np.zeros(3))

    def test_surface_contact_exactly_zero(self):
        env = SiliconeEnv()
        F = contact_force(env, [0.1, 0.1, 0.0], [0.0, 0.0, -0.1])
        assert np.array_equal(F, np.zeros(3))

    def test_static_press_hertzian_value(self):
        # k d^eta with k=1000, d=0.01, eta=1.5 -> exactly 1 N
        env = SiliconeEnv(base_stiffness=1000.0, damping=5.0, exponent=1.5)
        F = contact_force(env, [0.1, 0.1, -0.01], [0.0, 0.0, 0.0])
        assert F[0] == 0.0 and F[1] == 0.0
        assert np.isclose(F[2], 1000.0 * 0.01 ** 1.5, rtol=1e-12)

    def test_damping_adds_rate_term(self):
        env = SiliconeEnv(base_stiffness=1000.0, damping=50.0, exponent=1.5)
        d = 0.01
        vz = -0.2  # pressing down
        F = contact_force(env, [0.1, 0.1, -d], [0.0, 0.0, vz])
        expect = 1000.0 * d ** 1.5 + 50.0 * d ** 1.5 * (-vz)
        assert np.isclose(F[2], expect, rtol=1e-12)

    def test_fast_retraction_clamps_to_zero(self):
        env = SiliconeEnv(base_stiffness=100.0, damping=1000.0, exponent=1.5)
        F = contact_force(env, [0.1, 0.1, -0.01], [0.0, 0.0, 5.0])
        assert F[2] == 0.0

    def test_stiffness_field_at_bump_center(self):
        bump = GaussianBump(200.0, (0.05, 0.05), 0.04)
        env = SiliconeEnv(base_stiffness=800.0, bumps=(bump,))
        assert np.isclose(env.stiffness(0.05, 0.05), 1000.0, rtol=1e-12)
        # far from the bump the field returns to the base value
        assert np.isclose(env.stiffness(1.0, 1.0), 800.0, rtol=1e-9)

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            SiliconeEnv(damping=-1.0)
        with pytest.raises(ParameterError):
            SiliconeEnv(exponent=0.5)
        with pytest.raises(ParameterError):
            GaussianBump(1.0, (0.0, 0.0), 0.0)
        with pytest.raises(ParameterError):
            SiliconeEnv(base_stiffness=100.0,
                        bumps=(GaussianBump(-200.0, (0.0, 0.0), 0.1),))


class TestProtocol:
    def test_protocol_validation(self):
        with pytest.raises(ParameterError):
            PressProtocol(depths=(0.005, 0.002))
        with pytest.raises(ParameterError):
            PressProtocol(depths=(-0.001, 0.002))
        with pytest.raises(ParameterError):
            PressProtocol(trials_per_level=0)
        with pytest.raises(ParameterError):
            PressProtocol(dt=0.0)

    def test_invalid_level(self):
        with pytest.raises(ParameterError):
            generate_trial(default_env(), PressProtocol(), 3, (0.1, 0.1), 0)

    def test_trial_is_deterministic_per_seed(self):
        env, proto = default_env(), PressProtocol()
        a = generate_trial(env, proto, 1, (0.1, 0.1), seed=42)
        b = generate_trial(env, proto, 1, (0.1, 0.1), seed=42)
        for u, w in zip(a, b):
            assert np.array_equal(u, w)
        c = generate_trial(env, proto, 1, (0.1, 0.1), seed=43)
        assert not np.array_equal(a[1], c[1])

    def test_recorded_velocity_is_central_difference(self):
        env, proto = default_env(), PressProtocol()
        _, X, V, _ = generate_trial(env, proto, 0, (0.1, 0.1), seed=0)
        dt = proto.dt
        inner = (X[2:] - X[:-2]) / (2 * dt)
        assert np.allclose(V[1:-1], inner, atol=1e-12)
        assert np.allclose(V[0], (X[1] - X[0]) / dt, atol=1e-12)
        assert np.allclose(V[-1], (X[-1] - X[-2]) / dt, atol=1e-12)

    def test_noiseless_trial_matches_contact_law(self):
        env = default_env()
        proto = PressProtocol(position_noise=0.0, force_noise=0.0)
        _, X, V, Y = generate_trial(env, proto, 2, (0.05, 0.05), seed=0)
        Vtrue = np.zeros_like(V)
        Vtrue[:, 2] = V[:, 2]
        for k in range(0, X.shape[0], 10):
            F = contact_force(env, X[k], [0.0, 0.0, V[k, 2]])
            assert np.isclose(Y[k, 0], F[2], atol=1e-9)

    def test_default_scan_has_150_trials(self):
        ds = generate_benchmark(default_env(), PressProtocol())
        assert ds.trials().shape[0] == 150
        assert ds.n == 3 and ds.m == 1

    def test_deeper_press_means_larger_peak_force(self):
        env = SiliconeEnv(base_stiffness=800.0)
        proto = PressProtocol(position_noise=0.0, force_noise=0.0)
        peaks = []
        for level in range(3):
            _, _, _, Y = generate_trial(env, proto, level, (0.1, 0.1), seed=0)
            peaks.append(Y.max())
        assert peaks[0] < peaks[1] < peaks[2]

    def test_benchmark_ticks_deterministic(self):
        env = default_env()
        proto = PressProtocol(trials_per_level=2)
        a = generate_benchmark_ticks(env, proto)
        b = generate_benchmark_ticks(env, proto)
        for u, w in zip(a, b):
            assert np.array_equal(u, w)

    def test_trial_ids_cover_levels(self):
        proto = PressProtocol(trials_per_level=4)
        _, tid, _, _, _ = generate_benchmark_ticks(default_env(), proto)
        assert set(np.unique(tid)) == set(range(12))
