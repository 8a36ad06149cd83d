"""Integration machinery: accuracy, switching, convergence/peaks/Lyapunov."""

import math

import numpy as np
import pytest

from posctrl.equilibrium import solve_constant_input
from posctrl.errors import PositivityError
from posctrl.expr import parse_model_file
from posctrl.model import ConstantInput, Scenario
from posctrl.sim import (
    IntegratorConfig,
    Trajectory,
    default_config,
    detect_convergence,
    integrate,
    largest_lyapunov_exponent,
    peak_amplitudes,
    resume_config,
)


def make_trajectory(times, states, inputs=None):
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if inputs is None:
        inputs = np.zeros(times.size)
    return Trajectory(times=times, states=states, inputs=inputs,
                      scenario=Scenario.open_loop(0.0), model="synthetic")


class TestAccuracy:
    def test_rk4_linear_decay(self, linear_decay_1d):
        cfg = IntegratorConfig(method="fixed_rk4", h=0.01, dt_out=0.1)
        tr = integrate(linear_decay_1d, Scenario.open_loop(1.0), [1.0], 0.0, 1.0, cfg)
        assert abs(tr.states[-1, 0] - math.exp(-1.0)) < 1e-9

    def test_rk4_fourth_order_convergence(self, s3):
        sc = Scenario.closed_loop(1.73)
        x0 = [1.0, 1.0, 1.0]
        ref_cfg = IntegratorConfig(rtol=1e-12, atol=1e-14, dt_out=10.0)
        ref = integrate(s3, sc, x0, 0.0, 10.0, ref_cfg).states[-1]
        errs = []
        # steps small enough that the fast initial transient (rates ~ 1/k1)
        # is inside the asymptotic regime
        for h in (0.005, 0.0025):
            cfg = IntegratorConfig(method="fixed_rk4", h=h, dt_out=10.0)
            end = integrate(s3, sc, x0, 0.0, 10.0, cfg).states[-1]
            errs.append(np.max(np.abs(end - ref)))
        ratio = errs[0] / errs[1]
        assert 8.0 <= ratio <= 32.0, (errs, ratio)

    def test_adaptive_matches_tight_reference(self, s2):
        sc = Scenario.open_loop(1.0)
        tight = integrate(s2, sc, [0.5, 0.5, 0.5], 0.0, 20.0,
                          IntegratorConfig(rtol=1e-11, atol=1e-13, h_max=0.05))
        loose = integrate(s2, sc, [0.5, 0.5, 0.5], 0.0, 20.0)
        assert np.max(np.abs(tight.states[-1] - loose.states[-1])) < 1e-5

    def test_s3_closed_loop_reaches_equilibrium(self, s3):
        tr = integrate(s3, Scenario.closed_loop(1.73), [1.0, 1.0, 1.0], 0.0, 200.0)
        target = [0.4985032292209349, 1.0765379113018596, 1.6365379113018599]
        assert np.max(np.abs(tr.states[-1] - target)) < 1e-4


class TestOutputGridAndStats:
    def test_grid_is_multiples_of_dt_out(self, s1):
        tr = integrate(s1, Scenario.open_loop(0.25), [1.0, 1.0], 0.0, 1.0)
        np.testing.assert_allclose(tr.times, np.arange(21) * 0.05, atol=1e-12)

    def test_final_time_appended_when_off_grid(self, s1):
        cfg = resume_config(default_config(s1), dt_out=0.3)
        tr = integrate(s1, Scenario.open_loop(0.25), [1.0, 1.0], 0.0, 1.0, cfg)
        assert tr.times[-1] == 1.0
        np.testing.assert_allclose(tr.times[:-1], [0.0, 0.3, 0.6, 0.9], atol=1e-12)

    def test_stats_populated(self, s3):
        tr = integrate(s3, Scenario.open_loop(1.0), [1.0, 1.0, 1.0], 0.0, 20.0)
        assert tr.steps > 100
        assert tr.rejected >= 0

    def test_validation(self, s1):
        with pytest.raises(ValueError):
            integrate(s1, Scenario.open_loop(0.25), [-0.1, 1.0], 0.0, 1.0)
        with pytest.raises(ValueError):
            integrate(s1, Scenario.open_loop(0.25), [1.0, 1.0], 1.0, 1.0)
        with pytest.raises(ValueError):
            integrate(s1, Scenario.open_loop(0.25), [1.0], 0.0, 1.0)


class TestSwitched:
    def test_phase_states_bitwise_identical(self, s2):
        sc = Scenario.switched(1.0, 2.0, 40.0)
        tr = integrate(s2, sc, [0.5, 0.5, 0.5], 0.0, 60.0)
        # phase 1 alone, then phase 2 restarted from the recorded switch state
        tr1 = integrate(s2, Scenario.open_loop(1.0), [0.5, 0.5, 0.5], 0.0, 40.0)
        x_switch = tr.states[tr.times == 40.0][0]
        np.testing.assert_array_equal(x_switch, tr1.states[-1])
        tr2 = integrate(s2, Scenario.closed_loop(2.0), x_switch, 40.0, 60.0)
        # the standalone run emits bitwise-identical states at the handover;
        # later rows may differ by output-grid rounding (40 + 0.05k vs 0.05k)
        np.testing.assert_array_equal(tr2.states[0], x_switch)
        tail = tr.states[tr.times >= 40.0]
        assert np.max(np.abs(tail - tr2.states)) < 1e-13

    def test_input_column_switches(self, s2):
        sc = Scenario.switched(1.0, 2.0, 40.0)
        tr = integrate(s2, sc, [0.5, 0.5, 0.5], 0.0, 60.0)
        before = tr.inputs[tr.times < 40.0]
        np.testing.assert_array_equal(before, np.ones(before.size))
        after_mask = tr.times >= 40.0
        psi_after = np.array([s2.psi(x) for x in tr.states[after_mask]])
        np.testing.assert_array_equal(tr.inputs[after_mask], 2.0 * psi_after)

    def test_switch_outside_span(self, s2):
        # switch before the window: the whole run is closed-loop
        sc = Scenario.switched(1.0, 2.0, 0.0)
        tr = integrate(s2, sc, [0.5, 0.5, 0.5], 0.0, 5.0)
        direct = integrate(s2, Scenario.closed_loop(2.0), [0.5, 0.5, 0.5], 0.0, 5.0)
        np.testing.assert_array_equal(tr.states, direct.states)

    def test_settles_to_closed_loop_equilibrium(self, s2):
        sc = Scenario.switched(1.0, 2.0, 40.0)
        tr = integrate(s2, sc, [0.5, 0.5, 0.5], 0.0, 120.0)
        target = solve_constant_input(s2, 2.0).x_star
        assert np.max(np.abs(tr.states[-1] - target)) < 1e-5


class TestDetectConvergence:
    def test_constant_trajectory(self):
        tr = make_trajectory(np.linspace(0, 10, 101), np.ones((101, 2)))
        np.testing.assert_array_equal(detect_convergence(tr, 1e-12, 5.0), [1.0, 1.0])

    def test_limit_cycle_returns_none(self, s2):
        tr = integrate(s2, Scenario.open_loop(1.0), [0.5, 0.5, 0.5], 0.0, 300.0)
        assert detect_convergence(tr, 1e-3, 20.0) is None

    def test_s1_closed_loop_limit(self, s1):
        tr = integrate(s1, Scenario.closed_loop(0.25), [0.5, 0.5], 0.0, 150.0)
        limit = detect_convergence(tr, 1e-6, 10.0)
        assert limit is not None
        np.testing.assert_allclose(limit, [1.0, 4.0], atol=1e-6)

    def test_window_precondition(self):
        tr = make_trajectory(np.linspace(0, 1, 11), np.ones((11, 1)))
        with pytest.raises(ValueError):
            detect_convergence(tr, 1e-6, 2.0)


class TestLyapunov:
    def test_linear_decay_rate(self, linear_decay_1d):
        lam = largest_lyapunov_exponent(linear_decay_1d, Scenario.open_loop(1.0),
                                        [1.0], 5.0, 50.0, 1.0)
        assert abs(lam + 1.0) < 0.02

    def test_stable_closed_loop_negative(self, s1):
        lam = largest_lyapunov_exponent(s1, Scenario.closed_loop(0.25),
                                        [2.0, 2.0], 50.0, 100.0, 1.0)
        assert lam < 0.0

    def test_switched_rejected(self, s3):
        with pytest.raises(ValueError):
            largest_lyapunov_exponent(s3, Scenario.switched(1.0, 1.73, 20.0),
                                      [1.0, 1.0, 1.0], 10.0, 10.0, 1.0)


class TestPeaks:
    def test_sine_peaks(self):
        t = np.arange(0.0, 20.0, 0.01)
        tr = make_trajectory(t, np.sin(t)[:, None])
        peaks = peak_amplitudes(tr, 0)
        assert len(peaks) == 3
        for k, (tp, vp) in enumerate(peaks):
            assert abs(vp - 1.0) < 1e-3
            assert abs(tp - (math.pi / 2 + 2 * math.pi * k)) < 1e-3

    def test_monotone_empty(self):
        t = np.linspace(0, 1, 50)
        tr = make_trajectory(t, np.exp(-t)[:, None])
        assert peak_amplitudes(tr, 0) == []

    def test_needs_three_samples(self):
        tr = make_trajectory([0.0, 1.0], np.ones((2, 1)))
        with pytest.raises(ValueError):
            peak_amplitudes(tr, 0)


class TestPositivity:
    def test_s3_comparison_field_from_origin_strictly_positive(self, s3):
        tr = integrate(s3, ConstantInput(2.0), np.zeros(3), 0.0, 50.0)
        assert np.all(tr.states[1:] > 0.0)
        assert np.min(tr.states) >= 0.0

    def test_outward_field_raises(self):
        m = parse_model_file("system bad\ndim 1\nf1 = 0*x1 - 1\nc = [0]\npsi = 1\n")
        with pytest.raises(PositivityError):
            integrate(m, Scenario.open_loop(1.0), [0.5], 0.0, 5.0)

    def test_shipped_scenarios_stay_nonnegative(self, s1, s2, s3):
        runs = [
            (s1, Scenario.open_loop(0.25), [0.05, 6.0], 60.0),
            (s2, Scenario.open_loop(1.0), [0.5, 0.5, 0.5], 100.0),
            (s2, Scenario.switched(1.0, 2.0, 40.0), [0.5, 0.5, 0.5], 120.0),
            (s3, Scenario.open_loop(1.0), [1.0, 1.0, 1.0], 100.0),
            (s3, Scenario.switched(1.0, 1.7304193189656627, 20.0),
             [1.0, 1.0, 1.0], 100.0),
        ]
        for m, sc, x0, T in runs:
            tr = integrate(m, sc, x0, 0.0, T)
            assert np.min(tr.states) >= -1e-7


class TestBackendEquivalence:
    def test_python_fallback_matches_compiled(self, s3, monkeypatch):
        from posctrl import _core

        if not _core.compiled_available():
            pytest.skip("compiled kernel not built")
        sc = Scenario.closed_loop(1.73)
        tr_c = integrate(s3, sc, [1.0, 1.0, 1.0], 0.0, 20.0)
        monkeypatch.setattr(_core, "_FORCE_PYTHON", True)
        tr_p = integrate(s3, sc, [1.0, 1.0, 1.0], 0.0, 20.0)
        assert np.max(np.abs(tr_c.states - tr_p.states)) < 1e-10
