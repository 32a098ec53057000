"""Measurement experiments: two-time correlations, conditional densities,
the one-bit transmission protocol, and the oscillating-source proxy.

The Monte-Carlo correlator is checked against the operator-algebra value;
branch dynamics is cross-checked against the generic spectral velocity
field through an equivalent product state.
"""

import math
import warnings

import numpy as np
import pytest
from scipy import stats

from pilotbox import (
    ConfigurationError,
    Position2D,
    StateMatrix,
    TwoTimeProtocol,
    build_singlet_state,
    conditional_density_grid,
    correlation_analytic,
    detect_bit,
    evolve,
    mode_eval,
    operator_correlation,
    project_half,
    radiation_proxy,
    run_signalling_protocol,
    run_two_time_measurement,
    velocity,
)
from pilotbox.experiments import (
    ExperimentError,
    _branch_field,
    _conditional_coefficients,
    detection_rate,
    resolve_lambda,
)
from pilotbox.dynamics import _ks_statistic, _marginal_cdf


def stationary_marginal(x):
    return 0.5 * (mode_eval(1, x)[0] ** 2 + mode_eval(2, x)[0] ** 2)


# ---------------------------------------------------------------------------
# branch dynamics against the generic machinery

def test_branch_field_matches_generic_velocity():
    for u in (0.37, -0.9, 1.2):
        c1, c2 = _conditional_coefficients(np.array([u]))
        coeffs = np.zeros((4, 4), dtype=complex)
        coeffs[0, 0] = c1[0]
        coeffs[0, 1] = c2[0]
        parked = StateMatrix(coeffs)   # measured coordinate frozen in mode 1
        field = _branch_field(c1, c2, 1e-10)
        for x2, t in [(0.5, 0.3), (-0.8, 1.2), (1.1, 2.0)]:
            v_generic = velocity(evolve(parked, t), Position2D(0.9, x2))
            v_branch = float(field(np.array([t]), np.array([[x2]]),
                                   np.array([0]))[0][0, 0])
            assert abs(v_generic[0]) < 1e-12          # frozen coordinate is static
            assert v_branch == pytest.approx(v_generic[1], abs=1e-10)


def test_conditional_coefficients_normalised():
    u = np.linspace(-1.5, 1.5, 31)
    c1, c2 = _conditional_coefficients(u)
    assert np.abs(c1**2 + c2**2 - 1.0).max() < 1e-12


# ---------------------------------------------------------------------------
# two-time measurement

def test_protocol_validation():
    with pytest.raises(ConfigurationError):
        TwoTimeProtocol(s=1.0, t=0.5)
    with pytest.raises(ConfigurationError):
        TwoTimeProtocol(s=0.0, t=1.0, first_axis=3)
    with pytest.raises(ConfigurationError):
        TwoTimeProtocol(s=0.0, t=1.0, walkers=0)


def test_equal_time_measurement():
    est = run_two_time_measurement(TwoTimeProtocol(s=0.0, t=0.0,
                                                   walkers=20_000, seed=1))
    assert abs(est.value - correlation_analytic(0, 0)) < 3 * est.stderr
    assert est.stderr == pytest.approx(
        math.sqrt(1 - est.value**2) / math.sqrt(20_000), rel=0.1)


def test_sign_flip_at_pi_over_three():
    est = run_two_time_measurement(TwoTimeProtocol(s=0.0, t=math.pi / 3,
                                                   walkers=20_000, seed=2))
    assert abs(est.value - correlation_analytic(0, math.pi / 3)) < 3 * est.stderr
    assert est.value > 0.6


def test_zero_crossing_at_pi_over_six():
    est = run_two_time_measurement(TwoTimeProtocol(s=0.0, t=math.pi / 6,
                                                   walkers=20_000, seed=3))
    assert abs(est.value) < 3 * est.stderr


def test_first_axis_swap_matches():
    a = run_two_time_measurement(TwoTimeProtocol(s=0.0, t=0.9, walkers=20_000,
                                                 seed=4, first_axis=1))
    b = run_two_time_measurement(TwoTimeProtocol(s=0.0, t=0.9, walkers=20_000,
                                                 seed=5, first_axis=2))
    joint = math.hypot(a.stderr, b.stderr)
    assert abs(a.value - b.value) < 3 * joint


def test_nonzero_start_time_depends_only_on_difference():
    a = run_two_time_measurement(TwoTimeProtocol(s=0.0, t=0.8, walkers=10_000, seed=6))
    b = run_two_time_measurement(TwoTimeProtocol(s=1.1, t=1.9, walkers=10_000, seed=6))
    assert a.value == pytest.approx(b.value, abs=1e-12)  # same seed, same flow


def test_monte_carlo_matches_operator_algebra():
    st = build_singlet_state(2)
    for i, t in enumerate((0.0, math.pi / 2, 2 * math.pi / 3)):
        est = run_two_time_measurement(TwoTimeProtocol(s=0.0, t=t,
                                                       walkers=20_000, seed=10 + i))
        target = operator_correlation(st, 0.0, t, 8)
        assert abs(est.value - target) < 3 * est.stderr


def test_measurement_deterministic_for_fixed_seed():
    p = TwoTimeProtocol(s=0.0, t=0.5, walkers=2000, seed=9)
    assert run_two_time_measurement(p).value == run_two_time_measurement(p).value


# ---------------------------------------------------------------------------
# conditional densities

def test_conditional_density_mirror_symmetry():
    times = [0.0, 0.37, 1.1]
    plus = conditional_density_grid(+1, times, grid=161)
    minus = conditional_density_grid(-1, times, grid=161)
    assert np.abs(plus.densities - minus.densities[:, ::-1]).max() < 1e-8


def test_conditional_density_mixture_is_stationary():
    times = [0.0, 0.5, 1.7, 2 * math.pi / 3]
    sheet = conditional_density_grid(+1, times, grid=201)
    target = stationary_marginal(sheet.x2)
    for i in range(len(times)):
        assert np.abs(sheet.mixture[i] - target).max() < 1e-8


def test_conditional_density_normalised_at_every_time():
    sheet = conditional_density_grid(-1, [0.0, 0.9, 2.2], grid=801)
    for row in sheet.densities:
        total = np.trapezoid(row, sheet.x2)
        assert total == pytest.approx(1.0, abs=1e-6)


def test_conditional_density_validation():
    with pytest.raises(ConfigurationError):
        conditional_density_grid(0, [0.0])
    with pytest.raises(ConfigurationError):
        conditional_density_grid(1, [-0.1])


# ---------------------------------------------------------------------------
# signalling protocol

def test_lambda_registry():
    assert resolve_lambda("const").bound == 1.0
    assert resolve_lambda("sin").bound == 1.5
    with pytest.raises(ConfigurationError):
        resolve_lambda("nope")


def test_protocol_bit_validation():
    with pytest.raises(ConfigurationError):
        run_signalling_protocol("const", 2, 1.0, 10, 1)
    with pytest.raises(ConfigurationError):
        run_signalling_protocol("const", 0, -1.0, 10, 1)


def test_equilibrium_bit1_readings_remain_stationary():
    # the two branch flows mix back to the stationary marginal
    n = 10_000
    run = run_signalling_protocol("const", 1, math.pi / 3, n, 21)
    grid, cdf = _marginal_cdf(build_singlet_state(2), 2, 2048)
    ks = _ks_statistic(run.samples, grid, cdf)
    assert ks < 1.63 / math.sqrt(n)


def test_equilibrium_bit0_readings_are_stationary():
    n = 10_000
    run = run_signalling_protocol("const", 0, math.pi / 3, n, 22)
    grid, cdf = _marginal_cdf(build_singlet_state(2), 2, 2048)
    ks = _ks_statistic(run.samples, grid, cdf)
    assert ks < 1.63 / math.sqrt(n)


def test_nonequilibrium_bit_is_visible():
    n = 10_000
    run0 = run_signalling_protocol("sin", 0, math.pi / 3, n, 23)
    run1 = run_signalling_protocol("sin", 1, math.pi / 3, n, 24)
    res = stats.ks_2samp(run0.samples, run1.samples)
    assert res.pvalue < 0.01


def test_detect_bit_identical_samples():
    run = run_signalling_protocol("const", 0, math.pi / 3, 500, 25)
    rep = detect_bit(run, run, alpha=0.05)
    assert rep.p_value == 1.0
    assert rep.decision == "not_detected"


def test_detect_bit_decision_consistency():
    run0 = run_signalling_protocol("sin", 0, math.pi / 3, 2000, 26)
    run1 = run_signalling_protocol("sin", 1, math.pi / 3, 2000, 27)
    rep = detect_bit(run0, run1, alpha=0.05)
    assert rep.decision == ("detected" if rep.p_value < 0.05 else "not_detected")


def test_detection_power_grows_with_walkers():
    rates = []
    for n in (500, 2000, 8000):
        rate, _ = detection_rate("sin", math.pi / 3, n, 25, alpha=0.05, seed=31)
        rates.append(rate)
    assert rates[0] <= rates[1] <= rates[2]
    assert rates[2] > 0.9


# ---------------------------------------------------------------------------
# oscillating-source proxy

def test_radiation_proxy_silent_before_measurement():
    series = radiation_proxy(build_singlet_state(2), Position2D(0.4, 0.3),
                             2 * math.pi)
    assert np.all(series.velocity == 0.0)
    assert np.all(series.acceleration == 0.0)
    assert np.all(series.position == 0.3)


def test_radiation_proxy_series_shape():
    collapsed, _ = project_half(build_singlet_state(16), 1, +1)
    series = radiation_proxy(collapsed, Position2D(0.62, -0.42), 2.0, samples=256)
    assert len(series.times) == len(series.position) == 256
    assert np.all(np.diff(series.times) > 0)
    assert np.abs(series.position).max() < math.pi / 2


def test_radiation_proxy_oscillates_at_beat_frequency():
    # launch at the lobe shoulder of the initial conditional density, away
    # from the instantaneous node that sweeps the lobe centre twice per beat
    collapsed, _ = project_half(build_singlet_state(64), 1, +1)
    series = radiation_proxy(collapsed, Position2D(0.6237, -0.415), 2 * math.pi,
                             samples=1024)
    for signal in (series.position - series.position.mean(), series.acceleration):
        spec = np.abs(np.fft.rfft(signal))
        assert int(np.argmax(spec[1:]) + 1) == 3
    assert np.abs(series.velocity).max() > 0.1


def test_radiation_proxy_validation():
    with pytest.raises(ConfigurationError):
        radiation_proxy(build_singlet_state(2), Position2D(0, 0.1), -1.0)
