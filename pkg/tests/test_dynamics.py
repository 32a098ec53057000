"""Guidance dynamics: velocity consistency, trajectories, sampling, transport.

The velocity field is checked against a finite-difference phase-gradient
oracle; transport is checked by time reversal and by equivariance
(Kolmogorov-Smirnov against quadrature marginals at the standard 1.63/sqrt(n)
1%-level critical value).
"""

import math
import warnings

import numpy as np
import pytest
from scipy import stats

from pilotbox import (
    ConfigurationError,
    DomainError,
    Ensemble,
    IntegratorConfig,
    NodeProximityError,
    Position2D,
    StateMatrix,
    Trajectory,
    build_singlet_state,
    correlation_analytic,
    equivariance_check,
    evaluate,
    evolve,
    integrate_trajectory,
    mode_eval,
    project_half,
    propagate_ensemble,
    sample_equilibrium,
    sample_weighted,
    velocity,
)


def random_state(size, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    return StateMatrix(c / np.linalg.norm(c))


def phase_gradient_oracle(state, x1, x2, h=1e-6):
    """2 * d(arg psi)/dx_i by centered differences, the independent velocity."""
    def ang(a, b):
        return np.angle(evaluate(state, a, b).value)
    def wrap(d):
        return (d + np.pi) % (2 * np.pi) - np.pi
    g1 = wrap(ang(x1 + h, x2) - ang(x1 - h, x2)) / (2 * h)
    g2 = wrap(ang(x1, x2 + h) - ang(x1, x2 - h)) / (2 * h)
    return 2 * g1, 2 * g2


# ---------------------------------------------------------------------------
# types

def test_position_validation():
    with pytest.raises(DomainError):
        Position2D(2.0, 0.0)


def test_integrator_config_validation():
    with pytest.raises(ConfigurationError):
        IntegratorConfig(rel_tol=-1.0)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(max_step=0.0)


def test_trajectory_invariants():
    with pytest.raises(ConfigurationError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 2)),
                   np.zeros(2, int), np.zeros(2, bool))


def test_ensemble_validation():
    with pytest.raises(ConfigurationError):
        Ensemble(np.zeros((0, 2)), seed=1, weight_desc="equilibrium")


# ---------------------------------------------------------------------------
# velocity

def test_velocity_vanishes_for_singlet():
    st = build_singlet_state(2)
    v = velocity(st, Position2D(0.7, -0.3))
    assert v == (0.0, 0.0) or (v[0] == 0.0 and abs(v[1]) == 0.0)


def test_velocity_vanishes_for_real_states_at_reference_time():
    rng = np.random.default_rng(2)
    c = rng.normal(size=(6, 6))
    st = StateMatrix(c / np.linalg.norm(c))
    v = velocity(st, Position2D(0.2, 0.5))
    assert abs(v[0]) < 1e-13 and abs(v[1]) < 1e-13


def test_velocity_node_error():
    st = build_singlet_state(2)
    with pytest.raises(NodeProximityError):
        velocity(st, Position2D(0.0, 0.0))  # the state vanishes on the diagonal


def test_velocity_matches_phase_gradient_at_single_point():
    collapsed, _ = project_half(build_singlet_state(16), 1, +1)
    st = evolve(collapsed, 0.3)
    v = velocity(st, Position2D(0.5, 0.5))
    g = phase_gradient_oracle(st, 0.5, 0.5)
    assert v[0] == pytest.approx(g[0], abs=1e-6)
    assert v[1] == pytest.approx(g[1], abs=1e-6)


def test_velocity_matches_phase_gradient_at_random_points():
    collapsed, _ = project_half(build_singlet_state(12), 1, -1)
    st = evolve(collapsed, 0.4)
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 100:
        x1, x2 = rng.uniform(-1.3, 1.3, size=2)
        amp = evaluate(st, x1, x2)
        if abs(amp.value) ** 2 < 1e-3:   # skip near-node points, FD is ill-posed there
            continue
        v = velocity(st, Position2D(x1, x2))
        g = phase_gradient_oracle(st, x1, x2)
        assert abs(v[0] - g[0]) < 1e-6 * max(1, abs(v[0]))
        assert abs(v[1] - g[1]) < 1e-6 * max(1, abs(v[1]))
        checked += 1


# ---------------------------------------------------------------------------
# trajectories

def test_singlet_trajectory_exactly_constant():
    st = build_singlet_state(2)
    q0 = Position2D(0.3, -0.5)
    traj = integrate_trajectory(st, q0, 0.0, 10.0)
    assert np.all(traj.points == q0.as_array())
    assert traj.complete


def test_trajectory_time_validation():
    st = build_singlet_state(2)
    with pytest.raises(ConfigurationError):
        integrate_trajectory(st, Position2D(0.1, 0.1), 1.0, 0.0)


def test_post_collapse_trajectory_oscillates_at_beat_frequency():
    collapsed, _ = project_half(build_singlet_state(12), 1, +1)
    traj = integrate_trajectory(collapsed, Position2D(0.5, 0.3), 0.0, 2 * math.pi)
    tt = np.linspace(0.0, 2 * math.pi, 512)
    q2 = np.interp(tt, traj.times, traj.points[:, 1])
    spec = np.abs(np.fft.rfft(q2 - q2.mean()))
    assert int(np.argmax(spec[1:]) + 1) == 3   # period 2*pi/3 dominates
    assert np.abs(traj.points).max() < math.pi / 2


def test_trajectory_time_reversal():
    st = random_state(5, 3)
    q0 = Position2D(0.3, -0.4)
    fwd = integrate_trajectory(st, q0, 0.0, 1.0)
    reversed_state = StateMatrix(np.conj(evolve(st, 1.0).coeffs))
    back = integrate_trajectory(reversed_state, Position2D(*fwd.points[-1]), 0.0, 1.0)
    assert np.abs(back.points[-1] - q0.as_array()).max() < 1e-5


def test_trajectory_stays_in_box():
    st = evolve(random_state(6, 8), 0.0)
    for seed in range(3):
        rng = np.random.default_rng(seed)
        q0 = Position2D(*rng.uniform(-1.2, 1.2, 2))
        traj = integrate_trajectory(st, q0, 0.0, 3.0)
        assert np.abs(traj.points).max() <= math.pi / 2


# ---------------------------------------------------------------------------
# sampling

def test_sample_equilibrium_deterministic():
    st = build_singlet_state(2)
    a = sample_equilibrium(st, 5000, 7)
    b = sample_equilibrium(st, 5000, 7)
    assert np.array_equal(a.walkers, b.walkers)
    assert a.weight_desc == "equilibrium"
    c = sample_equilibrium(st, 5000, 8)
    assert not np.array_equal(a.walkers, c.walkers)


def test_sample_equilibrium_sign_statistics():
    st = build_singlet_state(2)
    ens = sample_equilibrium(st, 100_000, 11)
    sg = np.where(ens.walkers >= 0, 1.0, -1.0)
    n = ens.count
    assert abs(sg[:, 0].mean()) < 3.0 / math.sqrt(n)
    assert abs(sg[:, 1].mean()) < 3.0 / math.sqrt(n)
    prod = sg[:, 0] * sg[:, 1]
    target = correlation_analytic(0.0, 0.0)
    assert abs(prod.mean() - target) < 3.0 * prod.std() / math.sqrt(n)


def test_sample_count_validation():
    with pytest.raises(ConfigurationError):
        sample_equilibrium(build_singlet_state(2), 0, 1)


def test_sample_weighted_constant_matches_equilibrium():
    st = build_singlet_state(2)
    eq = sample_equilibrium(st, 10_000, 3)
    lam = sample_weighted(st, lambda x1, x2: np.ones_like(x1), 1.0, 10_000, 4,
                          lambda_id="const")
    for k in (0, 1):
        res = stats.ks_2samp(eq.walkers[:, k], lam.walkers[:, k])
        assert res.pvalue > 0.01


def test_sample_weighted_sine_shifts_mean():
    st = build_singlet_state(2)
    lam_fn = lambda x1, x2: 1.0 + 0.5 * np.sin(x2)
    ens = sample_weighted(st, lam_fn, 1.5, 40_000, 5, lambda_id="sin")
    # quadrature oracle for the weighted mean of x2
    xs = np.linspace(-math.pi / 2, math.pi / 2, 4001)
    marg = 0.5 * (mode_eval(1, xs)[0] ** 2 + mode_eval(2, xs)[0] ** 2)
    w = (1.0 + 0.5 * np.sin(xs)) * marg
    target = np.trapezoid(xs * w, xs) / np.trapezoid(w, xs)
    assert target > 0.05
    got = ens.walkers[:, 1].mean()
    stderr = ens.walkers[:, 1].std() / math.sqrt(ens.count)
    assert abs(got - target) < 4 * stderr


def test_sample_weighted_indicator_restricts_support():
    st = build_singlet_state(2)
    lam_fn = lambda x1, x2: 2.0 * (x2 > 0)
    ens = sample_weighted(st, lam_fn, 2.0, 2000, 6, lambda_id="upper")
    assert np.all(ens.walkers[:, 1] > 0)
    assert ens.weight_desc == "lambda:upper"


def test_sample_weighted_bound_violation_detected():
    st = build_singlet_state(2)
    with pytest.raises(ConfigurationError):
        sample_weighted(st, lambda x1, x2: np.full_like(x1, 3.0), 1.0, 100, 1)


# ---------------------------------------------------------------------------
# ensemble transport

def test_propagate_singlet_is_identity():
    st = build_singlet_state(2)
    ens = sample_equilibrium(st, 500, 9)
    out = propagate_ensemble(st, ens, 5.0)
    assert np.array_equal(out.walkers, ens.walkers)


def test_propagate_empty_interval_is_identity():
    collapsed, _ = project_half(build_singlet_state(8), 1, +1)
    ens = sample_equilibrium(collapsed, 200, 10)
    out = propagate_ensemble(collapsed, ens, collapsed.t0)
    assert np.array_equal(out.walkers, ens.walkers)


def test_propagate_time_validation():
    st = build_singlet_state(2)
    ens = sample_equilibrium(st, 10, 1)
    with pytest.raises(ConfigurationError):
        propagate_ensemble(st, ens, -1.0)


def test_equivariance_after_transport():
    N, n = 16, 4000
    collapsed, _ = project_half(build_singlet_state(N), 1, +1)
    ens = sample_equilibrium(collapsed, n, 12)
    cfg = IntegratorConfig(rel_tol=1e-5, abs_tol=1e-7, max_step=0.05)
    moved = propagate_ensemble(collapsed, ens, 0.5, cfg)
    ks1, ks2 = equivariance_check(evolve(collapsed, 0.5), moved)
    crit = 1.63 / math.sqrt(n)
    assert ks1 < crit and ks2 < crit
    assert not moved.failed


def test_equivariance_detects_wrong_state():
    n = 10_000
    singlet = build_singlet_state(2)
    ens = sample_equilibrium(singlet, n, 13)
    collapsed, _ = project_half(build_singlet_state(32), 1, +1)
    ks1, ks2 = equivariance_check(evolve(collapsed, 0.5), ens)
    assert ks2 > 1.63 / math.sqrt(n)


def test_equivariance_single_walker_bounded():
    st = build_singlet_state(2)
    ens = Ensemble(np.array([[0.3, -0.2]]), seed=0, weight_desc="equilibrium")
    ks1, ks2 = equivariance_check(st, ens)
    assert 0.0 <= ks1 <= 1.0 and 0.0 <= ks2 <= 1.0
