"""The box experiments, end to end: two-time sign correlations, the one-bit
transmission protocol under equilibrium and non-equilibrium knowledge,
conditional-density sheets, and an oscillating-source proxy.

Measurement model.  A "which half?" measurement of one coordinate is taken
per walker: the walker's own sign selects the branch, and the free
coordinate is then guided by its conditional branch state -- the two-mode
wavefunction obtained by freezing the measured coordinate at the walker's
position, with the measured particle decoupled from there on (observables
of the two coordinates commute, so its later motion cannot influence the
readout).  Mixing the branch flows over the sampled positions reproduces
the exact reduced dynamics of the free particle, so readout statistics are
unbiased while the integration stays smooth: the branch field oscillates at
the two-mode beat, not at the truncation cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import defaults
from .dynamics import (
    Ensemble,
    IntegratorConfig,
    _advance_batch,
    integrate_trajectory,
    sample_weighted,
)
from .spectral import (
    BOX_HALF_WIDTH,
    ConfigurationError,
    StateMatrix,
    _axis_density_matrix,
    _marginal_from_matrix,
    build_singlet_state,
    project_half,
)


class ExperimentError(RuntimeError):
    """An experiment could not produce a trustworthy estimate."""


# ---------------------------------------------------------------------------
# non-equilibrium weights

@dataclass(frozen=True)
class LambdaField:
    """A bounded multiplicative reweighting of the equilibrium density."""

    lambda_id: str
    fn: object          # vectorised (x1, x2) -> weights
    bound: float


def _lambda_const(x1, x2):
    return np.ones_like(np.asarray(x1, dtype=float))


def _lambda_sin(x1, x2):
    return 1.0 + 0.5 * np.sin(np.asarray(x2, dtype=float))


LAMBDA_FIELDS = {
    "const": LambdaField("const", _lambda_const, 1.0),
    "sin": LambdaField("sin", _lambda_sin, 1.5),
}


def resolve_lambda(lambda_id) -> LambdaField:
    if isinstance(lambda_id, LambdaField):
        return lambda_id
    try:
        return LAMBDA_FIELDS[lambda_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown lambda id {lambda_id!r}; known: {sorted(LAMBDA_FIELDS)}")


# ---------------------------------------------------------------------------
# conditional branch dynamics

def _conditional_coefficients(u: np.ndarray):
    """Two-mode coefficients of the free coordinate given the measured one.

    Freezing the entangled pair state at measured coordinate u leaves
    c1 * mode1 + c2 * mode2 for the free coordinate with (c1, c2)
    proportional to (-sin(2u), cos(u)); both are real at the collapse
    instant.
    """
    u = np.asarray(u, dtype=float)
    c1 = -np.sin(2.0 * u)
    c2 = np.cos(u)
    nrm = np.hypot(c1, c2)
    if np.any(nrm == 0):
        raise ExperimentError("conditional state vanishes at a measured point")
    return c1 / nrm, c2 / nrm


def _branch_field(c1: np.ndarray, c2: np.ndarray, node_floor: float):
    """Guidance field of per-walker two-mode branch states.

    Time is measured from the collapse; mode energies 1 and 4 leave a single
    beat frequency 3.  The model-level density includes the 2/pi mode
    normalisation so the node floor means the same thing as elsewhere.
    """
    scale = 2.0 / math.pi
    bare_floor = node_floor / scale

    def fieldfn(t, y, idx):
        x = y[:, 0]
        a1 = c1[idx]
        a2 = c2[idx]
        u1 = a1 * np.cos(x)
        u2 = a2 * np.sin(2.0 * x)
        d1 = -a1 * np.sin(x)
        d2 = 2.0 * a2 * np.cos(2.0 * x)
        c3 = np.cos(3.0 * t)
        s3 = np.sin(3.0 * t)
        bare = u1 * u1 + u2 * u2 + 2.0 * u1 * u2 * c3
        v = 2.0 * s3 * (u2 * d1 - u1 * d2) / np.maximum(bare, bare_floor)
        return v[:, None], scale * bare

    return fieldfn


def _propagate_branch(c1, c2, x0, horizon: float, cfg: IntegratorConfig):
    """Advance free-coordinate positions under their branch states.

    Returns (positions, failed_count) after ``horizon`` time units past the
    collapse.
    """
    fieldfn = _branch_field(np.asarray(c1, float), np.asarray(c2, float),
                            cfg.node_floor)
    y, info = _advance_batch(fieldfn, np.asarray(x0, float)[:, None],
                             0.0, float(horizon), cfg)
    return y[:, 0], int(info.failed.sum())


def _sign(x: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# two-time measurement

@dataclass(frozen=True)
class TwoTimeProtocol:
    """First measurement at s on one coordinate, second at t on the other."""

    s: float
    t: float
    first_axis: int = 1
    walkers: int = defaults.WALKERS
    seed: int = defaults.SEED

    def __post_init__(self):
        if not (self.t >= self.s >= 0):
            raise ConfigurationError("need t >= s >= 0")
        if self.first_axis not in (1, 2):
            raise ConfigurationError("first_axis must be 1 or 2")
        if self.walkers < 1:
            raise ConfigurationError("walkers must be >= 1")


@dataclass(frozen=True)
class CorrelationEstimate:
    """Monte-Carlo estimate of the product of the two sign readouts."""

    value: float
    stderr: float
    walkers: int

    def __post_init__(self):
        if abs(self.value) > 1.0:
            raise ConfigurationError("a product of signs cannot exceed 1")


def run_two_time_measurement(proto: TwoTimeProtocol,
                             cfg: IntegratorConfig | None = None) -> CorrelationEstimate:
    """Estimate E[a b] for sign readouts at times s and t.

    Walkers are drawn from the stationary pair density (so positions at s
    equal the initial ones); the first readout a selects the branch, the
    free coordinate rides its conditional state until t, giving b.
    """
    cfg = cfg or IntegratorConfig()
    state = build_singlet_state(2)
    lam = LAMBDA_FIELDS["const"]
    ens = sample_weighted(state, lam.fn, lam.bound, proto.walkers, proto.seed,
                          lambda_id=lam.lambda_id)
    measured = ens.walkers[:, proto.first_axis - 1]
    free = ens.walkers[:, 2 - proto.first_axis]
    a = _sign(measured)
    if proto.t > proto.s:
        c1, c2 = _conditional_coefficients(measured)
        free, failed = _propagate_branch(c1, c2, free, proto.t - proto.s, cfg)
        if failed > 1e-3 * proto.walkers:
            raise ExperimentError(f"{failed} walkers failed propagation")
    b = _sign(free)
    prod = a * b
    value = float(prod.mean())
    stderr = float(prod.std(ddof=1) / math.sqrt(proto.walkers)) if proto.walkers > 1 else 1.0
    return CorrelationEstimate(value=value, stderr=stderr, walkers=proto.walkers)


# ---------------------------------------------------------------------------
# conditional densities

@dataclass(frozen=True)
class ConditionalDensityGrid:
    """Free-particle densities after a half-box measurement, over time."""

    side: int
    times: np.ndarray
    x2: np.ndarray
    densities: np.ndarray   # shape (len(times), len(x2))
    mixture: np.ndarray     # same shape; branch-probability-weighted sum


def _collapsed_axis2_density(side: int, times, x2, N: int) -> np.ndarray:
    state = build_singlet_state(N)
    collapsed, _ = project_half(state, 1, side)
    dm0 = _axis_density_matrix(collapsed, axis=2)
    n2 = np.arange(1, N + 1, dtype=float) ** 2
    out = np.empty((len(times), len(x2)))
    for i, t in enumerate(times):
        ph = np.exp(-1j * n2 * t)
        out[i] = _marginal_from_matrix(dm0 * np.outer(ph, ph.conj()), x2)
    return out


def conditional_density_grid(side: int, times, grid: int = 241,
                             N: int = defaults.BASIS_SIZE) -> ConditionalDensityGrid:
    """Density of the unmeasured coordinate over a (time, position) grid,
    plus the probability-weighted mixture of the two measurement branches."""
    if side not in (1, -1):
        raise ConfigurationError("side must be +1 or -1")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ConfigurationError("times must be nonnegative")
    x2 = np.linspace(-BOX_HALF_WIDTH, BOX_HALF_WIDTH, int(grid))
    dens = _collapsed_axis2_density(side, times, x2, N)
    other = _collapsed_axis2_density(-side, times, x2, N)
    mixture = 0.5 * (dens + other)
    return ConditionalDensityGrid(side=side, times=times, x2=x2,
                                  densities=dens, mixture=mixture)


# ---------------------------------------------------------------------------
# one-bit transmission protocol

@dataclass(frozen=True)
class SignalRun:
    """Receiving-side position readings for one transmitted bit."""

    bit: int
    lambda_id: str
    read_time: float
    samples: np.ndarray
    seed: int
    walkers: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if np.any(np.abs(s) > BOX_HALF_WIDTH):
            raise ConfigurationError("readings outside the box")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class DetectionReport:
    """Two-sample comparison of the readings of two runs."""

    ks_statistic: float
    p_value: float
    decision: str          # "detected" | "not_detected"
    alpha: float
    power_estimate: float = float("nan")   # filled by callers over many trials

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ConfigurationError("p_value must lie in [0, 1]")
        expected = "detected" if self.p_value < self.alpha else "not_detected"
        if self.decision != expected:
            raise ConfigurationError("decision inconsistent with alpha")


def run_signalling_protocol(lambda_id, bit: int, read_time: float,
                            walkers: int = defaults.WALKERS,
                            seed: int = defaults.SEED,
                            cfg: IntegratorConfig | None = None) -> SignalRun:
    """One transmission: the sender either leaves the pair alone (bit 0) or
    measures its half-box observable (bit 1, outcome kept private), and the
    receiver reads the free coordinate after ``read_time``.

    The receiver's prior knowledge is the density lambda |psi|^2.
    """
    if bit not in (0, 1):
        raise ConfigurationError("bit must be 0 or 1")
    if read_time <= 0:
        raise ConfigurationError("read_time must be positive")
    cfg = cfg or IntegratorConfig()
    lam = resolve_lambda(lambda_id)
    state = build_singlet_state(2)
    ens = sample_weighted(state, lam.fn, lam.bound, walkers, seed,
                          lambda_id=lam.lambda_id)
    if bit == 0:
        # stationary state, zero velocity: readings are the initial positions
        readings = ens.walkers[:, 1]
    else:
        measured = ens.walkers[:, 0]
        c1, c2 = _conditional_coefficients(measured)
        readings, failed = _propagate_branch(c1, c2, ens.walkers[:, 1],
                                             read_time, cfg)
        if failed > 1e-3 * walkers:
            raise ExperimentError(f"{failed} walkers failed propagation")
    return SignalRun(bit=bit, lambda_id=lam.lambda_id, read_time=float(read_time),
                     samples=readings, seed=int(seed), walkers=int(walkers))


def detect_bit(run0: SignalRun, run1: SignalRun,
               alpha: float = defaults.ALPHA) -> DetectionReport:
    """Two-sample KS test between the reading sets of two runs."""
    if len(run0.samples) == 0 or len(run1.samples) == 0:
        raise ConfigurationError("both runs must contain readings")
    res = stats.ks_2samp(run0.samples, run1.samples)
    decision = "detected" if res.pvalue < alpha else "not_detected"
    return DetectionReport(ks_statistic=float(res.statistic),
                           p_value=float(res.pvalue),
                           decision=decision, alpha=float(alpha))


def detection_rate(lambda_id, read_time: float, walkers: int, trials: int,
                   alpha: float = defaults.ALPHA, seed: int = defaults.SEED,
                   cfg: IntegratorConfig | None = None):
    """Fraction of seeded trial pairs (bit 0 vs bit 1) flagged as detected."""
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    trial_seeds = rng.integers(0, 2**62, size=(trials, 2))
    reports = []
    for s0, s1 in trial_seeds:
        run0 = run_signalling_protocol(lambda_id, 0, read_time, walkers,
                                       int(s0), cfg)
        run1 = run_signalling_protocol(lambda_id, 1, read_time, walkers,
                                       int(s1), cfg)
        reports.append(detect_bit(run0, run1, alpha))
    rate = float(np.mean([r.decision == "detected" for r in reports]))
    return rate, reports


# ---------------------------------------------------------------------------
# oscillating-source proxy

@dataclass(frozen=True)
class DipoleSeries:
    """Free-coordinate motion of one walker as a point-source time series."""

    times: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.position) == len(self.velocity) == len(self.acceleration) == n):
            raise ConfigurationError("series lengths differ")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("times must be strictly increasing")


def radiation_proxy(state_after_collapse: StateMatrix, q0, horizon: float,
                    cfg: IntegratorConfig | None = None,
                    samples: int = 1024) -> DipoleSeries:
    """Single-walker source series: position, guidance velocity and its
    finite-difference acceleration on a uniform time grid.

    A stationary real state yields the all-zero series (the walker would only
    source a static field); a post-measurement state makes the free
    coordinate oscillate at the two-mode beat.
    """
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    cfg = cfg or IntegratorConfig()
    q = q0.as_array() if hasattr(q0, "as_array") else np.asarray(q0, dtype=float)
    times = np.linspace(0.0, float(horizon), int(samples))

    if state_after_collapse.is_stationary():
        zeros = np.zeros_like(times)
        return DipoleSeries(times, np.full_like(times, q[1]), zeros, zeros.copy())

    rec = state_after_collapse.projection
    if rec is not None:
        measured_value = q[rec.axis - 1]
        x = np.array([q[2 - rec.axis]])
        c1, c2 = _conditional_coefficients(np.array([measured_value]))
        fieldfn = _branch_field(c1, c2, cfg.node_floor)
        pos = np.empty_like(times)
        vel = np.empty_like(times)
        pos[0] = x[0]
        vel[0] = float(fieldfn(np.array([0.0]), x[:, None], np.array([0]))[0][0, 0])
        for i in range(1, len(times)):
            x, info = _advance_batch(fieldfn, x[:, None], times[i - 1], times[i], cfg)
            x = x[:, 0]
            if info.failed[0]:
                raise ExperimentError("source trajectory failed to integrate")
            pos[i] = x[0]
            vel[i] = float(fieldfn(np.array([times[i]]), x[:, None], np.array([0]))[0][0, 0])
    else:
        traj = integrate_trajectory(state_after_collapse, q,
                                    state_after_collapse.t0,
                                    state_after_collapse.t0 + horizon, cfg)
        pos = np.interp(times, traj.times - traj.times[0], traj.points[:, 1])
        vel = np.gradient(pos, times)

    acc = np.gradient(vel, times)
    return DipoleSeries(times, pos, vel, acc)
