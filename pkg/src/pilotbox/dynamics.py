"""Guidance-law dynamics over the box: velocity field, adaptive trajectory
integration with node handling, and ensemble sampling / transport.

The guiding velocity is v = 2 Im(grad psi / psi).  It vanishes at the
Dirichlet walls, so trajectories cannot leave the box; near wavefunction
nodes it is singular, which the integrator meets with step clamping rather
than failure (equilibrium-distributed walkers hit exact nodes with
probability zero).  Stepping uses an embedded Cash-Karp 4(5) pair,
vectorised across walkers with an individual adaptive step per walker, so
ensembles and single trajectories share one code path and one seed gives
bit-identical results regardless of batching.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    BOX_HALF_WIDTH,
    ConfigurationError,
    DomainError,
    StateMatrix,
    _basis_block,
    _coeff_density_matrix,
    _density_grid,
    _density_many,
    _evaluate_many,
    _marginal_from_matrix,
)


class NodeProximityError(RuntimeError):
    """The wavefunction density at the requested point is below the node floor."""


class IntegrationFailureError(RuntimeError):
    """Step-size underflow; carries the partial trajectory on ``.trajectory``."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class PropagationError(RuntimeError):
    """Too many walkers of an ensemble failed to integrate."""


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class Position2D:
    """A point inside the closed box."""

    x1: float
    x2: float

    def __post_init__(self):
        if abs(self.x1) > BOX_HALF_WIDTH or abs(self.x2) > BOX_HALF_WIDTH:
            raise DomainError("position outside the box")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and guards for the adaptive stepper."""

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_step: float = 0.1
    node_floor: float = 1e-10
    boundary_margin: float = 1e-9

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "node_floor", "boundary_margin"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass
class Trajectory:
    """Accepted integration steps of one walker with per-step diagnostics."""

    times: np.ndarray
    points: np.ndarray             # shape (len(times), 2)
    rejections: np.ndarray         # rejected attempts before each accepted step
    node_events: np.ndarray        # step crossed a low-density region
    complete: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("trajectory times must be strictly increasing")
        if np.any(np.abs(self.points) > BOX_HALF_WIDTH):
            raise DomainError("trajectory point outside the box")


@dataclass
class Ensemble:
    """Walker positions with RNG provenance."""

    walkers: np.ndarray            # shape (count, 2)
    seed: int
    weight_desc: str
    failed: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        w = np.asarray(self.walkers, dtype=float)
        if w.ndim != 2 or w.shape[1] != 2 or w.shape[0] < 1:
            raise ConfigurationError("walkers must be a nonempty (count, 2) array")
        if np.any(np.abs(w) > BOX_HALF_WIDTH):
            raise DomainError("walker outside the box")
        w.setflags(write=False)
        self.walkers = w

    @property
    def count(self) -> int:
        return self.walkers.shape[0]


# ---------------------------------------------------------------------------
# velocity field

def velocity(state: StateMatrix, p: Position2D, node_floor: float = 1e-10):
    """Guiding velocity 2 Im(grad psi / psi) at point ``p`` at the state's time."""
    q = p.as_array() if isinstance(p, Position2D) else np.asarray(p, dtype=float)
    psi, d1, d2 = _evaluate_many(state, q[:1], q[1:2])
    dens = float((psi.real**2 + psi.imag**2)[0])
    if dens <= node_floor:
        raise NodeProximityError(
            f"|psi|^2 = {dens:.3e} at {tuple(q)} is at or below the node floor")
    v1 = 2.0 * (d1[0] * psi[0].conjugate()).imag / dens
    v2 = 2.0 * (d2[0] * psi[0].conjugate()).imag / dens
    return float(v1), float(v2)


def _state_field(state: StateMatrix, node_floor: float):
    """Vectorised velocity+density field of a shared state, per-walker times."""
    rows, cols = state._rows, state._cols
    crc = state.coeffs[np.ix_(rows, cols)]
    rmax = int(rows.max()) + 1
    cmax = int(cols.max()) + 1
    t0 = state.t0

    def fieldfn(t, y, idx):
        tau = t - t0
        F1, dF1 = _basis_block(y[:, 0], tau, rmax)
        F2, dF2 = _basis_block(y[:, 1], tau, cmax)
        F1, dF1 = F1[:, rows], dF1[:, rows]
        F2, dF2 = F2[:, cols], dF2[:, cols]
        U = F1 @ crc
        dU = dF1 @ crc
        psi = np.sum(U * F2, axis=1)
        d1 = np.sum(dU * F2, axis=1)
        d2 = np.sum(U * dF2, axis=1)
        dens = psi.real**2 + psi.imag**2
        denom = np.maximum(dens, node_floor)
        cpsi = psi.conj()
        v = np.stack([2.0 * (d1 * cpsi).imag / denom,
                      2.0 * (d2 * cpsi).imag / denom], axis=1)
        return v, dens

    return fieldfn


# ---------------------------------------------------------------------------
# embedded Cash-Karp 4(5) stepping, vectorised across walkers

_CK_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_CK_B4 = np.array([2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4])
_CK_E = _CK_B5 - _CK_B4

_NODE_STEP = 1e-6     # clamped step length used to cross low-density regions
_MIN_STEP = 1e-13     # below this the step size has underflowed
_MAX_NODE_REJECTS = 64  # consecutive clamped retries before a walker is failed


@dataclass
class _BatchInfo:
    rejections: np.ndarray
    node_events: np.ndarray
    failed: np.ndarray


def _advance_batch(fieldfn, y0: np.ndarray, t0: float, t1: float,
                   cfg: IntegratorConfig, on_accept=None):
    """March every row of ``y0`` from t0 to t1 with per-row adaptive steps.

    ``fieldfn(t, y, idx) -> (velocity, density)`` is evaluated on the active
    subset only.  Steps meeting a density below the node floor are retried at
    the clamped node step (with the velocity denominator regularised by the
    floor) instead of aborting; persistent error-driven shrinkage below the
    minimum step marks the walker failed.
    """
    y = np.array(y0, dtype=float)
    W = y.shape[0]
    span = float(t1) - float(t0)
    info = _BatchInfo(np.zeros(W, dtype=int), np.zeros(W, dtype=int),
                      np.zeros(W, dtype=bool))
    if span == 0.0:
        return y, info
    if span < 0.0:
        raise ConfigurationError("integration horizon precedes the start time")

    lo = -BOX_HALF_WIDTH + cfg.boundary_margin
    hi = BOX_HALF_WIDTH - cfg.boundary_margin
    np.clip(y, lo, hi, out=y)
    t = np.full(W, float(t0))
    h = np.full(W, min(cfg.max_step, span))
    done = np.zeros(W, dtype=bool)
    node_rejects = np.zeros(W, dtype=int)
    t_edge = t1 - 1e-12 * max(1.0, abs(t1))

    while True:
        active = ~done & ~info.failed
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        ha = np.minimum(h[idx], t1 - t[idx])
        ys = y[idx]
        ts = t[idx]

        k = np.empty((6,) + ys.shape)
        node_hit = np.zeros(len(idx), dtype=bool)
        for j in range(6):
            yj = ys if j == 0 else ys + ha[:, None] * np.einsum(
                "s,swd->wd", np.array(_CK_A[j]), k[:j])
            yj = np.clip(yj, lo, hi)
            vj, dens = fieldfn(ts + _CK_C[j] * ha, yj, idx)
            node_hit |= dens < cfg.node_floor
            k[j] = vj

        y5 = ys + ha[:, None] * np.einsum("s,swd->wd", _CK_B5, k)
        err = ha[:, None] * np.einsum("s,swd->wd", _CK_E, k)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(ys), np.abs(y5))
        enorm = np.max(np.abs(err) / scale, axis=1)
        enorm = np.where(np.isfinite(enorm), enorm, np.inf)

        at_node_step = ha <= _NODE_STEP * (1.0 + 1e-9)
        accept = (enorm <= 1.0) & (~node_hit | at_node_step)
        info.node_events[idx[node_hit]] += 1

        ia = idx[accept]
        if ia.size:
            rej_counts = info.rejections[ia].copy()
            ynew = np.clip(y5[accept], lo, hi)
            tnew = ts[accept] + ha[accept]
            fin = tnew >= t_edge
            tnew[fin] = t1
            y[ia] = ynew
            t[ia] = tnew
            done[ia] = fin
            node_rejects[ia] = 0
            with np.errstate(divide="ignore"):
                grow = 0.9 * enorm[accept] ** -0.2
            grow = np.clip(np.where(np.isfinite(grow), grow, 5.0), 0.2, 5.0)
            h[ia] = np.minimum(grow * ha[accept], cfg.max_step)
            if on_accept is not None:
                on_accept(ia, tnew, ynew, rej_counts, node_hit[accept])
                info.rejections[ia] = 0

        ir = idx[~accept]
        if ir.size:
            info.rejections[ir] += 1
            with np.errstate(divide="ignore"):
                shrink = ha[~accept] * np.clip(
                    0.9 * np.maximum(enorm[~accept], 1e-300) ** -0.2, 0.1, 0.9)
            clamped = np.maximum(_NODE_STEP, ha[~accept] / 10.0)
            rejected_at_node = node_hit[~accept]
            h[ir] = np.where(rejected_at_node, clamped, shrink)
            node_rejects[ir] = np.where(rejected_at_node, node_rejects[ir] + 1, 0)
            info.failed[ir[h[ir] < _MIN_STEP]] = True
            info.failed[ir[node_rejects[ir] > _MAX_NODE_REJECTS]] = True

    return y, info


# ---------------------------------------------------------------------------
# trajectories and ensembles

def integrate_trajectory(state: StateMatrix, q0: Position2D, t0: float,
                         t1: float, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the guidance equation for one walker from t0 to t1.

    The state's phases advance continuously with the integration time.  For a
    stationary real state the walker provably never moves and the constant
    trajectory is returned without stepping.
    """
    cfg = cfg or IntegratorConfig()
    q = q0.as_array() if isinstance(q0, Position2D) else np.asarray(q0, dtype=float)
    if np.any(np.abs(q) > BOX_HALF_WIDTH):
        raise DomainError("launch point outside the box")
    if t1 < t0:
        raise ConfigurationError("t1 must not precede t0")
    if t1 == t0 or state.is_stationary():
        times = np.array([t0, t1]) if t1 > t0 else np.array([t0])
        pts = np.tile(q, (len(times), 1))
        z = np.zeros(len(times), dtype=int)
        return Trajectory(times, pts, z, z.astype(bool))

    times = [float(t0)]
    points = [q.copy()]
    rejections = [0]
    node_flags = [False]

    def record(ia, tnew, ynew, rej, node):
        times.append(float(tnew[0]))
        points.append(ynew[0].copy())
        rejections.append(int(rej[0]))
        node_flags.append(bool(node[0]))

    fieldfn = _state_field(state, cfg.node_floor)
    _, info = _advance_batch(fieldfn, q[None, :], t0, t1, cfg, on_accept=record)
    traj = Trajectory(np.array(times), np.array(points),
                      np.array(rejections), np.array(node_flags),
                      complete=not bool(info.failed[0]))
    if info.failed[0]:
        raise IntegrationFailureError(
            "step size underflow near a node", trajectory=traj)
    return traj


def _rejection_sample(density_fn, envelope: float, count: int, rng,
                      max_inflations: int = 40):
    """Draw ``count`` points from a density over the box by rejection.

    A batch in which any candidate density exceeds the envelope is discarded,
    the envelope inflated by 1.5, and a warning emitted; previously accepted
    batches stayed below the old envelope and remain exact draws.
    """
    out = np.empty((count, 2))
    filled = 0
    area_rate = 1.0 / (np.pi**2 * envelope)
    while filled < count:
        want = count - filled
        batch = int(min(max(4096, want / max(area_rate, 1e-3) * 1.3), 2_000_000))
        cand = rng.uniform(-BOX_HALF_WIDTH, BOX_HALF_WIDTH, size=(batch, 2))
        u = rng.uniform(0.0, envelope, size=batch)
        dens = density_fn(cand)
        if np.any(dens > envelope):
            envelope *= 1.5
            area_rate /= 1.5
            max_inflations -= 1
            warnings.warn("sampling envelope exceeded; inflating by 1.5x",
                          RuntimeWarning, stacklevel=2)
            if max_inflations <= 0:
                raise ConfigurationError("sampling envelope failed to stabilise")
            continue
        good = cand[u <= dens]
        take = min(len(good), want)
        out[filled:filled + take] = good[:take]
        filled += take
    return out


def sample_equilibrium(state: StateMatrix, count: int, seed: int,
                       envelope_grid: int = 128,
                       envelope_safety: float = 1.1) -> Ensemble:
    """i.i.d. positions from |psi|^2 at the state's time, counter-based RNG."""
    if count < 1:
        raise ConfigurationError("sample count must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    _, dens = _density_grid(state, envelope_grid)
    envelope = envelope_safety * float(dens.max())

    def density_fn(pts):
        return _density_many(state, pts[:, 0], pts[:, 1])

    walkers = _rejection_sample(density_fn, envelope, count, rng)
    return Ensemble(walkers, seed=int(seed), weight_desc="equilibrium")


def sample_weighted(state: StateMatrix, lambda_fn, lambda_bound: float,
                    count: int, seed: int, lambda_id: str = "custom",
                    envelope_grid: int = 128,
                    envelope_safety: float = 1.1) -> Ensemble:
    """Positions from the reweighted density lambda(x) |psi(x)|^2.

    ``lambda_fn(x1, x2)`` must be vectorised, nonnegative and bounded by
    ``lambda_bound``; the overall normalisation of lambda |psi|^2 is implicit
    in the rejection step.
    """
    if count < 1:
        raise ConfigurationError("sample count must be >= 1")
    if lambda_bound <= 0:
        raise ConfigurationError("lambda_bound must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    _, dens = _density_grid(state, envelope_grid)
    envelope = envelope_safety * float(dens.max()) * float(lambda_bound)

    def density_fn(pts):
        lam = np.asarray(lambda_fn(pts[:, 0], pts[:, 1]), dtype=float)
        if np.any(lam < 0):
            raise ConfigurationError("lambda_fn must be nonnegative")
        if np.any(lam > lambda_bound * (1 + 1e-9)):
            raise ConfigurationError("lambda_fn exceeds its declared bound")
        return lam * _density_many(state, pts[:, 0], pts[:, 1])

    walkers = _rejection_sample(density_fn, envelope, count, rng)
    return Ensemble(walkers, seed=int(seed), weight_desc=f"lambda:{lambda_id}")


def propagate_ensemble(state: StateMatrix, ens: Ensemble, t1: float,
                       cfg: IntegratorConfig | None = None,
                       failure_fraction: float = 1e-3) -> Ensemble:
    """Advance every walker independently from the state's time to ``t1``.

    Order is preserved; failed walkers are reported on the result (and keep
    their last position) unless they exceed ``failure_fraction``, which
    raises.  A stationary real state short-circuits to the identity.
    """
    cfg = cfg or IntegratorConfig()
    if t1 < state.t0:
        raise ConfigurationError("cannot propagate to a time before the state time")
    if t1 == state.t0 or state.is_stationary():
        return Ensemble(ens.walkers.copy(), seed=ens.seed,
                        weight_desc=ens.weight_desc)
    fieldfn = _state_field(state, cfg.node_floor)
    y, info = _advance_batch(fieldfn, ens.walkers, state.t0, t1, cfg)
    failed = tuple(int(i) for i in np.nonzero(info.failed)[0])
    if len(failed) > failure_fraction * ens.count:
        raise PropagationError(
            f"{len(failed)} of {ens.count} walkers failed integration")
    return Ensemble(y, seed=ens.seed, weight_desc=ens.weight_desc, failed=failed)


# ---------------------------------------------------------------------------
# equivariance diagnostics

def _ks_statistic(samples: np.ndarray, grid: np.ndarray, cdf: np.ndarray) -> float:
    xs = np.sort(np.asarray(samples, dtype=float))
    F = np.interp(xs, grid, cdf)
    n = len(xs)
    up = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(up - F), np.max(F - lo)))


def _marginal_cdf(state: StateMatrix, axis: int, grid_size: int):
    """Cumulative marginal of the stored coefficients on a uniform grid."""
    grid = np.linspace(-BOX_HALF_WIDTH, BOX_HALF_WIDTH, grid_size)
    dm = _coeff_density_matrix(state, axis)
    dens = _marginal_from_matrix(dm, grid)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))])
    if cdf[-1] > 0:
        cdf = cdf / cdf[-1]
    return grid, cdf


def equivariance_check(state: StateMatrix, ens: Ensemble,
                       grid_size: int = 2048) -> tuple[float, float]:
    """One-sample KS statistics of the walker marginals against the state's
    own marginals (quadrature CDFs) at the state's reference time."""
    if ens.count < 1:
        raise ConfigurationError("ensemble is empty")
    stats = []
    for axis in (1, 2):
        grid, cdf = _marginal_cdf(state, axis, grid_size)
        stats.append(_ks_statistic(ens.walkers[:, axis - 1], grid, cdf))
    return stats[0], stats[1]
