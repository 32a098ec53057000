"""Spectral core for one quantum particle in a two-dimensional box.

Everything lives in the Dirichlet eigenbasis of the interval [-pi/2, pi/2]
(units with hbar = 2m = 1): mode n is sqrt(2/pi)*cos(n x) for odd n and
sqrt(2/pi)*sin(n x) for even n, with energy n**2.  A two-coordinate state
is a complex coefficient matrix over mode pairs; free evolution multiplies
entry (m, n) by exp(-i (m^2 + n^2) dt).

A "which half?" position measurement projects with the half-interval
indicator.  Its overlap matrix has a closed form, and because the exact
indicator is idempotent, branch probabilities and reduced density matrices
of projected states can be evaluated exactly with operator algebra even
though the projected wavefunction itself only has a slowly converging mode
expansion (it carries a jump discontinuity).  Projected states therefore
keep a record of their pre-projection coefficients: truncated coefficients
drive pointwise evaluation and trajectories, the record drives the exact
statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
BOX_HALF_WIDTH = math.pi / 2.0
MODE_NORM = math.sqrt(2.0 / math.pi)

#: hard cap on basis sizes; the model is dense-matrix spectral, nothing larger
#: is ever useful here.
MAX_BASIS_SIZE = 256

#: overlap of the two lowest modes across the right half-interval, 4/(3 pi)
HALF_OVERLAP_12 = 4.0 / (3.0 * math.pi)
#: matrix element of the sign function between the two lowest modes, 8/(3 pi)
SIGN_OVERLAP_12 = 8.0 / (3.0 * math.pi)


class DomainError(ValueError):
    """A coordinate lies outside the closed box."""


class ConfigurationError(ValueError):
    """An operation was requested with unusable parameters."""


class DegenerateCollapseError(RuntimeError):
    """Projection onto a branch of numerically vanishing probability."""


def _check_basis_size(n: int, minimum: int = 1) -> int:
    n = int(n)
    if n < minimum:
        raise ConfigurationError(f"basis size must be >= {minimum}, got {n}")
    if n > MAX_BASIS_SIZE:
        raise ConfigurationError(f"basis size capped at {MAX_BASIS_SIZE}, got {n}")
    return n


# ---------------------------------------------------------------------------
# modes

def mode_eval(n: int, x):
    """Value and spatial derivative of interval mode ``n`` at position ``x``.

    Odd quantum numbers are cosine-type (even parity), even ones sine-type.
    ``x`` may be a scalar or an array; positions must satisfy |x| <= pi/2.
    """
    n = int(n)
    if n < 1:
        raise ConfigurationError(f"quantum number must be >= 1, got {n}")
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > BOX_HALF_WIDTH + 1e-12):
        raise DomainError("position outside the box [-pi/2, pi/2]")
    if n % 2:
        value = MODE_NORM * np.cos(n * arr)
        deriv = -n * MODE_NORM * np.sin(n * arr)
    else:
        value = MODE_NORM * np.sin(n * arr)
        deriv = n * MODE_NORM * np.cos(n * arr)
    if np.isscalar(x) or arr.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


@dataclass(frozen=True)
class Mode:
    """One Dirichlet eigenfunction of the interval with its quantum number."""

    n: int
    energy: float = field(init=False)
    parity: str = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"quantum number must be >= 1, got {self.n}")
        object.__setattr__(self, "energy", float(self.n**2))
        object.__setattr__(self, "parity", "even" if self.n % 2 == 1 else "odd")

    def __call__(self, x):
        return mode_eval(self.n, x)[0]


@dataclass(frozen=True)
class Basis1D:
    """The first ``size`` interval modes, ordered by quantum number."""

    size: int
    modes: tuple[Mode, ...] = field(init=False)

    def __post_init__(self):
        size = _check_basis_size(self.size)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "modes", tuple(Mode(n) for n in range(1, size + 1)))


# ---------------------------------------------------------------------------
# overlap operators

@dataclass(frozen=True)
class OperatorMatrix1D:
    """Dense symmetric matrix of a 1D multiplication operator in the mode basis."""

    entries: np.ndarray
    kind: str  # "theta" | "sigma" | "custom"

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)


def theta_matrix(N: int) -> OperatorMatrix1D:
    """Overlap matrix of the right-half indicator, entries int_0^{pi/2} phi_m phi_n.

    Diagonal entries are 1/2 (mode densities are even), same-parity
    off-diagonal entries vanish, and an opposite-parity pair with even
    member e and odd member o integrates to (2 e / pi) / (e^2 - o^2).
    """
    N = _check_basis_size(N)
    n = np.arange(1, N + 1)
    M = n[:, None] * np.ones((1, N), dtype=int)
    K = np.ones((N, 1), dtype=int) * n[None, :]
    T = np.zeros((N, N))
    np.fill_diagonal(T, 0.5)
    opposite = (M % 2) != (K % 2)
    even = np.where(M % 2 == 0, M, K)
    odd = np.where(M % 2 == 0, K, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = (2.0 * even / np.pi) / (even**2 - odd**2)
    T[opposite] = vals[opposite]
    return OperatorMatrix1D(T, "theta")


def sigma_matrix(N: int) -> OperatorMatrix1D:
    """Matrix of the sign function sgn(x), equal to 2*theta - identity."""
    T = theta_matrix(N).entries
    return OperatorMatrix1D(2.0 * T - np.eye(_check_basis_size(N)), "sigma")


def _half_projector(N: int, side: int) -> np.ndarray:
    T = theta_matrix(N).entries
    if side > 0:
        return T
    return np.eye(N) - T


# ---------------------------------------------------------------------------
# states

@dataclass(frozen=True)
class _ProjectionRecord:
    """Exact bookkeeping of a half-box projection applied to a state."""

    pre_coeffs: np.ndarray  # coefficients at the collapse instant
    t0: float               # collapse time
    axis: int               # 1 or 2, the projected coordinate
    side: int               # +1 right half, -1 left half
    prob: float             # exact branch probability <psi, P psi>


class StateMatrix:
    """Complex mode-pair coefficients of a two-coordinate wavefunction.

    ``coeffs[m-1, n-1]`` multiplies mode_m(x1) * mode_n(x2) and is the
    coefficient value at the reference time ``t0``.  Instances are immutable;
    evolution and projection return new states.
    """

    __slots__ = ("coeffs", "t0", "norm_tol", "projection", "_rows", "_cols")

    def __init__(self, coeffs, t0: float = 0.0, norm_tol: float = 1e-10,
                 projection: _ProjectionRecord | None = None):
        c = np.array(coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ConfigurationError("coefficients must form a square matrix")
        _check_basis_size(c.shape[0])
        nrm = np.linalg.norm(c)
        if abs(nrm - 1.0) > norm_tol:
            raise ConfigurationError(
                f"state must be normalised: Frobenius norm {nrm!r} (tol {norm_tol})")
        c.setflags(write=False)
        self.coeffs = c
        self.t0 = float(t0)
        self.norm_tol = float(norm_tol)
        self.projection = projection
        mask = c != 0
        self._rows = np.nonzero(mask.any(axis=1))[0]
        self._cols = np.nonzero(mask.any(axis=0))[0]

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def energy_expectation(self) -> float:
        """Mean energy sum |C_mn|^2 (m^2 + n^2).

        Meaningful for smooth states only: a projected state has coefficients
        decaying like 1/n, so this grows without bound as the basis grows.
        """
        n2 = np.arange(1, self.size + 1, dtype=float) ** 2
        w = np.abs(self.coeffs) ** 2
        return float(np.sum(w * (n2[:, None] + n2[None, :])))

    def is_stationary(self, tol: float = 1e-12) -> bool:
        """True for an energy eigenstate with coefficients real up to one
        global phase.  Such a state carries zero guidance velocity forever."""
        r, c = np.nonzero(self.coeffs)
        if r.size == 0:
            return True
        energies = (r + 1) ** 2 + (c + 1) ** 2
        if energies.max() != energies.min():
            return False
        vals = self.coeffs[r, c]
        ref = vals[np.argmax(np.abs(vals))]
        ref = ref / abs(ref)
        return float(np.max(np.abs((vals / ref).imag))) < tol

    def __repr__(self):
        return f"StateMatrix(size={self.size}, t0={self.t0})"


def build_singlet_state(N: int) -> StateMatrix:
    """Antisymmetric two-mode state (mode1 x mode2 - mode2 x mode1)/sqrt(2).

    An energy eigenstate with energy 5, hence stationary.
    """
    N = _check_basis_size(N, minimum=2)
    c = np.zeros((N, N), dtype=complex)
    c[0, 1] = 1.0 / math.sqrt(2.0)
    c[1, 0] = -1.0 / math.sqrt(2.0)
    return StateMatrix(c)


def evolve(state: StateMatrix, t: float) -> StateMatrix:
    """Free evolution of the coefficients to reference time ``t``.

    The phase argument is reduced mod 2*pi before exponentiation, so shifting
    by exactly one revival period reproduces coefficients bit for bit.
    """
    dt = float(t) - state.t0
    if dt == 0.0:
        return StateMatrix(state.coeffs, t0=state.t0, norm_tol=state.norm_tol,
                           projection=state.projection)
    r = math.fmod(dt, TWO_PI)
    n2 = np.arange(1, state.size + 1, dtype=float) ** 2
    ph = np.exp(-1j * n2 * r)
    c = state.coeffs * ph[:, None] * ph[None, :]
    return StateMatrix(c, t0=float(t), norm_tol=state.norm_tol,
                       projection=state.projection)


# ---------------------------------------------------------------------------
# pointwise evaluation

@dataclass(frozen=True)
class Amplitude:
    """Wavefunction value and spatial gradient at one point."""

    value: complex
    grad: tuple[complex, complex]


def _basis_block(x, tau, max_mode: int):
    """phi_m(x) e^{-i m^2 tau} and its x-derivative for m = 1..max_mode.

    ``x`` and ``tau`` are broadcast-compatible arrays (per-walker positions
    and elapsed times).  Mode powers come from a cumulative product of
    e^{i x}; the quadratic phases use e^{-i m^2 t} = e^{-i (m-1)^2 t} *
    e^{-i (2m-1) t}, so the cost is a handful of vectorised multiplies per
    mode instead of a transcendental per entry.
    """
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    w = np.exp(1j * x)
    pw = np.empty(np.broadcast(x, tau).shape + (max_mode,), dtype=complex)
    pw[..., 0] = w
    for m in range(1, max_mode):
        pw[..., m] = pw[..., m - 1] * w

    m = np.arange(1, max_mode + 1)
    odd = (m % 2).astype(bool)
    val = np.where(odd, pw.real, pw.imag) * MODE_NORM
    der = np.where(odd, -pw.imag, pw.real) * (m * MODE_NORM)

    z = np.exp(-1j * np.fmod(tau, TWO_PI))
    b = z * z
    ph = np.empty_like(pw)
    ph[..., 0] = np.broadcast_to(z, ph[..., 0].shape)
    run = z
    for k in range(1, max_mode):
        run = run * b
        ph[..., k] = ph[..., k - 1] * run
    return val * ph, der * ph


def _evaluate_many(state: StateMatrix, x1, x2, t: float | None = None):
    """Vectorised (psi, d1 psi, d2 psi) at points (x1, x2) and absolute time t."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    tau = 0.0 if t is None else float(t) - state.t0
    rows, cols = state._rows, state._cols
    if rows.size == 0:
        z = np.zeros(np.broadcast(x1, x2).shape, dtype=complex)
        return z, z.copy(), z.copy()
    crc = state.coeffs[np.ix_(rows, cols)]
    F1, dF1 = _basis_block(x1, tau, int(rows.max()) + 1)
    F2, dF2 = _basis_block(x2, tau, int(cols.max()) + 1)
    F1, dF1 = F1[..., rows], dF1[..., rows]
    F2, dF2 = F2[..., cols], dF2[..., cols]
    U = F1 @ crc
    dU = dF1 @ crc
    psi = np.sum(U * F2, axis=-1)
    d1 = np.sum(dU * F2, axis=-1)
    d2 = np.sum(U * dF2, axis=-1)
    return psi, d1, d2


def evaluate(state: StateMatrix, x1: float, x2: float) -> Amplitude:
    """Wavefunction amplitude and gradient at (x1, x2) at the state's time."""
    if abs(x1) > BOX_HALF_WIDTH + 1e-12 or abs(x2) > BOX_HALF_WIDTH + 1e-12:
        raise DomainError("evaluation point outside the box")
    psi, d1, d2 = _evaluate_many(state, np.array([x1]), np.array([x2]))
    return Amplitude(complex(psi[0]), (complex(d1[0]), complex(d2[0])))


def _density_many(state: StateMatrix, x1, x2, t: float | None = None):
    psi, _, _ = _evaluate_many(state, x1, x2, t)
    return psi.real**2 + psi.imag**2


def _density_grid(state: StateMatrix, grid: int):
    """|psi|^2 on a uniform grid x grid lattice over the closed box."""
    xs = np.linspace(-BOX_HALF_WIDTH, BOX_HALF_WIDTH, grid)
    rows, cols = state._rows, state._cols
    crc = state.coeffs[np.ix_(rows, cols)]
    F1, _ = _basis_block(xs, 0.0, int(rows.max()) + 1)
    F2, _ = _basis_block(xs, 0.0, int(cols.max()) + 1)
    psi = (F1[:, rows] @ crc) @ F2[:, cols].T
    return xs, psi.real**2 + psi.imag**2


# ---------------------------------------------------------------------------
# projection and reduced dynamics

def project_half(state: StateMatrix, axis: int, side: int):
    """Collapse onto one half of the box along the given coordinate axis.

    Returns ``(collapsed, prob)``.  The branch probability is the exact
    quadratic form <psi, P psi> (the projector is idempotent, so this equals
    ||P psi||^2 without any truncation loss).  The collapsed coefficients are
    the truncated expansion of the projected wavefunction, renormalised to
    unit Frobenius norm; the exact pre-projection data are retained on the
    result for truncation-free reduced statistics.
    """
    if axis not in (1, 2):
        raise ConfigurationError(f"axis must be 1 or 2, got {axis}")
    if side not in (1, -1):
        raise ConfigurationError(f"side must be +1 or -1, got {side}")
    P = _half_projector(state.size, side)
    if axis == 1:
        raw = P @ state.coeffs
    else:
        raw = state.coeffs @ P
    prob = float(np.vdot(state.coeffs, raw).real)
    if prob < 1e-12:
        raise DegenerateCollapseError(
            f"branch probability {prob:.3e} below 1e-12; collapse is degenerate")
    record = _ProjectionRecord(pre_coeffs=state.coeffs, t0=state.t0,
                               axis=axis, side=side, prob=prob)
    collapsed = StateMatrix(raw / np.linalg.norm(raw), t0=state.t0,
                            norm_tol=state.norm_tol, projection=record)
    return collapsed, prob


def _coeff_density_matrix(state: StateMatrix, axis: int) -> np.ndarray:
    """Density matrix of one coordinate from the stored coefficients."""
    C = state.coeffs
    if axis == 2:
        return C.T @ C.conj()
    return C @ C.conj().T


def _axis_density_matrix(state: StateMatrix, axis: int) -> np.ndarray:
    """Density matrix of coordinate ``axis`` (the other one traced out).

    If the state records a projection of the *other* coordinate, the partial
    trace telescopes through the exact idempotent projector and the result is
    free of truncation error; otherwise it is formed from the coefficients.
    """
    rec = state.projection
    if rec is not None and rec.axis != axis:
        P = _half_projector(rec.pre_coeffs.shape[0], rec.side)
        C0 = rec.pre_coeffs
        if axis == 2:
            dm = (C0.T @ P @ C0.conj()) / rec.prob
        else:
            dm = (C0 @ P @ C0.conj().T) / rec.prob
        delta = state.t0 - rec.t0
    else:
        dm = _coeff_density_matrix(state, axis)
        delta = 0.0
    if delta != 0.0:
        n2 = np.arange(1, dm.shape[0] + 1, dtype=float) ** 2
        ph = np.exp(-1j * n2 * math.fmod(delta, TWO_PI))
        dm = dm * np.outer(ph, ph.conj())
    return dm


@dataclass(frozen=True)
class ReducedDensity:
    """Reduced density matrix of the second coordinate.

    ``matrix2`` is the block over the two lowest modes (real symmetric at a
    collapse instant, Hermitian once evolved); ``full`` is the whole matrix
    in the truncated basis.
    """

    matrix2: np.ndarray
    eigenvalues: tuple[float, float]
    eigenvectors: tuple[np.ndarray, np.ndarray]
    full: np.ndarray


def reduced_density(state: StateMatrix) -> ReducedDensity:
    """Partial trace over the first coordinate, reported on the 2x2 block."""
    if state.size < 2:
        raise ConfigurationError("reduced density needs at least two modes")
    dm = _axis_density_matrix(state, axis=2)
    block = dm[:2, :2]
    evals, evecs = np.linalg.eigh(block)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    if np.max(np.abs(block.imag)) < 1e-12:
        block = block.real
    return ReducedDensity(
        matrix2=block,
        eigenvalues=(float(evals[0]), float(evals[1])),
        eigenvectors=(evecs[:, 0], evecs[:, 1]),
        full=dm,
    )


# ---------------------------------------------------------------------------
# correlators

def correlation_analytic(s: float, t: float) -> float:
    """Two-time sign correlator of the singlet: -cos(3 (s - t)) (8/(3 pi))^2."""
    return -math.cos(3.0 * (s - t)) * SIGN_OVERLAP_12**2


def _sigma_heisenberg(N: int, tau: float) -> np.ndarray:
    S = sigma_matrix(N).entries
    n2 = np.arange(1, N + 1, dtype=float) ** 2
    return S * np.exp(1j * np.subtract.outer(n2, n2) * tau)


def operator_correlation(state: StateMatrix, s: float, t: float,
                         N: int | None = None) -> float:
    """<psi, A_s B_t psi> with sign observables evolved in the Heisenberg
    picture by conjugating the overlap matrix with the free phases."""
    if N is None:
        N = state.size
    N = _check_basis_size(N, minimum=2)
    if N < state.size:
        raise ConfigurationError("operator truncation smaller than the state")
    C = np.zeros((N, N), dtype=complex)
    C[: state.size, : state.size] = state.coeffs
    Ss = _sigma_heisenberg(N, s)
    St = _sigma_heisenberg(N, t)
    val = np.vdot(C, Ss @ C @ St.T)
    return float(val.real)


def commutator_norm(kind: str, s: float, t: float, N: int) -> float:
    """Frobenius norm of the commutator of one sign observable with itself
    at two times, in the truncated single-coordinate basis."""
    if kind not in ("A", "B"):
        raise ConfigurationError(f"kind must be 'A' or 'B', got {kind!r}")
    N = _check_basis_size(N, minimum=2)
    Ss = _sigma_heisenberg(N, s)
    St = _sigma_heisenberg(N, t)
    return float(np.linalg.norm(Ss @ St - St @ Ss))


# ---------------------------------------------------------------------------
# marginals

def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(int(n))
    return x * BOX_HALF_WIDTH, w * BOX_HALF_WIDTH


def _marginal_from_matrix(dm: np.ndarray, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sup = np.nonzero(np.abs(dm).sum(axis=0) > 0)[0]
    if sup.size == 0:
        return np.zeros_like(x)
    F, _ = _basis_block(x, 0.0, int(sup.max()) + 1)
    B = F[..., sup].real
    vals = np.einsum("ga,ab,gb->g", B, dm[np.ix_(sup, sup)], B)
    return vals.real


def marginal_density(state: StateMatrix, axis: int, x: float,
                     grid_size: int = 256) -> float:
    """Probability density of one coordinate, the other integrated out.

    For a state recording a projection of the other coordinate the marginal
    comes from the exact reduced matrix; otherwise |psi|^2 is integrated over
    the companion axis with a ``grid_size``-node Gauss-Legendre rule.
    """
    if axis not in (1, 2):
        raise ConfigurationError(f"axis must be 1 or 2, got {axis}")
    if abs(x) > BOX_HALF_WIDTH + 1e-12:
        raise DomainError("position outside the box")
    rec = state.projection
    if rec is not None and rec.axis != axis:
        dm = _axis_density_matrix(state, axis)
        return float(_marginal_from_matrix(dm, x)[0])
    nodes, weights = _gauss_legendre(grid_size)
    xs = np.full_like(nodes, float(x))
    if axis == 1:
        dens = _density_many(state, xs, nodes)
    else:
        dens = _density_many(state, nodes, xs)
    return float(np.sum(weights * dens))
