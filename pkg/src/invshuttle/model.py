"""Ions, units, quadratic Hamiltonians and Gaussian states.

Internally everything is dimensionless: hbar = 1, masses in units of a
reference mass and times in units of an inverse reference frequency. The
phase-space vector is ordered ``(x_1, ..., x_N, p_1, ..., p_N)`` with every
``x_i``/``p_i`` a ``d``-vector.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import constants as sc

from .numkit import SingularMatrixError, spd_power, sym, symmetry_error

PURITY_TOL = 1e-6

#: Mass of a 171Yb+ ion in atomic mass units (neutral atom minus one electron).
YB171_MASS_AMU = 170.9363315 - sc.m_e / sc.atomic_mass


class UnstableTrapError(ValueError):
    """A Hamiltonian that should be confining is not positive definite."""


class PurityError(ValueError):
    """A routine that requires a pure Gaussian state received a mixed one."""


@dataclass(frozen=True)
class IonSpecies:
    mass: float
    charge: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"ion mass must be positive, got {self.mass}")
        if not self.charge > 0:
            raise ValueError(f"ion charge must be positive, got {self.charge}")


@dataclass(frozen=True)
class UnitSystem:
    """Oscillator units built from a reference mass (kg) and angular frequency (rad/s)."""

    m_ref: float
    omega_ref: float

    def __post_init__(self):
        if not (self.m_ref > 0 and self.omega_ref > 0):
            raise ValueError("reference mass and frequency must be positive")

    @property
    def length(self) -> float:
        return math.sqrt(sc.hbar / (self.m_ref * self.omega_ref))

    @property
    def energy(self) -> float:
        return sc.hbar * self.omega_ref

    @property
    def time(self) -> float:
        return 1.0 / self.omega_ref

    @property
    def momentum(self) -> float:
        return self.m_ref * self.omega_ref * self.length

    def coulomb_strength(self, q1: float = 1.0, q2: float = 1.0) -> float:
        """Dimensionless Coulomb constant for charges given in units of e."""
        c_coul = q1 * q2 * sc.e**2 / (4.0 * math.pi * sc.epsilon_0)
        return c_coul / (self.m_ref * self.omega_ref**2 * self.length**3)

    def length_to_si(self, x):
        return np.asarray(x) * self.length

    def length_from_si(self, x):
        return np.asarray(x) / self.length


def symplectic_form(n: int) -> np.ndarray:
    """The ``2n x 2n`` matrix ``[[0, 1], [-1, 0]]``."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """``H = 1/2 X^T Omega X + V . X`` with ``Omega = blockdiag(omega_xx, omega_pp)``."""

    omega_xx: np.ndarray
    omega_pp: np.ndarray
    drive: np.ndarray
    n_ions: int
    dim: int

    def __post_init__(self):
        n = self.n_ions * self.dim
        if self.omega_xx.shape != (n, n) or self.omega_pp.shape != (n, n):
            raise ValueError("Omega blocks have inconsistent shapes")
        if self.drive.shape != (2 * n,):
            raise ValueError("drive vector has inconsistent length")
        if symmetry_error(self.omega_xx) > 1e-10:
            raise ValueError("omega_xx is not symmetric")

    @property
    def omega(self) -> np.ndarray:
        n = self.n_ions * self.dim
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.omega_xx
        out[n:, n:] = self.omega_pp
        return out

    @property
    def masses(self) -> np.ndarray:
        """Per-coordinate masses read off the kinetic block."""
        return 1.0 / np.diag(self.omega_pp)

    def stationary_point(self) -> np.ndarray:
        n = self.n_ions * self.dim
        zx = -np.linalg.solve(self.omega_xx, self.drive[:n])
        zp = -np.linalg.solve(self.omega_pp, self.drive[n:])
        return np.concatenate([zx, zp])

    def decoupled(self) -> "QuadraticHamiltonian":
        """Copy with all inter-ion blocks of ``omega_xx`` dropped."""
        d = self.dim
        oxx = np.zeros_like(self.omega_xx)
        for i in range(self.n_ions):
            sl = slice(i * d, (i + 1) * d)
            oxx[sl, sl] = self.omega_xx[sl, sl]
        return QuadraticHamiltonian(oxx, self.omega_pp.copy(), self.drive.copy(), self.n_ions, self.dim)


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        k = self.mean.shape[0]
        if self.mean.ndim != 1 or k % 2 or self.cov.shape != (k, k):
            raise ValueError("mean/cov shapes are inconsistent")
        if symmetry_error(self.cov) > 1e-12:
            raise ValueError("covariance matrix is not symmetric")

    @property
    def n_dof(self) -> int:
        return self.mean.shape[0] // 2

    def purity_det(self) -> float:
        """``det(2 Sigma)``; equals one exactly for pure states."""
        return float(np.linalg.det(2.0 * self.cov))

    def is_pure(self, tol: float = PURITY_TOL) -> bool:
        return abs(self.purity_det() - 1.0) <= tol

    def uncertainty_gap(self) -> float:
        """Smallest eigenvalue of ``Sigma + i S / 2`` (non-negative when physical)."""
        herm = self.cov + 0.5j * symplectic_form(self.n_dof)
        return float(np.linalg.eigvalsh(herm).min())


def assemble_hamiltonian(
    traps: Sequence[Tuple[np.ndarray, np.ndarray]],
    couplings: Mapping[Tuple[int, int], np.ndarray],
    ions: Sequence[IonSpecies],
) -> QuadraticHamiltonian:
    """Assemble ``Omega`` and ``V`` for N ions.

    ``traps[i] = (M_i, F_i)`` are the single-ion curvature and force of the
    Hamiltonian ``sum p_i^2/2m_i + m_i x_i^T M_i x_i / 2 - F_i . x_i +
    sum_{i<j} x_i^T D[i,j] x_j``; ``couplings[(i, j)]`` holds ``D[i,j]`` for
    ``i < j`` (missing pairs are uncoupled).
    """
    n_ions = len(ions)
    if len(traps) != n_ions:
        raise ValueError("need one (M, F) pair per ion")
    d = np.asarray(traps[0][0]).shape[0]
    n = n_ions * d
    oxx = np.zeros((n, n))
    opp = np.zeros((n, n))
    drive = np.zeros(2 * n)
    for i, ((m_i, f_i), ion) in enumerate(zip(traps, ions)):
        m_i = np.asarray(m_i, dtype=float)
        f_i = np.asarray(f_i, dtype=float)
        if m_i.shape != (d, d) or f_i.shape != (d,):
            raise ValueError(f"trap {i} has wrong dimensions")
        sl = slice(i * d, (i + 1) * d)
        oxx[sl, sl] = ion.mass * m_i
        opp[sl, sl] = np.eye(d) / ion.mass
        drive[sl] = -f_i
    for (i, j), dij in couplings.items():
        if not 0 <= i < j < n_ions:
            raise ValueError(f"coupling key {(i, j)} must satisfy 0 <= i < j < N")
        dij = np.asarray(dij, dtype=float)
        if dij.shape != (d, d):
            raise ValueError(f"coupling {(i, j)} has wrong dimensions")
        oxx[i * d:(i + 1) * d, j * d:(j + 1) * d] = dij
        oxx[j * d:(j + 1) * d, i * d:(i + 1) * d] = dij.T
    return QuadraticHamiltonian(sym(oxx), opp, drive, n_ions, d)


@dataclass(frozen=True)
class NormalModes:
    """Mass-weighted normal modes: ``x = x0 + s Q q``, ``p = s^-1 Q p_q``."""

    frequencies: np.ndarray
    vectors: np.ndarray
    inv_sqrt_mass: np.ndarray
    center: np.ndarray


def normal_modes(h: QuadraticHamiltonian) -> NormalModes:
    """Diagonalise ``s Omega_xx s`` with ``s = Omega_pp^(1/2)``.

    When every mode is dominated by a distinct coordinate the modes are
    ordered to follow the coordinates; otherwise by ascending frequency.
    """
    s = spd_power(h.omega_pp, 0.5)
    k = sym(s @ h.omega_xx @ s)
    w2, q = np.linalg.eigh(k)
    if w2.min() <= 1e-12 * max(abs(w2).max(), 1.0):
        raise UnstableTrapError(f"Omega_xx is not positive definite (min curvature {w2.min():.3e})")
    dominant = np.argmax(np.abs(q), axis=0)
    if len(set(dominant.tolist())) == len(dominant):
        order = np.argsort(dominant)
        w2, q = w2[order], q[:, order]
    q = q * np.where(q[np.argmax(np.abs(q), axis=0), np.arange(q.shape[1])] < 0, -1.0, 1.0)
    return NormalModes(np.sqrt(w2), q, s, h.stationary_point())


def ground_state(h: QuadraticHamiltonian) -> GaussianState:
    modes = normal_modes(h)
    s, q, w = modes.inv_sqrt_mass, modes.vectors, modes.frequencies
    s_inv = np.linalg.inv(s)
    sxx = s @ (q * (0.5 / w)) @ q.T @ s
    spp = s_inv @ (q * (0.5 * w)) @ q.T @ s_inv
    n = w.size
    cov = np.zeros((2 * n, 2 * n))
    cov[:n, :n] = sym(sxx)
    cov[n:, n:] = sym(spp)
    return GaussianState(modes.center, cov)


def _require_pure(state: GaussianState, what: str) -> None:
    if not state.is_pure():
        raise PurityError(f"{what} is not pure: det(2 Sigma) = {state.purity_det():.8f}")


def fidelity(a: GaussianState, b: GaussianState) -> float:
    """Squared overlap ``|<a|b>|^2`` of two pure Gaussian states."""
    _require_pure(a, "first state")
    _require_pure(b, "second state")
    total = a.cov + b.cov
    delta = a.mean - b.mean
    expo = -0.5 * delta @ np.linalg.solve(total, delta)
    return float(min(1.0, math.exp(expo) / math.sqrt(np.linalg.det(total))))


@dataclass
class FockDistribution:
    """Populations of a pure state in a product Fock basis."""

    populations: Dict[Tuple[int, ...], float]
    cutoff: int
    nodes: int
    frequencies: np.ndarray = field(repr=False)

    @property
    def total(self) -> float:
        return float(sum(self.populations.values()))

    @property
    def deficit(self) -> float:
        return 1.0 - self.total

    @property
    def status(self) -> str:
        return "ok" if self.total >= 0.99 else "warning"

    def __getitem__(self, key: Tuple[int, ...]) -> float:
        return self.populations[tuple(key)]

    def largest(self, count: int = 5):
        return sorted(self.populations.items(), key=lambda kv: -kv[1])[:count]


def _hermite_functions_scaled(u: np.ndarray, nmax: int) -> np.ndarray:
    """``h_n(u) * exp(u^2/2)`` for ``n = 0..nmax`` (normalised Hermite functions)."""
    out = np.empty((nmax + 1, u.size))
    out[0] = math.pi ** -0.25
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * u * out[0]
    for n in range(1, nmax):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * u * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def default_quadrature_nodes(n_modes: int) -> int:
    if n_modes <= 4:
        return 32
    return max(8, int((4.0e6) ** (1.0 / n_modes)))


def fock_populations(
    state: GaussianState,
    h_ref: QuadraticHamiltonian,
    cutoff: int = 4,
    nodes: Optional[int] = None,
) -> FockDistribution:
    """Project a pure Gaussian state onto the Fock basis of ``h_ref``'s modes.

    The overlaps ``<n_1 ... n_K | psi>`` are evaluated by tensor-product
    Gauss-Hermite quadrature in the scaled mode coordinates
    ``u_k = sqrt(omega_k) q_k``. The position wavefunction is rebuilt from
    the covariance as ``exp(-(q-mu)^T W (q-mu)/2 + i pbar.(q-mu))`` with
    ``W = (2 S_qq)^-1 - i sym(S_qq^-1 S_qp)``.

    Populations are returned for all occupation tuples with every entry at
    most ``cutoff``; a total below 0.99 is flagged with a warning.
    """
    _require_pure(state, "state")
    modes = normal_modes(h_ref)
    n = modes.frequencies.size
    if state.n_dof != n:
        raise ValueError("state and reference Hamiltonian differ in size")
    nodes = default_quadrature_nodes(n) if nodes is None else int(nodes)

    s_inv = np.linalg.inv(modes.inv_sqrt_mass)
    to_q = modes.vectors.T @ s_inv
    to_pq = modes.vectors.T @ modes.inv_sqrt_mass
    zx, zp = state.mean[:n], state.mean[n:]
    mu = to_q @ (zx - modes.center[:n])
    pbar = to_pq @ (zp - modes.center[n:])
    s_qq = sym(to_q @ state.cov[:n, :n] @ to_q.T)
    s_qp = to_q @ state.cov[:n, n:] @ to_pq.T
    s_qq_inv = np.linalg.inv(s_qq)
    w_mat = 0.5 * s_qq_inv - 1j * sym(s_qq_inv @ s_qp)
    norm = (2.0 * math.pi) ** (-n / 4.0) * np.linalg.det(s_qq) ** -0.25

    u, wts = np.polynomial.hermite.hermgauss(nodes)
    freqs = modes.frequencies
    axes = [u / math.sqrt(wk) for wk in freqs]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    delta = pts - mu
    expo = -0.5 * np.einsum("ai,ij,aj->a", delta, w_mat, delta) + 1j * (delta @ pbar)
    psi = (norm * np.exp(expo)).reshape((nodes,) * n)

    herm = _hermite_functions_scaled(u, cutoff) * (wts * np.exp(0.5 * u**2))
    coeffs = psi
    for k in range(n):
        # contract the leading axis; the new mode axis is appended at the end
        coeffs = np.tensordot(coeffs, herm * freqs[k] ** -0.25, axes=([0], [1]))
    probs = np.abs(coeffs) ** 2
    populations = {
        idx: float(probs[idx]) for idx in itertools.product(range(cutoff + 1), repeat=n)
    }
    dist = FockDistribution(populations, cutoff, nodes, freqs)
    if dist.status != "ok":
        warnings.warn(
            f"Fock populations up to {cutoff} quanta sum to {dist.total:.4f}; "
            "increase the cutoff or quadrature order",
            RuntimeWarning,
            stacklevel=2,
        )
    return dist


@dataclass(frozen=True)
class HamiltonianSchedule:
    """Time samples of a quadratic Hamiltonian: ``omega[k]`` and ``drive[k]`` at ``times[k]``."""

    times: np.ndarray
    omega: np.ndarray
    drive: np.ndarray
    n_ions: int
    dim: int

    def __post_init__(self):
        k = 2 * self.n_ions * self.dim
        n = self.times.shape[0]
        if self.omega.shape != (n, k, k) or self.drive.shape != (n, k):
            raise ValueError("schedule arrays have inconsistent shapes")

    def __len__(self) -> int:
        return self.times.shape[0]

    def at(self, index: int) -> QuadraticHamiltonian:
        n = self.n_ions * self.dim
        om = self.omega[index]
        return QuadraticHamiltonian(om[:n, :n].copy(), om[n:, n:].copy(), self.drive[index].copy(), self.n_ions, self.dim)

    @classmethod
    def static(cls, h: QuadraticHamiltonian, times: np.ndarray) -> "HamiltonianSchedule":
        times = np.asarray(times, dtype=float)
        n = times.size
        return cls(times, np.broadcast_to(h.omega, (n,) + h.omega.shape).copy(),
                   np.broadcast_to(h.drive, (n,) + h.drive.shape).copy(), h.n_ions, h.dim)
