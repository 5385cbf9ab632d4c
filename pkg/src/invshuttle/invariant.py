"""Inverse engineering of trap potentials from a quadratic invariant.

The designer supplies a positive-definite matrix path ``R(t)`` and classical
ion trajectories. For two ions in a common curvature ``M`` the invariant is
parametrised by ``P = U R`` with ``U`` unitary and ``U^dag dU/dt = A``; the
curvature that makes ``P'' + P (M + D/sqrt(m1 m2)) = 0`` hold follows from a
pair of anticommutator solves.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .coulomb import coulomb_terms
from .model import HamiltonianSchedule, IonSpecies, symplectic_form
from .numkit import (
    SingularMatrixError,
    dagger,
    nearest_unitary,
    rk4_path,
    solve_anticommutator,
    spd_power,
    sym,
    antisym,
    symmetry_error,
    uniform_step,
)

REUNITARIZE_EVERY = 100


class ConsistencyError(ArithmeticError):
    """The synthesised curvature violates a property it must satisfy exactly."""


class StepSizeError(ArithmeticError):
    pass


def polynomial_p(tau):
    """Quintic ramp ``10 t^3 - 15 t^4 + 6 t^5`` with its first two derivatives.

    Returns ``(p, p', p'')``; derivatives are with respect to ``tau``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < -1e-12) or np.any(tau > 1 + 1e-12):
        raise ValueError("tau must lie in [0, 1]")
    tau = np.clip(tau, 0.0, 1.0)
    # evaluate on the nearer half so that p stays inside [0, 1] after rounding
    low = np.minimum(tau, 1.0 - tau)
    pl = low**3 * (10.0 + low * (-15.0 + 6.0 * low))
    p = np.where(tau <= 0.5, pl, 1.0 - pl)
    t2 = tau * tau
    dp = 30.0 * t2 * (1.0 - tau) ** 2
    ddp = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau)
    return p, dp, ddp


def _inv(a: np.ndarray) -> np.ndarray:
    return np.linalg.inv(a)


def boundary_R(m_b, d_b, m1: float, m2: float) -> np.ndarray:
    """``(M + D / sqrt(m1 m2))^(-1/4)``: the static ``R`` matching a trap at rest."""
    total = np.asarray(m_b, dtype=float) + np.asarray(d_b, dtype=float) / np.sqrt(m1 * m2)
    try:
        return spd_power(total, -0.25)
    except SingularMatrixError as exc:
        raise ValueError(f"unstable boundary configuration: {exc}") from exc


@dataclass(frozen=True)
class RSchedule:
    """``R(t) = (1 - p(t/T)) R0 + p(t/T) RT`` with analytic derivatives."""

    r0: np.ndarray
    rT: np.ndarray
    duration: float

    def _ramp(self, t):
        return polynomial_p(np.asarray(t, dtype=float) / self.duration)

    def value(self, t) -> np.ndarray:
        p, _, _ = self._ramp(t)
        p = np.asarray(p)[..., None, None]
        return (1.0 - p) * self.r0 + p * self.rT

    def first(self, t) -> np.ndarray:
        _, dp, _ = self._ramp(t)
        return np.asarray(dp)[..., None, None] / self.duration * (self.rT - self.r0)

    def second(self, t) -> np.ndarray:
        _, _, ddp = self._ramp(t)
        return np.asarray(ddp)[..., None, None] / self.duration**2 * (self.rT - self.r0)

    def __call__(self, t):
        return self.value(t), self.first(t), self.second(t)


def interpolate_R(r0, rT, duration: float, check_times=None) -> RSchedule:
    """Quintic-ramp interpolation between two SPD boundary matrices.

    Positive definiteness is verified on ``check_times`` (default: 1001
    uniform samples); the first failing time is reported.
    """
    r0 = sym(np.asarray(r0, dtype=float))
    rT = sym(np.asarray(rT, dtype=float))
    if duration <= 0:
        raise ValueError("duration must be positive")
    sched = RSchedule(r0, rT, float(duration))
    times = np.linspace(0.0, duration, 1001) if check_times is None else np.asarray(check_times)
    lam = np.linalg.eigvalsh(sched.value(times))
    bad = np.nonzero(lam[..., 0] <= 1e-12 * lam[..., -1])[0]
    if bad.size:
        raise ValueError(f"interpolated R loses positive definiteness at t = {times[bad[0]]:.6g}")
    return sched


def solve_J(r: np.ndarray, rd: np.ndarray) -> np.ndarray:
    """Antisymmetric ``J`` with ``{J, R^-2} = [R', R^-1] + R R' R^-2 - R^-2 R' R``."""
    ri = _inv(r)
    b = ri @ ri
    rhs = rd @ ri - ri @ rd + r @ rd @ b - b @ rd @ r
    return antisym(solve_anticommutator(b, rhs))


def compute_A(r: np.ndarray, rd: np.ndarray, j: np.ndarray) -> np.ndarray:
    """``A = i R^-2 + ([R^-1, R'] + R^-1 J R^-1) / 2`` (anti-Hermitian)."""
    ri = _inv(r)
    return 1j * (ri @ ri) + 0.5 * (ri @ rd - rd @ ri) + 0.5 * ri @ j @ ri


def compute_A_dot(r, rd, rdd, j) -> np.ndarray:
    """Time derivative of ``A`` obtained by differentiating its defining relations."""
    ri = _inv(r)
    b = ri @ ri
    rid = -ri @ rd @ ri
    bd = rid @ ri + ri @ rid
    rhs_dot = (
        rdd @ ri + rd @ rid - rid @ rd - ri @ rdd
        + rd @ rd @ b + r @ rdd @ b + r @ rd @ bd
        - bd @ rd @ r - b @ rdd @ r - b @ rd @ rd
    )
    jd = antisym(solve_anticommutator(b, rhs_dot - (j @ bd + bd @ j)))
    return (
        1j * bd
        + 0.5 * (rid @ rd + ri @ rdd - rdd @ ri - rd @ rid)
        + 0.5 * (rid @ j @ ri + ri @ jd @ ri + ri @ j @ rid)
    )


def solve_Mtilde(r, rd, rdd, a) -> np.ndarray:
    """Solve ``{R^2, M~} = 2[R', R]_A - 2 R A^2 R - {R'', R}`` for the effective curvature.

    The right-hand side is real up to rounding; an imaginary part above
    ``1e-10`` (relative to its size) means the inputs are inconsistent.
    """
    rhs = 2.0 * (rd @ a @ r - r @ a @ rd) - 2.0 * r @ a @ a @ r - (rdd @ r + r @ rdd)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if np.max(np.abs(rhs.imag)) > 1e-10 * scale:
        raise ConsistencyError(
            f"imaginary part {np.max(np.abs(rhs.imag)):.3e} in the curvature equation"
        )
    r2 = r @ r
    mt = sym(solve_anticommutator(r2, rhs.real))
    resid = np.max(np.abs(r2 @ mt + mt @ r2 - rhs.real))
    if resid > 1e-8 * scale:
        raise ConsistencyError(f"anticommutator residual {resid:.3e}")
    return mt


def trap_from_Mtilde(mt, d, m1: float, m2: float) -> np.ndarray:
    """Hamiltonian curvature ``M = M~ - D / sqrt(m1 m2)``."""
    return np.asarray(mt) - np.asarray(d) / np.sqrt(m1 * m2)


def linear_drive(z, zdot, omega) -> np.ndarray:
    """Linear coefficient ``V = -S Z' - Omega Z`` that makes ``Z`` a classical solution."""
    z = np.asarray(z, dtype=float)
    k = z.shape[-1]
    s = symplectic_form(k // 2)
    return -np.einsum("ab,...b->...a", s, zdot) - np.einsum("...ab,...b->...a", omega, z)


ASource = Union[Callable[[float], np.ndarray], np.ndarray]


def _sampled(a_fine: np.ndarray, t0: float, h: float) -> Callable[[float], np.ndarray]:
    half = 0.5 * h

    def lookup(t: float) -> np.ndarray:
        pos = (t - t0) / half
        idx = int(round(pos))
        if abs(pos - idx) > 1e-6 or not 0 <= idx < len(a_fine):
            raise ValueError(f"no A sample at t = {t}")
        return a_fine[idx]

    return lookup


def propagate_U(a: ASource, grid: np.ndarray) -> np.ndarray:
    """Integrate ``U' = U A`` from ``U(0) = 1`` with RK4.

    ``a`` is either a callable ``t -> A(t)`` or an array of samples on the
    half-step grid ``t0 + k h / 2`` (length ``2 len(grid) - 1``). ``U`` is
    projected back onto the unitary group every 100 steps; a drift above
    ``1e-8`` before projection means the step is too coarse.
    """
    grid = np.asarray(grid, dtype=float)
    h = uniform_step(grid)
    if callable(a):
        a_at = a
        d = np.asarray(a(grid[0])).shape[-1]
    else:
        a = np.asarray(a)
        if a.shape[0] != 2 * grid.size - 1:
            raise ValueError("A samples must cover the half-step grid")
        a_at = _sampled(a, grid[0], h)
        d = a.shape[-1]

    def rhs(t, u):
        return u @ a_at(t)

    out = np.empty((grid.size, d, d), dtype=complex)
    out[0] = np.eye(d)
    start = 0
    eye = np.eye(d)
    while start < grid.size - 1:
        stop = min(start + REUNITARIZE_EVERY, grid.size - 1)
        chunk = rk4_path(rhs, out[start], grid[start:stop + 1])
        drift = np.max(np.abs(dagger(chunk[-1]) @ chunk[-1] - eye))
        if drift > 1e-8:
            raise StepSizeError(f"unitarity drift {drift:.3e} near t = {grid[stop]:.6g}")
        out[start + 1:stop + 1] = chunk[1:]
        out[stop] = nearest_unitary(chunk[-1])
        start = stop
    return out


@dataclass(frozen=True)
class InvariantFrame:
    """Data of ``I = (X - Z)^T Gamma (X - Z) / 2``; arrays may carry a leading time axis."""

    U: np.ndarray
    gamma: np.ndarray
    Z: np.ndarray

    def __getitem__(self, k) -> "InvariantFrame":
        return InvariantFrame(self.U[k], self.gamma[k], self.Z[k])

    def __len__(self) -> int:
        return self.gamma.shape[0]


def build_gamma(r, rd, u, masses: Sequence[float], z, a=None) -> InvariantFrame:
    """``Gamma = Re(G^dag G)`` with ``G = (m_1 Y_1', ..., m_N Y_N', -Y_1, ..., -Y_N)``.

    All ``Y_i = U R / sqrt(m_i)``; ``Y_i'`` uses ``U' = U A``. If ``a`` is not
    given it is recomputed from ``R`` and ``R'``.
    """
    r = np.asarray(r, dtype=float)
    if a is None:
        a = compute_A(r, rd, solve_J(r, rd))
    p = u @ r
    pd = u @ (a @ r + rd)
    sq = np.sqrt(np.asarray(masses, dtype=float))
    blocks = [pd * s for s in sq] + [-p / s for s in sq]
    g = np.concatenate(blocks, axis=-1)
    gamma = sym(np.real(dagger(g) @ g))
    return InvariantFrame(np.asarray(u), gamma, np.asarray(z, dtype=float))


def residual_Q(
    ys: Sequence[np.ndarray],
    ydds: Sequence[np.ndarray],
    ms: Sequence[np.ndarray],
    couplings: Mapping[Tuple[int, int], np.ndarray],
    masses: Sequence[float],
) -> List[np.ndarray]:
    """``Q_i = m_i (Y_i M_i + Y_i'') + sum_{j != i} Y_j D[i,j]`` for every ion.

    ``couplings`` is keyed by ``(i, j)`` with ``i < j``; ``D`` is symmetric in
    its argument, so ``D[j,i] = D[i,j]``.
    """
    out = []
    n = len(ys)
    for i in range(n):
        q = masses[i] * (ys[i] @ ms[i] + ydds[i])
        for j in range(n):
            if j == i:
                continue
            key = (min(i, j), max(i, j))
            if key in couplings:
                q = q + ys[j] @ couplings[key]
        out.append(q)
    return out


def frob(a: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a, axis=(-2, -1))


@dataclass(frozen=True)
class TrapControl:
    """Physical trap settings per ion on the simulation grid.

    The trap contributes ``m_i x^T curvature_i x / 2 - force_i . x`` to the
    energy of ion ``i``; the Coulomb interaction is added on top of it.
    """

    times: np.ndarray
    curvature: np.ndarray
    force: np.ndarray
    masses: np.ndarray

    def centers(self) -> np.ndarray:
        """Trap centres ``(m_i M_i)^-1 F_i``, shape ``(n, N, d)``."""
        return trap_centers(self)


def trap_centers(control: TrapControl) -> np.ndarray:
    mm = control.masses[None, :, None, None] * control.curvature
    lam = np.linalg.eigvalsh(sym(mm))
    small = np.abs(lam).min(axis=-1) <= 1e-12 * np.abs(lam).max(axis=-1)
    if np.any(small):
        k, i = np.argwhere(small)[0]
        raise SingularMatrixError(f"trap curvature of ion {i} singular at t = {control.times[k]:.6g}")
    return np.linalg.solve(mm, control.force[..., None])[..., 0]


@dataclass(frozen=True)
class Synthesis:
    """Everything produced by :func:`synthesize` for one protocol."""

    grid: np.ndarray
    control: TrapControl
    hamiltonian: HamiltonianSchedule
    frames: InvariantFrame
    designed: np.ndarray
    mtilde: np.ndarray
    hamiltonian_curvature: np.ndarray
    q_residual: np.ndarray
    unitarity_drift: float


Trajectory = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def synthesize(
    schedule: RSchedule,
    trajectory: Trajectory,
    ions: Sequence[IonSpecies],
    kappa: float,
    grid: np.ndarray,
) -> Synthesis:
    """Run the inverse-engineering pipeline for two ions sharing one curvature.

    ``trajectory(t)`` returns designed positions, velocities and
    accelerations of shape ``(..., 2, d)``. The Coulomb coupling is evaluated
    at the designed separation. The Hamiltonian is sampled on the half-step
    grid so that RK4 stages see exact coefficients.
    """
    if len(ions) != 2:
        raise ValueError("synthesis is implemented for the symmetric two-ion case")
    grid = np.asarray(grid, dtype=float)
    h = uniform_step(grid)
    n = grid.size
    fine = np.empty(2 * n - 1)
    fine[0::2] = grid
    fine[1::2] = 0.5 * (grid[:-1] + grid[1:])
    masses = np.array([ion.mass for ion in ions])
    m1, m2 = masses
    msym = np.sqrt(m1 * m2)

    lam = np.linalg.eigvalsh(schedule.value(fine))
    if np.any(lam[:, 0] <= 1e-12 * lam[:, -1]):
        k = int(np.argmax(lam[:, 0] <= 1e-12 * lam[:, -1]))
        raise ValueError(f"R loses positive definiteness at t = {fine[k]:.6g}")
    r, rd, rdd = schedule(fine)
    j = solve_J(r, rd)
    a = compute_A(r, rd, j)
    mt = solve_Mtilde(r, rd, rdd, a)

    x, v, acc = trajectory(fine)
    x, v, acc = (np.asarray(arr, dtype=float) for arr in (x, v, acc))
    d = x.shape[-1]
    couplings, curv_shift, force_shift = coulomb_terms(x, ions, kappa)
    dmat = couplings[(0, 1)]
    m_ham = trap_from_Mtilde(mt, dmat, m1, m2)
    if symmetry_error(m_ham) > 1e-10:
        raise ConsistencyError("synthesised curvature is not symmetric")

    nd = 2 * d
    omega = np.zeros((fine.size, 2 * nd, 2 * nd))
    for i in range(2):
        sl = slice(i * d, (i + 1) * d)
        omega[:, sl, sl] = masses[i] * m_ham
        omega[:, nd + i * d:nd + (i + 1) * d, nd + i * d:nd + (i + 1) * d] = np.eye(d) / masses[i]
    omega[:, :d, d:nd] = dmat
    omega[:, d:nd, :d] = np.swapaxes(dmat, -1, -2)

    z = np.concatenate([x.reshape(fine.size, nd), (masses[:, None] * v).reshape(fine.size, nd)], axis=-1)
    zdot = np.concatenate([v.reshape(fine.size, nd), (masses[:, None] * acc).reshape(fine.size, nd)], axis=-1)
    drive = linear_drive(z, zdot, omega)
    ham = HamiltonianSchedule(fine, omega, drive, 2, d)

    # physical trap = Hamiltonian coefficients minus the Coulomb self terms
    f_ham = -drive[:, :nd].reshape(fine.size, 2, d)
    curv_trap = m_ham[:, None] - curv_shift
    force_trap = f_ham - force_shift
    coarse = slice(0, None, 2)
    control = TrapControl(grid, curv_trap[coarse], force_trap[coarse], masses)

    u = propagate_U(a, grid)
    eye = np.eye(d)
    drift = float(np.max(np.abs(dagger(u) @ u - eye)))
    rc, rdc, rddc, ac, jc = r[coarse], rd[coarse], rdd[coarse], a[coarse], j[coarse]
    frames = build_gamma(rc, rdc, u, masses, z[coarse], a=ac)

    ad = compute_A_dot(rc, rdc, rddc, jc)
    pdd = u @ (ac @ ac @ rc + 2.0 * ac @ rdc + ad @ rc + rddc)
    p = u @ rc
    ys = [p / np.sqrt(mi) for mi in masses]
    ydds = [pdd / np.sqrt(mi) for mi in masses]
    mh = m_ham[coarse]
    qs = residual_Q(ys, ydds, [mh, mh], {(0, 1): dmat[coarse]}, masses)
    q_rel = np.stack([frob(q) / frob(mi * yd) for q, mi, yd in zip(qs, masses, ydds)], axis=-1)

    return Synthesis(
        grid=grid,
        control=control,
        hamiltonian=ham,
        frames=frames,
        designed=z[coarse],
        mtilde=mt[coarse],
        hamiltonian_curvature=mh,
        q_residual=q_rel,
        unitarity_drift=drift,
    )
