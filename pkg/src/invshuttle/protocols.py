"""Ion-separation protocols: from physical parameters to simulated results."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import constants as sc

from .coulomb import equilibrium_positions, interaction_matrix
from .dynamics import (
    SimulationTrace,
    invariant_expectations,
    invariant_residual,
    propagate,
)
from .invariant import (
    Synthesis,
    TrapControl,
    boundary_R,
    interpolate_R,
    polynomial_p,
    synthesize,
    trap_centers,
)
from .model import (
    YB171_MASS_AMU,
    FockDistribution,
    GaussianState,
    IonSpecies,
    QuadraticHamiltonian,
    UnitSystem,
    fidelity,
    fock_populations,
    ground_state,
)

__all__ = [
    "SeparationSpec",
    "ProtocolResult",
    "BuiltProtocol",
    "StraightLineTrajectory",
    "polynomial_p",
    "build_transfer",
    "build_separation",
    "run",
    "run_built",
    "sweep",
    "trap_centers",
    "default_steps",
    "default_sweep_durations",
]

STEPS_PER_UNIT_TIME = 4000 / 3


def default_steps(duration: float) -> int:
    """Even step count, 4000 for ``T = 3``, proportional to ``T``."""
    return 2 * max(1, math.ceil(STEPS_PER_UNIT_TIME * duration / 2 - 1e-9))


def default_sweep_durations() -> List[float]:
    return [float(t) for t in np.geomspace(2.0, 12.0, 15)]


@dataclass(frozen=True)
class SeparationSpec:
    """Physical parameters of the T-junction separation.

    Frequencies are angular (rad/s), lengths in metres and the duration in
    units of ``1/omega_t``.
    """

    omega_t: float = 2 * math.pi * 1e6
    omega_r: float = 2 * math.pi * 10e6
    ion_mass_amu: float = YB171_MASS_AMU
    ion_charge: float = 1.0
    separation: float = 200e-6
    transverse_offset: float = 100e-6
    duration: float = 3.0
    dimension: int = 2
    omega_z: Optional[float] = None
    steps: Optional[int] = None
    fock_cutoff: int = 4
    quadrature_nodes: Optional[int] = None
    coulomb_scale: float = 1.0

    def __post_init__(self):
        if not self.omega_t > 0:
            raise ValueError("omega_t must be positive")
        if not self.omega_r > self.omega_t:
            raise ValueError("omega_r must exceed omega_t")
        if not self.separation > 0:
            raise ValueError("separation must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.ion_mass_amu <= 0 or self.ion_charge <= 0:
            raise ValueError("ion mass and charge must be positive")
        if self.coulomb_scale < 0:
            raise ValueError("coulomb_scale must be non-negative")
        if self.steps is not None and (self.steps < 2 or self.steps % 2):
            raise ValueError("steps must be an even number >= 2")

    @property
    def units(self) -> UnitSystem:
        return UnitSystem(self.ion_mass_amu * sc.atomic_mass, self.omega_t)

    @property
    def kappa(self) -> float:
        return self.coulomb_scale * self.units.coulomb_strength(self.ion_charge, self.ion_charge)

    @property
    def n_steps(self) -> int:
        return default_steps(self.duration) if self.steps is None else int(self.steps)

    def confinements(self) -> Tuple[np.ndarray, np.ndarray]:
        """Initial and final trap curvatures in units of ``omega_t^2``."""
        wr = self.omega_r / self.omega_t
        m0 = [1.0, wr**2]
        mT = [wr**2, 1.0]
        if self.dimension == 3:
            wz = (self.omega_z if self.omega_z is not None else self.omega_r) / self.omega_t
            m0.append(wz**2)
            mT.append(wz**2)
        return np.diag(m0), np.diag(mT)

    def final_positions(self) -> np.ndarray:
        half = self.units.length_from_si(0.5 * self.separation)
        y = self.units.length_from_si(self.transverse_offset)
        pos = np.zeros((2, self.dimension))
        pos[0, :2] = [half, y]
        pos[1, :2] = [-half, y]
        return pos


@dataclass(frozen=True)
class StraightLineTrajectory:
    """``x_i(t) = (1 - p(t/T)) x_i(0) + p(t/T) x_i(T)``."""

    start: np.ndarray
    end: np.ndarray
    duration: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p, dp, ddp = polynomial_p(t / self.duration)
        step = self.end - self.start
        x = self.start + np.asarray(p)[..., None, None] * step
        v = np.asarray(dp)[..., None, None] / self.duration * step
        a = np.asarray(ddp)[..., None, None] / self.duration**2 * step
        return x, v, a


@dataclass
class BuiltProtocol:
    ions: Tuple[IonSpecies, IonSpecies]
    kappa: float
    grid: np.ndarray
    synthesis: Synthesis
    initial_state: GaussianState
    final_hamiltonian: QuadraticHamiltonian
    trajectory: StraightLineTrajectory

    @property
    def control(self) -> TrapControl:
        return self.synthesis.control

    @property
    def designed(self) -> np.ndarray:
        return self.synthesis.designed

    @property
    def initial_hamiltonian(self) -> QuadraticHamiltonian:
        return self.synthesis.hamiltonian.at(0)


def build_transfer(
    ions: Sequence[IonSpecies],
    kappa: float,
    m_initial,
    m_final,
    final_positions,
    duration: float,
    steps: int,
) -> BuiltProtocol:
    """Design a two-ion transfer between two static traps.

    ``m_initial``/``m_final`` are physical trap curvatures (the Coulomb
    self-terms come on top). The ions start at the classical equilibrium of
    the initial trap and end at ``final_positions`` (shape ``(2, d)``).
    """
    if len(ions) != 2 or ions[0].mass != ions[1].mass:
        raise ValueError("the symmetric scheme needs two ions of equal mass")
    m = ions[0].mass
    m_initial = np.asarray(m_initial, dtype=float)
    m_final = np.asarray(m_final, dtype=float)
    x1, x2 = equilibrium_positions(m_initial, ions, kappa)
    start = np.stack([x1, x2])
    end = np.asarray(final_positions, dtype=float)
    d0 = interaction_matrix(x1 - x2, kappa)
    dT = interaction_matrix(end[0] - end[1], kappa)
    r0 = boundary_R(m_initial - d0 / m, d0, m, m)
    rT = boundary_R(m_final - dT / m, dT, m, m)
    grid = np.linspace(0.0, duration, steps + 1)
    schedule = interpolate_R(r0, rT, duration, check_times=grid)
    traj = StraightLineTrajectory(start, end, duration)
    synth = synthesize(schedule, traj, ions, kappa, grid)
    h0 = synth.hamiltonian.at(0)
    hT = synth.hamiltonian.at(len(synth.hamiltonian) - 1)
    return BuiltProtocol(tuple(ions), kappa, grid, synth, ground_state(h0), hT, traj)


def build_separation(spec: SeparationSpec) -> BuiltProtocol:
    m0, mT = spec.confinements()
    ion = IonSpecies(1.0, spec.ion_charge)
    return build_transfer(
        (ion, ion), spec.kappa, m0, mT, spec.final_positions(), spec.duration, spec.n_steps
    )


@dataclass
class ProtocolResult:
    duration: float
    fidelity: float
    populations: FockDistribution
    trace: SimulationTrace
    control: TrapControl
    centers: np.ndarray
    designed: np.ndarray
    target: GaussianState
    diagnostics: Dict[str, float]
    snapshots: Dict[str, np.ndarray] = field(default_factory=dict)

    def summary(self) -> Dict[str, float]:
        out = {"duration": self.duration, "fidelity": self.fidelity}
        out.update(self.diagnostics)
        return out


def run_built(built: BuiltProtocol, fock_cutoff: int = 4, quadrature_nodes=None) -> ProtocolResult:
    synth = built.synthesis
    grid = built.grid
    trace = propagate(synth.hamiltonian, built.initial_state, grid)
    omega_grid = synth.hamiltonian.omega[0::2]
    resid = invariant_residual(synth.frames, omega_grid, grid)
    expect = invariant_expectations(trace, synth.frames)
    trace.invariant_residual = resid
    trace.invariant_expectation = expect

    target = ground_state(built.final_hamiltonian)
    final = trace.final
    fid = fidelity(final, target)
    pops = fock_populations(final, built.final_hamiltonian.decoupled(), fock_cutoff, quadrature_nodes)

    d = synth.control.curvature.shape[-1]
    mean_err = np.abs(trace.means - built.designed)
    purity = trace.purity
    diagnostics = {
        "max_invariant_residual": float(np.nanmax(resid)) if np.any(np.isfinite(resid)) else 0.0,
        "invariant_drift": float(np.max(np.abs(expect - expect[0])) / abs(expect[0])),
        "max_q_residual": float(np.max(synth.q_residual)),
        "max_mean_error": float(np.max(mean_err)),
        "final_mean_error": float(np.max(np.abs(final.mean - target.mean))),
        "mirror_error": float(np.max(np.abs(trace.means[:, 0] + trace.means[:, d]))),
        "max_purity_drift": float(np.max(np.abs(purity - 1.0))),
        "unitarity_drift": synth.unitarity_drift,
        "population_total": pops.total,
    }
    n = grid.size
    snapshots = {
        "t0": trace.covs[0],
        "t_half": trace.covs[(n - 1) // 2],
        "t_final": trace.covs[-1],
        "target": target.cov,
    }
    return ProtocolResult(
        duration=float(grid[-1]),
        fidelity=fid,
        populations=pops,
        trace=trace,
        control=synth.control,
        centers=trap_centers(synth.control),
        designed=built.designed,
        target=target,
        diagnostics=diagnostics,
        snapshots=snapshots,
    )


def run(spec: SeparationSpec) -> ProtocolResult:
    """Build, simulate and analyse one separation protocol."""
    return run_built(build_separation(spec), spec.fock_cutoff, spec.quadrature_nodes)


@dataclass
class SweepPoint:
    duration: float
    fidelity: float
    residual: float
    status: str
    wall_time: float
    message: str = ""


def _steps_for(spec: SeparationSpec, duration: float) -> Optional[int]:
    if spec.steps is None:
        return None
    return 2 * max(1, math.ceil(spec.steps * duration / spec.duration / 2 - 1e-9))


def _sweep_point(spec: SeparationSpec, duration: float) -> SweepPoint:
    t0 = time.perf_counter()
    try:
        built = build_separation(replace(spec, duration=duration, steps=_steps_for(spec, duration)))
        trace = propagate(built.synthesis.hamiltonian, built.initial_state, built.grid)
        fid = fidelity(trace.final, ground_state(built.final_hamiltonian))
        resid = invariant_residual(built.synthesis.frames, built.synthesis.hamiltonian.omega[0::2], built.grid)
        rmax = float(np.nanmax(resid)) if np.any(np.isfinite(resid)) else 0.0
        return SweepPoint(duration, fid, rmax, "ok", time.perf_counter() - t0)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return SweepPoint(duration, float("nan"), float("nan"), "error", time.perf_counter() - t0, str(exc))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("INVSHUTTLE_WORKERS", "1")))
    except ValueError:
        return 1


def sweep(spec: SeparationSpec, durations: Sequence[float], workers: Optional[int] = None) -> List[SweepPoint]:
    """Independent runs for each duration; results keep the input order."""
    durations = [float(t) for t in durations]
    if not durations:
        raise ValueError("no durations given")
    if any(t <= 0 for t in durations):
        raise ValueError("durations must be positive")
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(durations) == 1:
        return [_sweep_point(spec, t) for t in durations]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, [spec] * len(durations), durations))
