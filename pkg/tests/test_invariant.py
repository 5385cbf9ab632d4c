import numpy as np
import pytest

from invshuttle.coulomb import interaction_matrix
from invshuttle.dynamics import invariant_residual
from invshuttle.invariant import (
    ConsistencyError,
    StepSizeError,
    TrapControl,
    boundary_R,
    compute_A,
    compute_A_dot,
    interpolate_R,
    linear_drive,
    polynomial_p,
    propagate_U,
    solve_J,
    solve_Mtilde,
    synthesize,
    trap_centers,
)
from invshuttle.model import IonSpecies, symplectic_form
from invshuttle.numkit import SingularMatrixError, spd_power, sym
from invshuttle.protocols import StraightLineTrajectory


def spd(rng, n, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return sym(q @ np.diag(rng.uniform(lo, hi, n)) @ q.T)


def test_polynomial_p_boundaries():
    p, dp, ddp = polynomial_p(np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(p, [0.0, 0.5, 1.0], atol=1e-15)
    np.testing.assert_allclose(dp[[0, 2]], 0.0, atol=1e-15)
    np.testing.assert_allclose(ddp[[0, 2]], 0.0, atol=1e-15)
    with pytest.raises(ValueError):
        polynomial_p(1.1)
    with pytest.raises(ValueError):
        polynomial_p(-0.01)


def test_polynomial_p_derivatives_match_finite_differences():
    tau = np.linspace(0.1, 0.9, 9)
    h = 1e-5
    p_plus, dp_plus, _ = polynomial_p(tau + h)
    p_minus, dp_minus, _ = polynomial_p(tau - h)
    _, dp, ddp = polynomial_p(tau)
    np.testing.assert_allclose((p_plus - p_minus) / (2 * h), dp, atol=1e-8)
    np.testing.assert_allclose((dp_plus - dp_minus) / (2 * h), ddp, atol=1e-7)


def test_boundary_R_inverts_fourth_power():
    m = np.diag([1.0, 100.0])
    d = interaction_matrix(np.array([3.0, 0.0]), 5.0)
    r = boundary_R(m - d, d, 1.0, 1.0)
    np.testing.assert_allclose(np.linalg.matrix_power(np.linalg.inv(r), 4), m, rtol=1e-12)
    with pytest.raises(ValueError):
        boundary_R(np.diag([1.0, -1.0]), np.zeros((2, 2)), 1.0, 1.0)


def test_interpolate_R_boundaries_and_derivatives(rng):
    r0, rT = spd(rng, 2), spd(rng, 2)
    sched = interpolate_R(r0, rT, 2.0)
    np.testing.assert_allclose(sched.value(0.0), r0)
    np.testing.assert_allclose(sched.value(2.0), rT)
    for t in (0.0, 2.0):
        np.testing.assert_array_equal(sched.first(t), 0.0)
        np.testing.assert_array_equal(sched.second(t), 0.0)


def _random_schedule(rng, n=2, duration=3.0):
    return interpolate_R(spd(rng, n), spd(rng, n), duration)


def test_J_solves_its_defining_equation(rng):
    sched = _random_schedule(rng, 3)
    r, rd, _ = sched(1.1)
    j = solve_J(r, rd)
    ri = np.linalg.inv(r)
    b = ri @ ri
    np.testing.assert_allclose(j, -j.T, atol=1e-13)
    lhs = j @ b + b @ j
    rhs = rd @ ri - ri @ rd + r @ rd @ b - b @ rd @ r
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_A_is_anti_hermitian(rng):
    sched = _random_schedule(rng, 3)
    r, rd, _ = sched(0.8)
    a = compute_A(r, rd, solve_J(r, rd))
    np.testing.assert_allclose(a, -a.conj().T, atol=1e-13)


def test_A_dot_matches_finite_difference(rng):
    sched = _random_schedule(rng, 2)
    h = 1e-5

    def a_at(t):
        r, rd, _ = sched(t)
        return compute_A(r, rd, solve_J(r, rd))

    t = 1.3
    r, rd, rdd = sched(t)
    ad = compute_A_dot(r, rd, rdd, solve_J(r, rd))
    fd = (a_at(t + h) - a_at(t - h)) / (2 * h)
    np.testing.assert_allclose(ad, fd, atol=1e-8)


def test_scalar_limit_is_ermakov():
    # rho'' + w^2 rho = rho^-3  for a single degree of freedom
    t = np.linspace(0.0, 2.0, 41)
    sched = interpolate_R(np.array([[1.0]]), np.array([[0.6]]), 2.0)
    r, rd, rdd = sched(t)
    j = solve_J(r, rd)
    np.testing.assert_array_equal(j, 0.0)
    mt = solve_Mtilde(r, rd, rdd, compute_A(r, rd, j))
    rho, rhodd = r[:, 0, 0], rdd[:, 0, 0]
    np.testing.assert_allclose(mt[:, 0, 0], rho**-4 - rhodd / rho, rtol=1e-12)


def test_Mtilde_rejects_inconsistent_A(rng):
    sched = _random_schedule(rng, 2)
    r, rd, rdd = sched(1.0)
    bogus = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    with pytest.raises(ConsistencyError):
        solve_Mtilde(r, rd, rdd, bogus)


def test_Mtilde_static_limit():
    m = np.array([[2.0, 0.3], [0.3, 5.0]])
    r = spd_power(m, -0.25)
    z = np.zeros((2, 2))
    a = compute_A(r, z, solve_J(r, z))
    np.testing.assert_allclose(solve_Mtilde(r, z, z, a), m, rtol=1e-12)


def test_linear_drive_makes_Z_a_trajectory(rng):
    omega = sym(rng.normal(size=(4, 4)))
    z, zdot = rng.normal(size=4), rng.normal(size=4)
    v = linear_drive(z, zdot, omega)
    np.testing.assert_allclose(symplectic_form(2) @ (omega @ z + v), zdot, atol=1e-13)


def test_propagate_U_unitary_and_callable_equivalent(rng):
    sched = _random_schedule(rng, 2, duration=1.0)
    grid = np.linspace(0.0, 1.0, 201)
    fine = np.linspace(0.0, 1.0, 401)

    def a_at(t):
        r, rd, _ = sched(t)
        return compute_A(r, rd, solve_J(r, rd))

    u_call = propagate_U(a_at, grid)
    u_samp = propagate_U(np.stack([a_at(t) for t in fine]), grid)
    np.testing.assert_allclose(u_call, u_samp, atol=1e-13)
    for u in u_call[::50]:
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)


def test_propagate_U_flags_coarse_grid():
    a = np.array([[1j * 400.0, 0.0], [0.0, -1j * 400.0]])
    with pytest.raises(StepSizeError):
        propagate_U(lambda t: a + np.array([[0, t], [-t, 0]]), np.linspace(0.0, 1.0, 101))


def _generic_synthesis(rng, steps=2000, duration=2.0):
    ions = [IonSpecies(1.0)] * 2
    kappa = 3.0
    start = np.array([[1.2, 0.1], [-1.2, -0.1]])
    end = np.array([[2.5, 1.0], [-2.5, 1.0]])
    r0, rT = spd(rng, 2, 0.6, 1.2), spd(rng, 2, 0.6, 1.2)
    sched = interpolate_R(r0, rT, duration)
    grid = np.linspace(0.0, duration, steps + 1)
    return synthesize(sched, StraightLineTrajectory(start, end, duration), ions, kappa, grid), sched


def test_synthesis_residual_for_non_commuting_R(rng):
    synth, _ = _generic_synthesis(rng)
    assert np.max(synth.q_residual) < 1e-8
    assert synth.unitarity_drift < 1e-10
    np.testing.assert_allclose(
        synth.hamiltonian_curvature, np.swapaxes(synth.hamiltonian_curvature, -1, -2), atol=1e-10
    )


def test_synthesised_gamma_obeys_equation_of_motion(rng):
    synth, _ = _generic_synthesis(rng)
    resid = invariant_residual(synth.frames, synth.hamiltonian.omega[0::2], synth.grid)
    assert np.nanmax(resid) < 1e-7


def test_synthesis_boundaries_are_static(rng):
    synth, sched = _generic_synthesis(rng)
    for k, r in ((0, sched.r0), (-1, sched.rT)):
        np.testing.assert_allclose(synth.mtilde[k], np.linalg.matrix_power(np.linalg.inv(r), 4), rtol=1e-10)


def test_trap_centers_static_single_ion():
    curv = np.array([[[[1.0, 0.2], [0.2, 3.0]]]])
    x = np.array([0.4, -0.7])
    force = (2.0 * curv[0, 0] @ x)[None, None]
    ctrl = TrapControl(np.array([0.0]), curv, force, np.array([2.0]))
    np.testing.assert_allclose(trap_centers(ctrl)[0, 0], x)


def test_trap_centers_report_singular_time():
    curv = np.zeros((2, 1, 2, 2))
    curv[0, 0] = np.eye(2)
    ctrl = TrapControl(np.array([0.0, 0.5]), curv, np.zeros((2, 1, 2)), np.array([1.0]))
    with pytest.raises(SingularMatrixError, match="t = 0.5"):
        trap_centers(ctrl)
