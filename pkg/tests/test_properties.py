"""Property-based checks of the structural invariants."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from invshuttle.coulomb import interaction_matrix
from invshuttle.dynamics import propagate
from invshuttle.invariant import compute_A, interpolate_R, polynomial_p, solve_J, solve_Mtilde
from invshuttle.model import GaussianState, HamiltonianSchedule, fidelity, ground_state, QuadraticHamiltonian
from invshuttle.numkit import solve_anticommutator, spd_power, sym

finite = st.floats(-1.0, 1.0, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


def spd_from_seed(seed, n, lo=0.3, hi=3.0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return sym(q @ np.diag(rng.uniform(lo, hi, n)) @ q.T)


@given(seeds, st.integers(1, 5), st.sampled_from([-1.0, -0.25, 0.5, 2.0]))
def test_spd_power_round_trip(seed, n, e):
    a = spd_from_seed(seed, n)
    back = spd_power(spd_power(a, e), 1.0 / e)
    np.testing.assert_allclose(back, a, atol=1e-10)
    np.testing.assert_allclose(spd_power(a, e) @ a, a @ spd_power(a, e), atol=1e-10)


@given(seeds, st.integers(1, 5))
def test_anticommutator_residual(seed, n):
    a = spd_from_seed(seed, n)
    c = np.random.default_rng(seed + 1).normal(size=(n, n))
    x = solve_anticommutator(a, c)
    np.testing.assert_allclose(a @ x + x @ a, c, atol=1e-10)


@given(st.floats(0.0, 1.0))
def test_polynomial_p_point_symmetry(tau):
    p, dp, ddp = polynomial_p(tau)
    q, dq, ddq = polynomial_p(1.0 - tau)
    assert abs(p + q - 1.0) < 1e-13
    assert abs(dp - dq) < 1e-12
    assert abs(ddp + ddq) < 1e-11
    assert -1e-15 <= p <= 1 + 1e-15


@given(arrays(float, 3, elements=st.floats(0.2, 5.0) | st.floats(-5.0, -0.2)), seeds)
def test_interaction_matrix_rotation_and_trace(r, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    d = interaction_matrix(r, 1.7)
    np.testing.assert_allclose(interaction_matrix(q @ r, 1.7), q @ d @ q.T, atol=1e-9 * np.abs(d).max())
    # traceless in three dimensions
    assert abs(np.trace(d)) < 1e-10 * np.abs(d).max()


@given(seeds, st.floats(0.5, 4.0))
@settings(max_examples=30, deadline=None)
def test_mtilde_real_symmetric_for_random_schedules(seed, duration):
    sched = interpolate_R(spd_from_seed(seed, 2), spd_from_seed(seed + 7, 2), duration)
    t = np.linspace(0.0, duration, 9)
    r, rd, rdd = sched(t)
    mt = solve_Mtilde(r, rd, rdd, compute_A(r, rd, solve_J(r, rd)))
    np.testing.assert_allclose(mt, np.swapaxes(mt, -1, -2), atol=1e-10 * np.abs(mt).max())


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_gaussian_dynamics_preserve_purity_and_uncertainty(seed):
    rng = np.random.default_rng(seed)
    n = 2
    grid = np.linspace(0.0, 1.0, 201)
    fine = np.linspace(0.0, 1.0, 401)
    base = spd_from_seed(seed, n, 0.5, 4.0)
    mod = sym(rng.normal(size=(n, n)))
    omega = np.zeros((fine.size, 2 * n, 2 * n))
    omega[:, :n, :n] = base + 0.3 * np.sin(3 * fine)[:, None, None] * mod
    omega[:, n:, n:] = np.eye(n)
    drive = rng.normal(size=2 * n) * np.cos(fine)[:, None]
    sched = HamiltonianSchedule(fine, omega, drive, 1, n)
    s0 = ground_state(sched.at(0))
    trace = propagate(sched, s0, grid)
    np.testing.assert_allclose(trace.purity, 1.0, atol=1e-8)
    for k in (0, 100, 200):
        st_k = trace.state(k)
        assert st_k.uncertainty_gap() >= -1e-10
        np.testing.assert_allclose(st_k.cov, st_k.cov.T, atol=0)


@given(seeds)
@settings(max_examples=30)
def test_fidelity_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    ha = QuadraticHamiltonian(spd_from_seed(seed, 2), np.eye(2), rng.normal(size=4), 1, 2)
    hb = QuadraticHamiltonian(spd_from_seed(seed + 3, 2), np.eye(2), rng.normal(size=4), 1, 2)
    a, b = ground_state(ha), ground_state(hb)
    f = fidelity(a, b)
    assert 0.0 <= f <= 1.0
    assert abs(f - fidelity(b, a)) < 1e-12
    assert abs(fidelity(a, a) - 1.0) < 1e-12
    assert isinstance(GaussianState(a.mean, a.cov).purity_det(), float)
