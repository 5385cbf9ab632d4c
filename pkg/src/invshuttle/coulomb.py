"""Coulomb coupling in the Gaussian (second-order) approximation."""
from __future__ import annotations

from typing import Dict, Sequence, Tuple

import numpy as np

from .model import IonSpecies
from .numkit import sym

COALESCENCE_TOL = 1e-9


class CoalescenceError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def _norms(r: np.ndarray, kappa: float) -> np.ndarray:
    n = np.linalg.norm(r, axis=-1)
    if kappa != 0 and np.any(n < COALESCENCE_TOL):
        raise CoalescenceError("ion separation below 1e-9 oscillator lengths")
    return n


def interaction_matrix(r: np.ndarray, kappa: float) -> np.ndarray:
    """``D(r) = kappa (1/|r|^3 - 3 r r^T / |r|^5)``, vectorised over leading axes of ``r``.

    With ``kappa == 0`` the ions do not interact and ``D`` vanishes for any ``r``.
    """
    r = np.asarray(r, dtype=float)
    d = r.shape[-1]
    if kappa == 0:
        return np.zeros(r.shape + (d,))
    n = _norms(r, kappa)[..., None, None]
    outer = r[..., :, None] * r[..., None, :]
    return sym(kappa * (np.eye(d) / n**3 - 3.0 * outer / n**5))


def coulomb_quadratic(r: np.ndarray, kappa: float):
    """Value, gradient and hessian of ``kappa / |r|``.

    The hessian is ``-D(r)``; together they give the second-order expansion
    of the interaction energy in the deviation ``delta = (x1 - x2) - r``.
    """
    r = np.asarray(r, dtype=float)
    n = _norms(r, kappa)
    value = kappa / n
    grad = -kappa * r / n[..., None] ** 3
    return value, grad, -interaction_matrix(r, kappa)


def coulomb_terms(positions: np.ndarray, ions: Sequence[IonSpecies], kappa: float):
    """Split the expanded Coulomb energy into Hamiltonian pieces.

    For positions of shape ``(..., N, d)`` returns

    * ``couplings``: dict ``(i, j) -> D(x_i - x_j)`` with shape ``(..., d, d)``;
    * ``curvature_shift``: ``(..., N, d, d)``, ``-sum_j D[i,j] / m_i``;
    * ``force_shift``: ``(..., N, d)``, ``sum_j kappa r_ij/|r_ij|^3 - D[i,j] r_ij``.

    A physical trap ``(M_trap, F_trap)`` then corresponds to the Hamiltonian
    coefficients ``M = M_trap + curvature_shift`` and ``F = F_trap + force_shift``.
    """
    x = np.asarray(positions, dtype=float)
    n_ions, d = x.shape[-2:]
    couplings: Dict[Tuple[int, int], np.ndarray] = {}
    curv = np.zeros(x.shape + (d,))
    force = np.zeros_like(x)
    for i in range(n_ions):
        for j in range(i + 1, n_ions):
            r = x[..., i, :] - x[..., j, :]
            dij = interaction_matrix(r, kappa)
            couplings[(i, j)] = dij
            if kappa != 0:
                n = _norms(r, kappa)[..., None]
                push = kappa * r / n**3 - np.einsum("...ab,...b->...a", dij, r)
            else:
                push = np.zeros_like(r)
            curv[..., i, :, :] -= dij / ions[i].mass
            curv[..., j, :, :] -= dij / ions[j].mass
            force[..., i, :] += push
            force[..., j, :] -= push
    return couplings, curv, force


def equilibrium_positions(
    m0: np.ndarray,
    ions: Sequence[IonSpecies],
    kappa: float,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> Tuple[np.ndarray, np.ndarray]:
    """Classical equilibrium of two ions in the harmonic trap ``m x^T m0 x / 2``.

    Newton iteration on the total force, seeded with the closed-form
    separation ``(2 kappa / (m lambda_min))^(1/3)`` along the softest axis
    of ``m0``. Convergence is declared when every force component is below
    ``tol`` times the Coulomb force scale (at least one).
    """
    m0 = np.asarray(m0, dtype=float)
    d = m0.shape[0]
    if len(ions) != 2:
        raise ValueError("equilibrium_positions handles exactly two ions")
    w, v = np.linalg.eigh(sym(m0))
    if w[0] <= 0:
        raise ValueError("trap curvature must be positive definite")
    if kappa == 0:
        return np.zeros(d), np.zeros(d)
    m1, m2 = ions[0].mass, ions[1].mass
    axis = v[:, 0] * np.sign(v[np.argmax(np.abs(v[:, 0])), 0])
    mu = 2.0 * m1 * m2 / (m1 + m2)
    half = 0.5 * (2.0 * kappa / (mu * w[0])) ** (1.0 / 3.0)
    x = np.concatenate([half * axis, -half * axis])

    def forces(x):
        r = x[:d] - x[d:]
        push = kappa * r / np.linalg.norm(r) ** 3
        return np.concatenate([-m1 * m0 @ x[:d] + push, -m2 * m0 @ x[d:] - push])

    scale = max(1.0, kappa / (2.0 * half) ** 2)
    f = forces(x)
    for _ in range(max_iter):
        if np.max(np.abs(f)) <= tol * scale:
            return x[:d].copy(), x[d:].copy()
        dmat = interaction_matrix(x[:d] - x[d:], kappa)
        jac = np.block([[-m1 * m0 + dmat, -dmat], [-dmat, -m2 * m0 + dmat]])
        x = x - np.linalg.solve(jac, f)
        f = forces(x)
    if np.max(np.abs(f)) <= tol * scale:
        return x[:d].copy(), x[d:].copy()
    raise ConvergenceError("Newton iteration for the equilibrium did not converge", float(np.max(np.abs(f))))
