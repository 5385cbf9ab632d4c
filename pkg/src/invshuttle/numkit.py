"""Dense small-matrix kernels shared by the rest of the package.

All matrix routines accept stacks of matrices with shape ``(..., k, k)`` so
that whole time series can be processed in one call.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

SPD_TOL = 1e-12
ANTICOMM_TOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when an input that must be invertible (or definite) is not."""


class IllConditionedError(np.linalg.LinAlgError):
    """Raised when an anticommutator equation cannot be solved reliably."""


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part ``(a + a^T) / 2`` over the last two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def antisym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def symmetry_error(a: np.ndarray) -> float:
    """Largest relative Frobenius asymmetry over a stack of matrices."""
    a = np.asarray(a)
    num = np.linalg.norm(a - np.swapaxes(a, -1, -2), axis=(-2, -1))
    den = np.maximum(np.linalg.norm(a, axis=(-2, -1)), np.finfo(float).tiny)
    return float(np.max(num / den))


def spd_power(m: np.ndarray, e: float) -> np.ndarray:
    """Real power of a symmetric positive-definite matrix (or stack).

    Computed as ``V diag(lambda**e) V^T`` from the symmetric
    eigendecomposition, so the result shares the eigenvectors of ``m``.

    Raises
    ------
    SingularMatrixError
        If any eigenvalue is below ``1e-12`` times the largest one.
    """
    m = np.asarray(m, dtype=float)
    w, v = np.linalg.eigh(sym(m))
    top = np.max(np.abs(w), axis=-1, keepdims=True)
    if np.any(w <= SPD_TOL * top):
        raise SingularMatrixError(
            f"matrix is not positive definite (smallest eigenvalue {w.min():.3e})"
        )
    return sym((v * w[..., None, :] ** e) @ np.swapaxes(v, -1, -2))


def solve_anticommutator(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve ``X a + a X = c`` for ``X`` with ``a`` symmetric positive definite.

    In the eigenbasis of ``a`` the equation is diagonal,
    ``X'_ij = c'_ij / (l_i + l_j)``.  The map preserves symmetry and
    antisymmetry, so a symmetric (antisymmetric) ``c`` yields a symmetric
    (antisymmetric) ``X``; complex right-hand sides are handled as well.
    """
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eigh(sym(a))
    denom = w[..., :, None] + w[..., None, :]
    top = np.max(np.abs(w), axis=-1)[..., None, None]
    if np.any(denom <= ANTICOMM_TOL * top):
        raise IllConditionedError("anticommutator with a is (nearly) singular")
    vt = np.swapaxes(v, -1, -2)
    return v @ ((vt @ c @ v) / denom) @ vt


def nearest_unitary(m: np.ndarray) -> np.ndarray:
    """Unitary factor ``U`` of the polar decomposition ``m = U H``.

    Uses the SVD ``m = W s V^H``, for which ``U = W V^H`` and
    ``H = V s V^H``.
    """
    m = np.asarray(m)
    w, s, vh = np.linalg.svd(m)
    if np.any(s <= 1e-14 * np.max(s, axis=-1, keepdims=True)):
        raise SingularMatrixError("polar decomposition of a singular matrix")
    return w @ vh


def uniform_step(grid: np.ndarray) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid needs at least two points")
    steps = np.diff(grid)
    h = (grid[-1] - grid[0]) / (grid.size - 1)
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * abs(h):
        raise ValueError("grid must be strictly increasing and uniform")
    return float(h)


def rk4_path(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    grid: np.ndarray,
) -> np.ndarray:
    """Classical fixed-step RK4 sampled at every grid point.

    ``y0`` may be an array of any shape (and complex). Returns an array of
    shape ``(len(grid),) + y0.shape``.
    """
    grid = np.asarray(grid, dtype=float)
    h = uniform_step(grid)
    y = np.array(y0, copy=True)
    out = np.empty((grid.size,) + y.shape, dtype=np.result_type(y, float))
    out[0] = y
    t0 = grid[0]
    for n in range(grid.size - 1):
        t = t0 + n * h
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[n + 1] = y
    return out
