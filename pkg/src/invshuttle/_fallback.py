"""Pure numpy implementation of the RK4 Gaussian-moment propagator."""
from __future__ import annotations

import numpy as np


def gaussian_rk4(omega, drive, z0, sigma0, h):
    """RK4 for ``Z' = S (Omega Z + V)`` and ``Sigma' = S Omega Sigma - Sigma Omega S``.

    ``omega``/``drive`` are sampled on the half-step grid (``2 n - 1``
    samples for ``n`` output points), so stage ``k`` of step ``i`` reads
    sample ``2 i``, ``2 i + 1`` or ``2 i + 2``.
    """
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    drive = np.ascontiguousarray(drive, dtype=np.float64)
    nfine, k, _ = omega.shape
    n = (nfine + 1) // 2
    half = k // 2
    # S @ X swaps the position/momentum halves with a sign
    so = np.concatenate([omega[:, half:, :], -omega[:, :half, :]], axis=1)
    sv = np.concatenate([drive[:, half:], -drive[:, :half]], axis=1)

    zs = np.empty((n, k))
    sigmas = np.empty((n, k, k))
    z = np.array(z0, dtype=np.float64)
    s = np.array(sigma0, dtype=np.float64)
    zs[0] = z
    sigmas[0] = s

    def fz(i, z):
        return so[i] @ z + sv[i]

    def fs(i, s):
        lmat = so[i] @ s
        return lmat + lmat.T

    h2 = 0.5 * h
    h6 = h / 6.0
    for step in range(n - 1):
        i0, i1, i2 = 2 * step, 2 * step + 1, 2 * step + 2
        kz1 = fz(i0, z)
        ks1 = fs(i0, s)
        kz2 = fz(i1, z + h2 * kz1)
        ks2 = fs(i1, s + h2 * ks1)
        kz3 = fz(i1, z + h2 * kz2)
        ks3 = fs(i1, s + h2 * ks2)
        kz4 = fz(i2, z + h * kz3)
        ks4 = fs(i2, s + h * ks3)
        z = z + h6 * (kz1 + 2.0 * kz2 + 2.0 * kz3 + kz4)
        s = s + h6 * (ks1 + 2.0 * ks2 + 2.0 * ks3 + ks4)
        s = 0.5 * (s + s.T)
        zs[step + 1] = z
        sigmas[step + 1] = s
    return zs, sigmas
