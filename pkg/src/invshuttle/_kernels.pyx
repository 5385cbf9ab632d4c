# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 propagator for Gaussian first and second moments.

Same contract as ``invshuttle._fallback.gaussian_rk4``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _stage(const double[:, ::1] so, const double[::1] sv,
                        const double[::1] z, const double[:, ::1] s,
                        double[::1] kz, double[:, ::1] ks, double[:, ::1] lmat,
                        Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t a, b, c
    cdef double acc
    for a in range(k):
        acc = sv[a]
        for b in range(k):
            acc = acc + so[a, b] * z[b]
        kz[a] = acc
    for a in range(k):
        for b in range(k):
            acc = 0.0
            for c in range(k):
                acc = acc + so[a, c] * s[c, b]
            lmat[a, b] = acc
    for a in range(k):
        for b in range(k):
            ks[a, b] = lmat[a, b] + lmat[b, a]


def gaussian_rk4(omega, drive, z0, sigma0, double h):
    cdef double[:, :, ::1] om = np.ascontiguousarray(omega, dtype=np.float64)
    cdef double[:, ::1] dr = np.ascontiguousarray(drive, dtype=np.float64)
    cdef Py_ssize_t nfine = om.shape[0]
    cdef Py_ssize_t k = om.shape[1]
    cdef Py_ssize_t half = k // 2
    cdef Py_ssize_t n = (nfine + 1) // 2
    cdef Py_ssize_t i, a, b, step, idx

    so_arr = np.empty((nfine, k, k))
    sv_arr = np.empty((nfine, k))
    cdef double[:, :, ::1] so = so_arr
    cdef double[:, ::1] sv = sv_arr
    for i in range(nfine):
        for a in range(half):
            sv[i, a] = dr[i, half + a]
            sv[i, half + a] = -dr[i, a]
            for b in range(k):
                so[i, a, b] = om[i, half + a, b]
                so[i, half + a, b] = -om[i, a, b]

    zs_arr = np.empty((n, k))
    sig_arr = np.empty((n, k, k))
    cdef double[:, ::1] zs = zs_arr
    cdef double[:, :, ::1] sig = sig_arr
    cdef double[::1] z = np.array(z0, dtype=np.float64)
    cdef double[:, ::1] s = np.array(sigma0, dtype=np.float64)

    ztmp_a = np.empty(k)
    cdef double[::1] ztmp = ztmp_a
    cdef double[:, ::1] stmp = np.empty((k, k))
    cdef double[:, ::1] lmat = np.empty((k, k))
    cdef double[:, ::1] kz = np.empty((4, k))
    cdef double[:, :, ::1] ks = np.empty((4, k, k))
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double c

    zs[0, :] = z
    sig[0, :, :] = s
    with nogil:
        for step in range(n - 1):
            idx = 2 * step
            _stage(so[idx], sv[idx], z, s, kz[0], ks[0], lmat, k)
            for a in range(k):
                ztmp[a] = z[a] + h2 * kz[0, a]
                for b in range(k):
                    stmp[a, b] = s[a, b] + h2 * ks[0, a, b]
            _stage(so[idx + 1], sv[idx + 1], ztmp, stmp, kz[1], ks[1], lmat, k)
            for a in range(k):
                ztmp[a] = z[a] + h2 * kz[1, a]
                for b in range(k):
                    stmp[a, b] = s[a, b] + h2 * ks[1, a, b]
            _stage(so[idx + 1], sv[idx + 1], ztmp, stmp, kz[2], ks[2], lmat, k)
            for a in range(k):
                ztmp[a] = z[a] + h * kz[2, a]
                for b in range(k):
                    stmp[a, b] = s[a, b] + h * ks[2, a, b]
            _stage(so[idx + 2], sv[idx + 2], ztmp, stmp, kz[3], ks[3], lmat, k)
            for a in range(k):
                z[a] = z[a] + h6 * (kz[0, a] + 2.0 * kz[1, a] + 2.0 * kz[2, a] + kz[3, a])
                for b in range(k):
                    s[a, b] = s[a, b] + h6 * (ks[0, a, b] + 2.0 * ks[1, a, b]
                                              + 2.0 * ks[2, a, b] + ks[3, a, b])
            for a in range(k):
                for b in range(a + 1, k):
                    c = 0.5 * (s[a, b] + s[b, a])
                    s[a, b] = c
                    s[b, a] = c
            zs[step + 1, :] = z
            sig[step + 1, :, :] = s
    return zs_arr, sig_arr
