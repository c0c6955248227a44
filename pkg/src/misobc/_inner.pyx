# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled log-barrier path following for the inner precoder subproblem.

Same algorithm and data layout as ``barrier_core`` in ``_inner_py``; the
orchestration (scaling, start point, fallbacks) is shared and lives there.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, log
from scipy.linalg.cython_lapack cimport dposv

from . import _inner_py

cnp.import_array()

cdef double DEC_TOL = 1e-8


cdef void _rates(const double[:, :, ::1] Ahat, const double[:, ::1] bhat, const double[::1] c,
                 const cnp.intp_t[::1] ls, const double[:, ::1] smask, const double[:, ::1] x,
                 double[:, :, ::1] AX, double[::1] r) noexcept nogil:
    cdef Py_ssize_t L = smask.shape[0], S = smask.shape[1], M2 = x.shape[1]
    cdef Py_ssize_t l, m, i, j
    cdef double acc, q, lin
    for l in range(L):
        q = 0.0
        for m in range(S):
            if smask[l, m] == 0.0:
                continue
            for i in range(M2):
                acc = 0.0
                for j in range(M2):
                    acc = acc + Ahat[l, i, j] * x[m, j]
                AX[l, m, i] = acc
                q = q + x[m, i] * acc
        lin = 0.0
        for i in range(M2):
            lin = lin + bhat[l, i] * x[ls[l], i]
        r[l] = c[l] - q + 2.0 * lin


cdef bint _slacks(const double[:, :, ::1] Ahat, const double[:, ::1] bhat, const double[::1] c,
                  const cnp.intp_t[::1] ls, const double[:, ::1] smask, const double[:, ::1] Acoef,
                  const double[:, ::1] lin, const double[:, ::1] x, const double[::1] z,
                  double[:, :, ::1] AX, double[::1] r, double[::1] out) noexcept nogil:
    """Fill ``out`` with all slacks (rate, linear, power); false if any is not positive."""
    cdef Py_ssize_t L = smask.shape[0], S = smask.shape[1], M2 = x.shape[1]
    cdef Py_ssize_t nz = z.shape[0], nl = lin.shape[0]
    cdef Py_ssize_t l, m, i, k
    cdef double p = 0.0, s
    cdef bint ok = True
    for m in range(S):
        for i in range(M2):
            p = p + x[m, i] * x[m, i]
    out[L + nl] = 1.0 - p
    if p >= 1.0:
        return False
    _rates(Ahat, bhat, c, ls, smask, x, AX, r)
    for l in range(L):
        s = r[l]
        for k in range(nz):
            s = s + Acoef[l, k] * z[k]
        out[l] = s
        if not s > 0.0:
            ok = False
    for l in range(nl):
        s = 0.0
        for k in range(nz):
            s = s + lin[l, k] * z[k]
        out[L + l] = s
        if not s > 0.0:
            ok = False
    return ok


def barrier_core(Ahat_, bhat_, c_, ls_, smask_, Acoef_, lin_, d_, x_, z_, double tau,
                 double tol, int max_iter, double mult=20.0):
    """Compiled counterpart of ``_inner_py.barrier_core``."""
    cdef const double[:, :, ::1] Ahat = np.ascontiguousarray(Ahat_, dtype=np.float64)
    cdef const double[:, ::1] bhat = np.ascontiguousarray(bhat_, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(c_, dtype=np.float64)
    cdef const cnp.intp_t[::1] ls = np.ascontiguousarray(ls_, dtype=np.intp)
    cdef const double[:, ::1] smask = np.ascontiguousarray(smask_, dtype=np.float64)
    cdef const double[:, ::1] Acoef = np.ascontiguousarray(Acoef_, dtype=np.float64)
    cdef const double[:, ::1] lin = np.ascontiguousarray(lin_, dtype=np.float64)
    cdef const double[::1] d = np.ascontiguousarray(d_, dtype=np.float64)
    cdef double[:, ::1] x = np.array(x_, dtype=np.float64, order="C")
    cdef double[::1] z = np.array(z_, dtype=np.float64)

    cdef Py_ssize_t L = smask.shape[0], S = smask.shape[1], M2 = x.shape[1]
    cdef Py_ssize_t nz = z.shape[0], nl = lin.shape[0]
    cdef Py_ssize_t n = S * M2, N = n + nz
    cdef double[:, :, ::1] AX = np.zeros((L, S, M2))
    cdef double[::1] r = np.zeros(L)
    cdef double[:, ::1] J = np.zeros((L, N))
    cdef double[::1, :] H = np.zeros((N, N), order="F")
    cdef double[::1] g = np.zeros(N)
    cdef double[::1] step = np.zeros(N)
    cdef double[::1] inv = np.zeros(L)
    cdef double[::1] linv = np.zeros(max(nl, 1))
    cdef double[:, ::1] xt = np.zeros((S, M2))
    cdef double[::1] zt = np.zeros(nz)
    cdef double[::1] s0 = np.zeros(L + nl + 1)
    cdef double[::1] s1 = np.zeros(L + nl + 1)
    cdef double dzd, change
    cdef Py_ssize_t l, m, i, j, k, a, bidx
    cdef double s, s_pow, dec, lam, alpha, w, xx, scale
    cdef int used = 0, info = 0, nrhs = 1, Ni = <int>N
    cdef char uplo = b"L"
    cdef Py_ssize_t m_con = L + nl + 1
    cdef bint ok, stop

    with nogil:
        while True:
            while used < max_iter:
                # --- assemble gradient and Hessian of the centering function
                _rates(Ahat, bhat, c, ls, smask, x, AX, r)
                for l in range(L):
                    s = r[l]
                    for k in range(nz):
                        s = s + Acoef[l, k] * z[k]
                    inv[l] = 1.0 / s
                for l in range(L):
                    for m in range(S):
                        for i in range(M2):
                            J[l, m * M2 + i] = -2.0 * smask[l, m] * AX[l, m, i] * inv[l]
                    for i in range(M2):
                        J[l, ls[l] * M2 + i] += 2.0 * bhat[l, i] * inv[l]
                    for k in range(nz):
                        J[l, n + k] = Acoef[l, k] * inv[l]
                for i in range(N):
                    g[i] = 0.0
                    for j in range(i + 1):
                        H[i, j] = 0.0
                for l in range(L):
                    for i in range(N):
                        w = J[l, i]
                        g[i] = g[i] - w
                        if w == 0.0:
                            continue
                        for j in range(i + 1):
                            H[i, j] = H[i, j] + w * J[l, j]
                for l in range(nl):
                    s = 0.0
                    for k in range(nz):
                        s = s + lin[l, k] * z[k]
                    linv[l] = 1.0 / s
                    for k in range(nz):
                        w = lin[l, k] * linv[l]
                        g[n + k] = g[n + k] - w
                        if w == 0.0:
                            continue
                        for a in range(k + 1):
                            H[n + k, n + a] = H[n + k, n + a] + w * lin[l, a] * linv[l]
                for l in range(L):
                    w = 2.0 * inv[l]
                    for m in range(S):
                        if smask[l, m] == 0.0:
                            continue
                        bidx = m * M2
                        for i in range(M2):
                            for j in range(i + 1):
                                H[bidx + i, bidx + j] = H[bidx + i, bidx + j] + w * smask[l, m] * Ahat[l, i, j]
                xx = 0.0
                for m in range(S):
                    for i in range(M2):
                        xx = xx + x[m, i] * x[m, i]
                s_pow = 1.0 - xx
                for i in range(n):
                    g[i] = g[i] + (2.0 / s_pow) * x[i // M2, i % M2]
                    H[i, i] = H[i, i] + 2.0 / s_pow
                    for j in range(i + 1):
                        H[i, j] = H[i, j] + (4.0 / (s_pow * s_pow)) * x[i // M2, i % M2] * x[j // M2, j % M2]
                for k in range(nz):
                    g[n + k] = g[n + k] - tau * d[k]
                # --- Newton step: solve H step = -g
                for i in range(N):
                    step[i] = -g[i]
                dposv(&uplo, &Ni, &nrhs, &H[0, 0], &Ni, &step[0], &Ni, &info)
                if info != 0:
                    # regularize and retry; H was overwritten, so rebuild next round
                    break
                dec = 0.0
                for i in range(N):
                    dec = dec - g[i] * step[i]
                used += 1
                if dec <= DEC_TOL:
                    break
                lam = sqrt(dec if dec > 0.0 else 0.0)
                _slacks(Ahat, bhat, c, ls, smask, Acoef, lin, x, z, AX, r, s0)
                dzd = 0.0
                for k in range(nz):
                    dzd = dzd + d[k] * step[n + k]
                alpha = 1.0
                ok = False
                while alpha >= 1e-12:
                    for m in range(S):
                        for i in range(M2):
                            xt[m, i] = x[m, i] + alpha * step[m * M2 + i]
                    for k in range(nz):
                        zt[k] = z[k] + alpha * step[n + k]
                    if _slacks(Ahat, bhat, c, ls, smask, Acoef, lin, xt, zt, AX, r, s1):
                        change = -tau * alpha * dzd
                        for i in range(m_con):
                            change = change - log(s1[i] / s0[i])
                        if change <= -0.25 * alpha * dec:
                            ok = True
                            break
                    alpha = alpha * 0.5
                if not ok:
                    break
                x[:, :] = xt
                z[:] = zt
                if alpha < 1e-3 and lam < 1e-2:
                    break
            if info != 0:
                break
            s = 0.0
            for k in range(nz):
                s = s + d[k] * z[k]
            if m_con / tau <= tol * (1.0 + fabs(s)) or used >= max_iter:
                break
            tau = tau * mult
    if info != 0:
        # singular Newton system: finish with the numpy implementation
        xr, zr, tau, extra = _inner_py.barrier_core(
            np.asarray(Ahat), np.asarray(bhat), np.asarray(c), np.asarray(ls), np.asarray(smask),
            np.asarray(Acoef), np.asarray(lin), np.asarray(d), np.asarray(x), np.asarray(z),
            tau, tol, max(1, max_iter - used), mult)
        return xr, zr, tau, used + extra
    return np.asarray(x), np.asarray(z), tau, used
