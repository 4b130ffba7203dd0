# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see :mod:`mdshape._kernels_py` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, floor, fabs

cnp.import_array()


def air_terms(y, idx, points, logp, bits, double inv2s2):
    cdef const double[:, ::1] Y = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long long[::1] I = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[:, ::1] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[::1] LP = np.ascontiguousarray(logp, dtype=np.float64)
    cdef const signed char[:, ::1] B = np.ascontiguousarray(bits, dtype=np.int8)
    cdef Py_ssize_t S = Y.shape[0], M = X.shape[0], N = X.shape[1], m = B.shape[1]
    out_x = np.empty(S)
    out_b = np.zeros(S)
    cdef double[::1] HX = out_x
    cdef double[::1] HB = out_b
    cdef double[::1] l = np.empty(M)
    cdef double[::1] s0 = np.empty(max(m, 1))
    cdef double[::1] s1 = np.empty(max(m, 1))
    cdef Py_ssize_t s, j, d, b, i
    cdef double acc, diff, mx, tot, oth, e, den, li, num, hb
    with nogil:
        for s in range(S):
            i = I[s]
            mx = -1e300
            for j in range(M):
                acc = 0.0
                for d in range(N):
                    diff = Y[s, d] - X[j, d]
                    acc = acc + diff * diff
                l[j] = LP[j] - inv2s2 * acc
                if l[j] > mx:
                    mx = l[j]
            for b in range(m):
                s0[b] = 0.0
                s1[b] = 0.0
            tot = 0.0
            oth = 0.0
            for j in range(M):
                e = exp(l[j] - mx)
                tot = tot + e
                if j != i:
                    oth = oth + e
                for b in range(m):
                    if B[j, b]:
                        s1[b] = s1[b] + e
                    else:
                        s0[b] = s0[b] + e
            den = mx + log(tot)
            li = l[i]
            if li >= mx:
                # keeps the tail probability when it is below the rounding of 1
                HX[s] = log1p(oth)
            else:
                HX[s] = den - li
            hb = 0.0
            for b in range(m):
                if B[i, b]:
                    e = s1[b]
                else:
                    e = s0[b]
                if e > 0.0:
                    num = mx + log(e)
                else:
                    num = li
                if num < li:
                    num = li
                hb = hb + den - num
            HB[s] = hb
    return out_x, out_b


cdef inline double complex _pl(const double complex[::1] f, const double complex[::1] F1,
                               const double complex[::1] F2, double x0, double h, double x,
                               int order) noexcept nogil:
    cdef Py_ssize_t n = f.shape[0]
    cdef double t = (x - x0) / h
    cdef Py_ssize_t i = <Py_ssize_t>floor(t)
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    cdef double s = (t - i) * h
    cdef double complex f0 = f[i]
    cdef double complex df = f[i + 1] - f0
    if order == 0:
        return f0 + df * (s / h)
    if order == 1:
        return F1[i] + s * (f0 + df * s / (2 * h))
    return F2[i] + s * (F1[i] + s * (f0 / 2 + df * s / (6 * h)))


def two_scale_eval(w, int order, double core_x0, double core_h, core_f, core_F1, core_F2,
                   double per_h, per_f, per_F1, per_F2, C1, C2, coef,
                   double P, Py_ssize_t K, double wcore):
    cdef const double[::1] W = np.ascontiguousarray(np.ravel(w), dtype=np.float64)
    cdef const double complex[::1] cf = np.ascontiguousarray(core_f, dtype=np.complex128)
    cdef const double complex[::1] cF1 = np.ascontiguousarray(core_F1, dtype=np.complex128)
    cdef const double complex[::1] cF2 = np.ascontiguousarray(core_F2, dtype=np.complex128)
    cdef const double complex[:, ::1] pf = np.ascontiguousarray(per_f, dtype=np.complex128)
    cdef const double complex[:, ::1] pF1 = np.ascontiguousarray(per_F1, dtype=np.complex128)
    cdef const double complex[:, ::1] pF2 = np.ascontiguousarray(per_F2, dtype=np.complex128)
    cdef const double complex[::1] c1 = np.ascontiguousarray(C1, dtype=np.complex128)
    cdef const double complex[::1] c2 = np.ascontiguousarray(C2, dtype=np.complex128)
    cdef const double complex[:, ::1] cc = np.ascontiguousarray(coef, dtype=np.complex128)
    cdef Py_ssize_t n = W.shape[0], q, j, k, idx
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef double x, y
    cdef double complex acc
    with nogil:
        for q in range(n):
            x = W[q]
            if fabs(x) <= wcore:
                o[q] = _pl(cf, cF1, cF2, core_x0, core_h, x, order)
                continue
            k = <Py_ssize_t>floor(x / P)
            if k < -K:
                k = -K
            elif k > K - 1:
                k = K - 1
            idx = k + K
            y = x - k * P
            if order == 1:
                acc = c1[idx]
            else:
                acc = c2[idx] + c1[idx] * y
            for j in range(3):
                acc = acc + cc[j, idx] * _pl(pf[j], pF1[j], pF2[j], 0.0, per_h, y, order)
            o[q] = acc
    return out.reshape(np.shape(w))
