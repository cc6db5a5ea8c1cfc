# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot batch kernels.

Semantics mirror pykernels exactly: the integer RNG path is bit-identical;
float paths may differ from NumPy's vectorized math in the last ulp.
"""

import math

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, isfinite, log, pow, sin, sqrt

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t cmc_mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    """
    cnp.uint64_t cmc_mix64(cnp.uint64_t z) nogil

cdef cnp.uint64_t GOLDEN_C = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586476925286766559

GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def normals_consumed(int m):
    return 2 * ((m + 1) // 2)


def stream_keys(seed, start, count):
    cdef cnp.uint64_t s = <cnp.uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef cnp.uint64_t st = <cnp.uint64_t> (int(start) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t n = count
    out_arr = np.empty(n, dtype=np.uint64)
    cdef cnp.uint64_t[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = cmc_mix64(cmc_mix64(s + GOLDEN_C * (st + i + 1)))
    return out_arr


def uniform_block(keys, ctrs, int m):
    cdef cnp.uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef cnp.uint64_t[::1] c = np.ascontiguousarray(ctrs, dtype=np.uint64)
    cdef Py_ssize_t n = k.shape[0]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef cnp.uint64_t raw
    with nogil:
        for i in range(n):
            for j in range(m):
                raw = cmc_mix64(k[i] + GOLDEN_C * (c[i] + j + 1))
                out[i, j] = <double> (raw >> 11) * INV53
    return out_arr


def normal_block(keys, ctrs, int m):
    cdef cnp.uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef cnp.uint64_t[::1] c = np.ascontiguousarray(ctrs, dtype=np.uint64)
    cdef Py_ssize_t n = k.shape[0]
    cdef int pairs = (m + 1) // 2
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef cnp.uint64_t r1, r2
    cdef double u1, u2, r, th
    with nogil:
        for i in range(n):
            for j in range(pairs):
                r1 = cmc_mix64(k[i] + GOLDEN_C * (c[i] + 2 * j + 1))
                r2 = cmc_mix64(k[i] + GOLDEN_C * (c[i] + 2 * j + 2))
                u1 = (<double> (r1 >> 11) + 0.5) * INV53
                u2 = <double> (r2 >> 11) * INV53
                r = sqrt(-2.0 * log(u1))
                th = TWO_PI * u2
                out[i, 2 * j] = r * cos(th)
                if 2 * j + 1 < m:
                    out[i, 2 * j + 1] = r * sin(th)
    return out_arr


def orthonormalize_batch(mats):
    Q_arr = np.array(mats, dtype=np.float64, copy=True, order="C")
    cdef double[:, :, ::1] Q = Q_arr
    cdef Py_ssize_t n = Q.shape[0], d = Q.shape[1], kk = Q.shape[2]
    ok_arr = np.ones(n, dtype=bool)
    cdef cnp.uint8_t[::1] ok = ok_arr.view(np.uint8)
    cdef Py_ssize_t s, i, j, t, rep
    cdef double proj, nrm
    cdef double v[64]
    with nogil:
        for s in range(n):
            for i in range(kk):
                for t in range(d):
                    v[t] = Q[s, t, i]
                for rep in range(2):
                    for j in range(i):
                        proj = 0.0
                        for t in range(d):
                            proj += v[t] * Q[s, t, j]
                        for t in range(d):
                            v[t] -= proj * Q[s, t, j]
                nrm = 0.0
                for t in range(d):
                    nrm += v[t] * v[t]
                nrm = sqrt(nrm)
                if nrm < 1e-8:
                    ok[s] = 0
                    nrm = 1.0
                for t in range(d):
                    Q[s, t, i] = v[t] / nrm
    return Q_arr, ok_arr


cdef inline int _chol_inplace(double* G, int kk) nogil:
    # lower Cholesky of a kk x kk row-major matrix; returns 0 on failure
    # (pivots at round-off scale relative to the diagonal count as failure)
    cdef int i, j, t
    cdef double s
    cdef double diag0[12]
    for i in range(kk):
        diag0[i] = G[i * kk + i]
    for i in range(kk):
        s = G[i * kk + i]
        for t in range(i):
            s -= G[i * kk + t] * G[i * kk + t]
        if s <= 1e-12 * diag0[i]:
            return 0
        G[i * kk + i] = sqrt(s)
        for j in range(i + 1, kk):
            s = G[j * kk + i]
            for t in range(i):
                s -= G[j * kk + t] * G[i * kk + t]
            G[j * kk + i] = s / G[i * kk + i]
    return 1


def gram_volume_batch(pts):
    cdef double[:, :, ::1] P = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], kk = P.shape[1], d = P.shape[2]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double G[144]
    cdef Py_ssize_t s, i, j, t
    cdef double acc, fact
    fact = 1.0
    for i in range(2, kk + 1):
        fact *= i
    with nogil:
        for s in range(n):
            for i in range(kk):
                for j in range(i + 1):
                    acc = 0.0
                    for t in range(d):
                        acc += P[s, i, t] * P[s, j, t]
                    G[i * kk + j] = acc
                    G[j * kk + i] = acc
            if _chol_inplace(G, <int> kk):
                acc = 1.0
                for i in range(kk):
                    acc *= G[i * kk + i]
                out[s] = acc / fact
            else:
                out[s] = 0.0
    return out_arr


def quadric_section_batch(U, e, M, double kappa_k):
    cdef double[:, :, ::1] Um = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, ::1] em = np.ascontiguousarray(e, dtype=np.float64)
    cdef double[:, ::1] Mm = np.ascontiguousarray(M, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], d = Um.shape[1], kk = Um.shape[2]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double MU[144]
    cdef double A[144]
    cdef double Me[12]
    cdef double g[12]
    cdef double y[12]
    cdef double x[12]
    cdef Py_ssize_t s, i, j, t
    cdef double acc, q0, minval, detroot, sval
    with nogil:
        for s in range(n):
            for i in range(d):
                for j in range(kk):
                    acc = 0.0
                    for t in range(d):
                        acc += Mm[i, t] * Um[s, t, j]
                    MU[i * kk + j] = acc
            for i in range(kk):
                for j in range(i + 1):
                    acc = 0.0
                    for t in range(d):
                        acc += Um[s, t, i] * MU[t * kk + j]
                    A[i * kk + j] = acc
                    A[j * kk + i] = acc
            for i in range(d):
                acc = 0.0
                for t in range(d):
                    acc += Mm[i, t] * em[s, t]
                Me[i] = acc
            q0 = 0.0
            for t in range(d):
                q0 += em[s, t] * Me[t]
            for i in range(kk):
                acc = 0.0
                for t in range(d):
                    acc += Um[s, t, i] * Me[t]
                g[i] = acc
            if not _chol_inplace(A, <int> kk):
                out[s] = 0.0
                continue
            for i in range(kk):
                acc = g[i]
                for t in range(i):
                    acc -= A[i * kk + t] * y[t]
                y[i] = acc / A[i * kk + i]
            for i in range(kk - 1, -1, -1):
                acc = y[i]
                for t in range(i + 1, kk):
                    acc -= A[t * kk + i] * x[t]
                x[i] = acc / A[i * kk + i]
            minval = q0
            for i in range(kk):
                minval -= g[i] * x[i]
            sval = 1.0 - minval
            if sval < 0.0:
                sval = 0.0
            detroot = 1.0
            for i in range(kk):
                detroot *= A[i * kk + i]
            out[s] = kappa_k * pow(sval, 0.5 * kk) / detroot
    return out_arr


def interval_section_batch(a, c):
    cdef double[:, ::1] am = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] cm = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = am.shape[0], m = am.shape[1]
    len_arr = np.zeros(n, dtype=np.float64)
    ne_arr = np.zeros(n, dtype=bool)
    cdef double[::1] length = len_arr
    cdef cnp.uint8_t[::1] ne = ne_arr.view(np.uint8)
    cdef Py_ssize_t s, i
    cdef double lb, ub, av, cv
    cdef bint bad, has_lb, has_ub
    with nogil:
        for s in range(n):
            lb = -1e308
            ub = 1e308
            bad = 0
            has_lb = 0
            has_ub = 0
            for i in range(m):
                av = am[s, i]
                cv = cm[s, i]
                if av > 1e-12:
                    if cv / av < ub:
                        ub = cv / av
                    has_ub = 1
                elif av < -1e-12:
                    if cv / av > lb:
                        lb = cv / av
                    has_lb = 1
                elif cv < -1e-9:
                    bad = 1
            if (not bad) and has_ub and has_lb and ub >= lb - 1e-9:
                ne[s] = 1
                length[s] = ub - lb if ub > lb else 0.0
    return len_arr, ne_arr


def polygon_section_batch(a, c, t0, rad):
    cdef double[:, :, ::1] am = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] cm = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, ::1] t0m = np.ascontiguousarray(t0, dtype=np.float64)
    cdef double[::1] rm = np.ascontiguousarray(rad, dtype=np.float64)
    cdef Py_ssize_t n = am.shape[0], m = am.shape[1]
    area_arr = np.zeros(n, dtype=np.float64)
    ne_arr = np.zeros(n, dtype=bool)
    cdef double[::1] area = area_arr
    cdef cnp.uint8_t[::1] ne = ne_arr.view(np.uint8)
    cdef double px[256]
    cdef double py[256]
    cdef double qx[256]
    cdef double qy[256]
    cdef Py_ssize_t s, i, j, v, w
    cdef double r, cx, cy, a0, a1, cc, s0, s1, t, acc
    cdef bint empty
    with nogil:
        for s in range(n):
            r = rm[s]
            if not r > 0.0:
                continue
            cx = t0m[s, 0]
            cy = t0m[s, 1]
            px[0] = cx - r; py[0] = cy - r
            px[1] = cx + r; py[1] = cy - r
            px[2] = cx + r; py[2] = cy + r
            px[3] = cx - r; py[3] = cy + r
            v = 4
            empty = 0
            for i in range(m):
                a0 = am[s, i, 0]
                a1 = am[s, i, 1]
                cc = cm[s, i]
                w = 0
                for j in range(v):
                    s0 = a0 * px[j] + a1 * py[j] - cc
                    s1 = a0 * px[(j + 1) % v] + a1 * py[(j + 1) % v] - cc
                    if s0 <= 0.0:
                        qx[w] = px[j]
                        qy[w] = py[j]
                        w += 1
                    if (s0 < 0.0 < s1) or (s1 < 0.0 < s0):
                        t = s0 / (s0 - s1)
                        qx[w] = px[j] + t * (px[(j + 1) % v] - px[j])
                        qy[w] = py[j] + t * (py[(j + 1) % v] - py[j])
                        w += 1
                for j in range(w):
                    px[j] = qx[j]
                    py[j] = qy[j]
                v = w
                if v == 0:
                    empty = 1
                    break
            if empty:
                continue
            ne[s] = 1
            acc = 0.0
            for j in range(v):
                acc += px[j] * py[(j + 1) % v] - px[(j + 1) % v] * py[j]
            area[s] = 0.5 * fabs(acc)
    return area_arr, ne_arr
