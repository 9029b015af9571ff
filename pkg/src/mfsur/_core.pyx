# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: bivariate normal CDF and oscillator trajectories.

Semantics match ``mfsur._kernels_py`` exactly; the backend-equivalence tests
assert it. Keep the two files in sync.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport asin, erfc, exp, fabs, isinf, sin, sqrt
from libc.stdlib cimport free, malloc

from numpy.random cimport bitgen_t

from numpy.random.c_distributions cimport random_standard_normal


cdef double TWO_PI = 6.283185307179586476925286766559
cdef double SQRT1_2 = 0.70710678118654752440084436210485

# Gauss-Legendre half-tables, order 6 / 12 / 20
cdef double[3] GL_W3 = [0.1713244923791704, 0.3607615730481386, 0.4679139345726910]
cdef double[3] GL_X3 = [0.9324695142031521, 0.6612093864662645, 0.2386191860831969]
cdef double[6] GL_W6 = [0.04717533638651183, 0.1069393259953184, 0.1600783285433462,
                        0.2031674267230659, 0.2334925365383548, 0.2491470458134028]
cdef double[6] GL_X6 = [0.9815606342467192, 0.9041172563704749, 0.7699026741943047,
                        0.5873179542866175, 0.3678314989981802, 0.1252334085114689]
cdef double[10] GL_W10 = [0.01761400713915212, 0.04060142980038694, 0.06267204833410907,
                          0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                          0.1316886384491766, 0.1420961093183820, 0.1491729864726037,
                          0.1527533871307258]
cdef double[10] GL_X10 = [0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                          0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                          0.5108670019508271, 0.3737060887154195, 0.2277858511416451,
                          0.07652652113349734]


cdef inline double _phid(double z) noexcept nogil:
    return 0.5 * erfc(-z * SQRT1_2)


cdef double _bvnu(double h, double k, double r) noexcept nogil:
    """P(X > h, Y > k) for standard bivariate normal with correlation r."""
    cdef:
        double *w
        double *x
        int order, i, j
        double sgn, hk, hs, asr, sn, bvn, ar
        double ass, a, b, bs, c, d, xs, rs, asr1, sp, ep

    if h > k:
        # canonical argument order makes the h<->k symmetry bit-exact
        hs = h
        h = k
        k = hs

    if isinf(h) or isinf(k):
        if (isinf(h) and h > 0.0) or (isinf(k) and k > 0.0):
            return 0.0
        if isinf(h) and isinf(k):
            return 1.0
        if isinf(h):
            return _phid(-k)
        return _phid(-h)
    if r == 1.0:
        return _phid(-(h if h > k else k))
    if r == -1.0:
        bvn = _phid(-h) - _phid(k)
        return bvn if bvn > 0.0 else 0.0

    ar = fabs(r)
    if ar < 0.3:
        order = 3
        w = GL_W3
        x = GL_X3
    elif ar < 0.75:
        order = 6
        w = GL_W6
        x = GL_X6
    else:
        order = 10
        w = GL_W10
        x = GL_X10

    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = asin(r)
        for i in range(order):
            for j in range(2):
                sgn = -1.0 if j == 0 else 1.0
                sn = sin(0.5 * asr * (1.0 + sgn * x[i]))
                bvn = bvn + w[i] * exp((sn * hk - hs) / (1.0 - sn * sn))
        return bvn * asr / (2.0 * TWO_PI) + _phid(-h) * _phid(-k)

    if r < 0.0:
        k = -k
        hk = -hk
    ass = (1.0 - r) * (1.0 + r)
    a = sqrt(ass)
    bs = (h - k) * (h - k)
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    asr = -0.5 * (bs / ass + hk)
    if asr > -100.0:
        bvn = a * exp(asr) * (1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                              + c * d * ass * ass / 5.0)
    if -hk < 100.0:
        b = sqrt(bs)
        sp = sqrt(TWO_PI) * _phid(-b / a)
        bvn = bvn - exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
    a = 0.5 * a
    for i in range(10):
        for j in range(2):
            sgn = -1.0 if j == 0 else 1.0
            xs = a * (1.0 + sgn * GL_X10[i])
            xs = xs * xs
            rs = sqrt(1.0 - xs)
            asr1 = -0.5 * (bs / xs + hk)
            if asr1 > -100.0:
                sp = 1.0 + c * xs * (1.0 + d * xs)
                ep = exp(-0.5 * hk * (1.0 - rs) / (1.0 + rs)) / rs
                bvn = bvn + a * GL_W10[i] * exp(asr1) * (ep - sp)
    bvn = -bvn / TWO_PI
    if r > 0.0:
        return bvn + _phid(-(h if h > k else k))
    bvn = -bvn
    sp = _phid(-h) - _phid(-k)
    if sp < 0.0:
        sp = 0.0
    return bvn + sp


def bvn_cdf(h, k, r):
    """P(X <= h, Y <= k), elementwise over equal-length 1-D arrays."""
    cdef double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[::1] kv = np.ascontiguousarray(k, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t n = hv.shape[0]
    if kv.shape[0] != n or rv.shape[0] != n:
        raise ValueError("h, k, r must have equal length")
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double p
    with nogil:
        for i in range(n):
            p = _bvnu(-hv[i], -kv[i], rv[i])
            if p < 0.0:
                p = 0.0
            elif p > 1.0:
                p = 1.0
            out[i] = p
    return out_arr


cdef double _diag_gain(double u2, double pm, double rho) noexcept nogil:
    """Phi2(u, u; rho) - Phi(u)^2 for rho in [0, 1], with u2 = u^2, pm = Phi(u).

    In the moderate-correlation branch the difference is the Gauss-Legendre
    sum itself (the Phi(u)^2 term cancels exactly), so small gains carry no
    cancellation error and are nonnegative by construction.
    """
    cdef:
        double *w
        double *x
        int order, i, j
        double sgn, asr, sn, acc, ass, a, a2, c, d, xs, rs, sp, ep, bvn

    if rho <= 0.0:
        return 0.0
    if rho >= 1.0:
        return pm * (1.0 - pm)
    if rho < 0.925:
        if rho < 0.3:
            order = 3
            w = GL_W3
            x = GL_X3
        elif rho < 0.75:
            order = 6
            w = GL_W6
            x = GL_X6
        else:
            order = 10
            w = GL_W10
            x = GL_X10
        asr = asin(rho)
        acc = 0.0
        for i in range(order):
            for j in range(2):
                sgn = -1.0 if j == 0 else 1.0
                sn = sin(0.5 * asr * (1.0 + sgn * x[i]))
                acc = acc + w[i] * exp(-u2 / (1.0 + sn))
        return acc * asr / (2.0 * TWO_PI)

    # high-correlation expansion of _bvnu(-u, -u, rho): bs = 0, hk = u^2
    ass = (1.0 - rho) * (1.0 + rho)
    a = sqrt(ass)
    c = (4.0 - u2) / 8.0
    d = (12.0 - u2) / 16.0
    asr = -0.5 * u2
    bvn = 0.0
    if asr > -100.0:
        bvn = a * exp(asr) * (1.0 + c * ass / 3.0 + c * d * ass * ass / 5.0)
    a2 = 0.5 * a
    if asr > -100.0:
        for i in range(10):
            for j in range(2):
                sgn = -1.0 if j == 0 else 1.0
                xs = a2 * (1.0 + sgn * GL_X10[i])
                xs = xs * xs
                rs = sqrt(1.0 - xs)
                sp = 1.0 + c * xs * (1.0 + d * xs)
                ep = exp(-0.5 * u2 * (1.0 - rs) / (1.0 + rs)) / rs
                bvn = bvn + a2 * GL_W10[i] * exp(asr) * (ep - sp)
    return -bvn / TWO_PI + pm * (1.0 - pm)


def exceedance_gain(u2, pm, w, rho):
    """Per-candidate weighted gain sum_j w_j (Phi2(u_j,u_j;rho_cj) - Phi(u_j)^2).

    ``rho`` has shape (candidates, nodes), C-contiguous; u2 = u^2, pm = Phi(u)
    and w are per-node arrays.
    """
    cdef double[::1] u2v = np.ascontiguousarray(u2, dtype=np.float64)
    cdef double[::1] pmv = np.ascontiguousarray(pm, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] rv = np.ascontiguousarray(rho, dtype=np.float64)
    cdef Py_ssize_t nc = rv.shape[0], nn = rv.shape[1], ci, j
    if u2v.shape[0] != nn or pmv.shape[0] != nn or wv.shape[0] != nn:
        raise ValueError("u2, pm, w must have one entry per node")
    out_arr = np.empty(nc, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc
    with nogil:
        for ci in range(nc):
            acc = 0.0
            for j in range(nn):
                acc = acc + wv[j] * _diag_gain(u2v[j], pmv[j], rv[ci, j])
            out[ci] = acc
    return out_arr


def traj_max_abs(list bitgens, double e00, double e01, double e10, double e11,
                 double noise_sd, Py_ssize_t n_steps):
    """Max |position| over the step recursion, one trajectory per generator.

    Consumes exactly ``n_steps`` standard-normal draws per generator (none
    when ``noise_sd == 0``).
    """
    cdef Py_ssize_t nb = len(bitgens)
    out_arr = np.zeros(nb, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef bitgen_t **ptrs = <bitgen_t **> malloc(nb * sizeof(bitgen_t *))
    if ptrs == NULL:
        raise MemoryError
    cdef Py_ssize_t i, s
    cdef double xx, vv, vn, xn, mx, dw
    try:
        for i in range(nb):
            ptrs[i] = <bitgen_t *> PyCapsule_GetPointer(bitgens[i].capsule, "BitGenerator")
        with nogil:
            for i in range(nb):
                xx = 0.0
                vv = 0.0
                mx = 0.0
                for s in range(n_steps):
                    if noise_sd != 0.0:
                        dw = random_standard_normal(ptrs[i]) * noise_sd
                        vn = vv + dw
                    else:
                        vn = vv + 0.0
                    xn = e00 * xx + e01 * vn
                    vv = e10 * xx + e11 * vn
                    xx = xn
                    if fabs(xx) > mx:
                        mx = fabs(xx)
                out[i] = mx
    finally:
        free(ptrs)
    return out_arr
