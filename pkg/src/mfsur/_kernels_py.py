"""Pure-numpy implementations of the hot kernels.

This is the fallback twin of the compiled extension ``mfsur._core``; both
expose the same two entry points with identical semantics:

``bvn_cdf(h, k, r)``
    Standard bivariate normal lower CDF, elementwise over equal-length 1-D
    arrays, by Gauss-Legendre integration of the single-integral form with a
    separate expansion for |r| > 0.925.

``traj_max_abs(bitgens, e00, e01, e10, e11, noise_sd, n_steps)``
    Running maximum of |position| of the discretized oscillator, one value
    per bit generator, each consuming exactly ``n_steps`` standard-normal
    draws (none when ``noise_sd == 0``).

The trajectory recursion is written so both backends produce bit-identical
results from the same streams: identical draw order and identical elementwise
operation order, no fused multiply-adds.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator
from scipy.special import ndtr

# Gauss-Legendre half-tables (weights, abscissae), order 6 / 12 / 20
_GL_W = {
    3: np.array([0.1713244923791704, 0.3607615730481386, 0.4679139345726910]),
    6: np.array([0.04717533638651183, 0.1069393259953184, 0.1600783285433462,
                 0.2031674267230659, 0.2334925365383548, 0.2491470458134028]),
    10: np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410907,
                  0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                  0.1316886384491766, 0.1420961093183820, 0.1491729864726037,
                  0.1527533871307258]),
}
_GL_X = {
    3: np.array([0.9324695142031521, 0.6612093864662645, 0.2386191860831969]),
    6: np.array([0.9815606342467192, 0.9041172563704749, 0.7699026741943047,
                 0.5873179542866175, 0.3678314989981802, 0.1252334085114689]),
    10: np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                  0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                  0.5108670019508271, 0.3737060887154195, 0.2277858511416451,
                  0.07652652113349734]),
}
_TWO_PI = 2.0 * np.pi


def _bvnu_moderate(h, k, r, order):
    # upper orthant probability for |r| <= 0.925, Drezner-Wesolowsky form
    w, x = _GL_W[order], _GL_X[order]
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = np.arcsin(r)
    acc = np.zeros_like(h)
    for i in range(order):
        for sgn in (-1.0, 1.0):
            sn = np.sin(0.5 * asr * (1.0 + sgn * x[i]))
            acc = acc + w[i] * np.exp((sn * hk - hs) / (1.0 - sn * sn))
    return acc * asr / (2.0 * _TWO_PI) + ndtr(-h) * ndtr(-k)


def _bvnu_high(h, k, r):
    # expansion around |r| = 1 for 0.925 < |r| < 1 (Genz's modification)
    with np.errstate(over="ignore", invalid="ignore"):
        return _bvnu_high_unguarded(h, k, r)


def _bvnu_high_unguarded(h, k, r):
    w, x = _GL_W[10], _GL_X[10]
    neg = r < 0
    k = np.where(neg, -k, k)
    hk = h * k
    bvn = np.zeros_like(h)

    ass = (1.0 - r) * (1.0 + r)
    a = np.sqrt(ass)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    asr = -0.5 * (bs / ass + hk)
    m = asr > -100.0
    bvn[m] = (a * np.exp(asr) * (1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                                 + c * d * ass * ass / 5.0))[m]
    m = -hk < 100.0
    if np.any(m):
        b = np.sqrt(bs)
        sp = np.sqrt(_TWO_PI) * ndtr(-b / a)
        bvn[m] = bvn[m] - (np.exp(-0.5 * hk) * sp * b
                           * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))[m]
    a = 0.5 * a
    for i in range(10):
        for sgn in (-1.0, 1.0):
            xs = (a * (1.0 + sgn * x[i])) ** 2
            rs = np.sqrt(1.0 - xs)
            asr1 = -0.5 * (bs / xs + hk)
            m = asr1 > -100.0
            if np.any(m):
                sp = 1.0 + c * xs * (1.0 + d * xs)
                ep = np.exp(-0.5 * hk * (1.0 - rs) / (1.0 + rs)) / rs
                bvn[m] = bvn[m] + (a * w[i] * np.exp(asr1) * (ep - sp))[m]
    bvn = -bvn / _TWO_PI
    pos = ndtr(-np.maximum(h, k))
    negpart = np.maximum(0.0, ndtr(-h) - ndtr(-k))
    return np.where(neg, -bvn + negpart, bvn + pos)


def _bvnu(h, k, r):
    """P(X > h, Y > k) for standard bivariate normal with correlation r."""
    # canonical argument order makes the h<->k symmetry bit-exact
    h, k = np.minimum(h, k), np.maximum(h, k)
    out = np.empty_like(h)
    done = np.zeros(h.shape, dtype=bool)

    m = np.isposinf(h) | np.isposinf(k)
    out[m] = 0.0
    done |= m
    m = ~done & np.isneginf(h)
    out[m] = np.where(np.isneginf(k[m]), 1.0, ndtr(-k[m]))
    done |= m
    m = ~done & np.isneginf(k)
    out[m] = ndtr(-h[m])
    done |= m
    m = ~done & (r == 1.0)
    out[m] = ndtr(-np.maximum(h[m], k[m]))
    done |= m
    m = ~done & (r == -1.0)
    out[m] = np.maximum(0.0, ndtr(-h[m]) - ndtr(k[m]))
    done |= m

    ar = np.abs(r)
    for order, lo, hi in ((3, -1.0, 0.3), (6, 0.3, 0.75), (10, 0.75, 0.925)):
        m = ~done & (ar >= lo) & (ar < hi)
        if np.any(m):
            out[m] = _bvnu_moderate(h[m], k[m], r[m], order)
            done |= m
    m = ~done
    if np.any(m):
        out[m] = _bvnu_high(h[m], k[m], r[m])
    return out


def bvn_cdf(h, k, r):
    """P(X <= h, Y <= k), elementwise over equal-length float64 arrays."""
    p = _bvnu(-h, -k, r)
    return np.clip(p, 0.0, 1.0)


def _diag_gain_values(u2, pm, rho):
    """Phi2(u,u;rho) - Phi(u)^2 elementwise for rho in [0, 1]."""
    out = np.zeros_like(rho)
    done = rho <= 0.0
    m = ~done & (rho >= 1.0)
    out[m] = (pm * (1.0 - pm))[m]
    done |= m
    for order, lo, hi in ((3, 0.0, 0.3), (6, 0.3, 0.75), (10, 0.75, 0.925)):
        m = ~done & (rho >= lo) & (rho < hi)
        if np.any(m):
            w, x = _GL_W[order], _GL_X[order]
            asr = np.arcsin(rho[m])
            uu = u2[m]
            acc = np.zeros_like(asr)
            for i in range(order):
                for sgn in (-1.0, 1.0):
                    sn = np.sin(0.5 * asr * (1.0 + sgn * x[i]))
                    acc = acc + w[i] * np.exp(-uu / (1.0 + sn))
            out[m] = acc * asr / (2.0 * _TWO_PI)
            done |= m
    m = ~done
    if np.any(m):
        # high-correlation expansion of _bvnu(-u, -u, rho): bs = 0, hk = u^2
        w, x = _GL_W[10], _GL_X[10]
        rr = rho[m]
        uu = u2[m]
        pp = pm[m]
        ass = (1.0 - rr) * (1.0 + rr)
        a = np.sqrt(ass)
        c = (4.0 - uu) / 8.0
        d = (12.0 - uu) / 16.0
        live = -0.5 * uu > -100.0
        easr = np.where(live, np.exp(-0.5 * uu), 0.0)
        bvn = a * easr * (1.0 + c * ass / 3.0 + c * d * ass * ass / 5.0)
        a2 = 0.5 * a
        for i in range(10):
            for sgn in (-1.0, 1.0):
                xs = (a2 * (1.0 + sgn * x[i])) ** 2
                rs = np.sqrt(1.0 - xs)
                sp = 1.0 + c * xs * (1.0 + d * xs)
                ep = np.exp(-0.5 * uu * (1.0 - rs) / (1.0 + rs)) / rs
                bvn = bvn + a2 * w[i] * easr * (ep - sp)
        out[m] = -bvn / _TWO_PI + pp * (1.0 - pp)
    return out


def exceedance_gain(u2, pm, w, rho):
    """Per-candidate weighted gain sum_j w_j (Phi2(u_j,u_j;rho_cj) - Phi(u_j)^2).

    ``rho`` has shape (candidates, nodes); u2 = u^2, pm = Phi(u) and w are
    per-node arrays.
    """
    rho = np.atleast_2d(np.asarray(rho, dtype=np.float64))
    u2 = np.broadcast_to(np.asarray(u2, dtype=np.float64), rho.shape)
    pm = np.broadcast_to(np.asarray(pm, dtype=np.float64), rho.shape)
    gains = _diag_gain_values(u2.ravel(), pm.ravel(), rho.ravel())
    return gains.reshape(rho.shape) @ np.asarray(w, dtype=np.float64)


def traj_max_abs(bitgens, e00, e01, e10, e11, noise_sd, n_steps):
    """Max |position| over the step recursion, one trajectory per generator."""
    nb = len(bitgens)
    x = np.zeros(nb)
    v = np.zeros(nb)
    mx = np.zeros(nb)
    if noise_sd == 0.0:
        dw = np.zeros((nb, n_steps))
    else:
        dw = np.empty((nb, n_steps))
        for i, bg in enumerate(bitgens):
            dw[i] = Generator(bg).standard_normal(n_steps) * noise_sd
    for s in range(n_steps):
        vn = v + dw[:, s]
        xn = e00 * x + e01 * vn
        v = e10 * x + e11 * vn
        x = xn
        np.maximum(mx, np.abs(x), out=mx)
    return mx
