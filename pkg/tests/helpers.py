"""Shared independent oracles and small builders for the test suite.

The oracles here deliberately avoid the library's own code paths: dense
matrix inversion for the kriging posterior, adaptive quadrature for the
bivariate normal CDF, truncated Taylor series for the matrix exponential.
"""

import numpy as np
from scipy.integrate import dblquad, quad
from scipy.special import ndtr
from scipy.stats import norm

from mfsur.design import DOMAIN_BOUNDS
from mfsur.gp import KernelSpec, NoiseFunction, ObservationSet


def bvn_quad_oracle(u, v, rho):
    """Adaptive quadrature of the bivariate normal CDF.

    The inner variable is integrated out exactly through the conditional
    normal CDF, leaving one adaptive 1-D integral of a smooth density
    product; spot-agreement with raw 2-D quadrature is itself tested.
    """
    if rho == 1.0:
        return float(ndtr(min(u, v)))
    if rho == -1.0:
        return float(max(0.0, ndtr(u) + ndtr(v) - 1.0))
    den = np.sqrt(1.0 - rho * rho)

    def integrand(s):
        return norm.pdf(s) * ndtr((v - rho * s) / den)

    lo = max(-40.0, min(u, 0.0) - 40.0)
    val, err = quad(integrand, lo, u, epsabs=1e-13, epsrel=1e-12, limit=300)
    return float(val)


def bvn_quad2d_oracle(u, v, rho):
    """Raw adaptive 2-D quadrature of the bivariate normal density."""
    den = 1.0 - rho * rho
    c = 1.0 / (2.0 * np.pi * np.sqrt(den))

    def density(y, x):
        return c * np.exp(-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * den))

    val, err = dblquad(density, -12.0, u, -12.0, v, epsabs=1e-11)
    return float(val)


def dense_kriging_oracle(kernel: KernelSpec, data: ObservationSet, points):
    """Ordinary-kriging mean and covariance by explicit dense inversion."""
    pts = np.atleast_2d(points)
    k_xx = kernel.cross(data.points, data.points) + np.diag(data.noise_vars)
    a_inv = np.linalg.inv(k_xx)
    ones = np.ones(len(data))
    s = ones @ a_inv @ ones
    mhat = (ones @ a_inv @ data.values) / s
    k_xp = kernel.cross(data.points, pts)
    mean = mhat + k_xp.T @ a_inv @ (data.values - mhat * ones)
    one_terms = 1.0 - ones @ a_inv @ k_xp
    cov = (kernel.cross(pts, pts) - k_xp.T @ a_inv @ k_xp
           + np.outer(one_terms, one_terms) / s)
    return mean, cov


def expm_series_oracle(a: np.ndarray, terms: int = 12) -> np.ndarray:
    """Truncated Taylor series of the matrix exponential."""
    out = np.eye(len(a))
    term = np.eye(len(a))
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out


def toy_kernel(variance=1.5, ls=(0.25, 0.3), lt=1.2, bounds=DOMAIN_BOUNDS) -> KernelSpec:
    return KernelSpec(variance, ls, lt, bounds)


def toy_noise(value=0.05, levels=(1.0, 0.5, 0.2, 0.05, 0.01)) -> NoiseFunction:
    return NoiseFunction.constant(value, levels)


def random_observations(rng, n, levels=(1.0, 0.5, 0.2, 0.05, 0.01),
                        noise_value=0.05, kernel=None, bounds=DOMAIN_BOUNDS):
    """Synthetic observation set with outputs from a smooth deterministic map."""
    xs = np.column_stack([
        rng.uniform(bounds[0][0], bounds[0][1], n),
        rng.uniform(bounds[1][0], bounds[1][1], n),
    ])
    ts = rng.choice(levels, size=n)
    pts = np.column_stack([xs, ts])
    vals = (np.sin(xs[:, 0] / 6.0) + np.cos(3.0 * xs[:, 1]) + 0.3 * np.log(ts)
            + rng.normal(0.0, np.sqrt(noise_value), n))
    return ObservationSet(pts, vals, np.full(n, noise_value))
