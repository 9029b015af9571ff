"""Multi-fidelity Gaussian-process posterior (ordinary kriging).

The latent mean surface xi(x, t) over the joint input (physical inputs x,
fidelity level t) gets a GP prior with an improper-uniform constant mean,
handled exactly by the GLS formulas: with A = K + diag(noise_vars),

    mhat        = (1' A^-1 z) / (1' A^-1 1)
    m_n(p)      = mhat + k(p, X) A^-1 (z - mhat 1)
    k_n(p, q)   = k(p, q) - k(p, X) A^-1 k(X, q)
                  + (1 - 1' A^-1 k(X, p)) (1 - 1' A^-1 k(X, q)) / (1' A^-1 1)

Joint points are float64 arrays of shape (n, 3) with columns
(omega0, zeta, t); ``joint(x, t)`` packs them.

The covariance is a separable product of Matern-5/2 factors, anisotropic over
box-normalized x and one-dimensional over log t, so correlation across
fidelity levels decays smoothly in log time-step and low-fidelity runs inform
the highest level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import cholesky, solve_triangular

from mfsur.design import Bounds, DOMAIN_BOUNDS

_SQRT5 = np.sqrt(5.0)

JITTER_START = 1e-10
JITTER_MAX = 1e-6


class IllConditionedError(RuntimeError):
    """Gram system not factorizable even at the maximum jitter."""


class InvariantError(RuntimeError):
    """A posterior quantity violated its mathematical bounds."""


def joint(x, t) -> np.ndarray:
    """Pack physical inputs (m, 2) and level(s) into joint points (m, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(x),))
    return np.column_stack([x, t])


def _matern52(d: np.ndarray) -> np.ndarray:
    a = _SQRT5 * d
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


@dataclass(frozen=True)
class KernelSpec:
    """Separable Matern-5/2 product covariance over (x, t)."""

    variance: float
    input_lengthscales: tuple[float, float]
    fidelity_lengthscale: float
    input_bounds: Bounds = DOMAIN_BOUNDS

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if any(l <= 0 for l in self.input_lengthscales) or self.fidelity_lengthscale <= 0:
            raise ValueError("lengthscales must be positive")

    def _scaled(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo = np.array([self.input_bounds[0][0], self.input_bounds[1][0]])
        span = np.array([self.input_bounds[0][1] - self.input_bounds[0][0],
                         self.input_bounds[1][1] - self.input_bounds[1][0]])
        x = (pts[:, :2] - lo) / span / np.asarray(self.input_lengthscales)
        g = np.log(pts[:, 2]) / self.fidelity_lengthscale
        return x, g

    def cross(self, points_a, points_b) -> np.ndarray:
        """Covariance matrix k(A, B), shape (len(A), len(B))."""
        xa, ga = self._scaled(points_a)
        xb, gb = self._scaled(points_b)
        dx = np.sqrt(np.maximum(
            ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=2), 0.0))
        dg = np.abs(ga[:, None] - gb[None, :])
        return self.variance * _matern52(dx) * _matern52(dg)

    def diag(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.full(len(pts), self.variance)


class NoiseFunction:
    """Known observation-noise variance lambda(x, t).

    One variance table per fidelity level, bilinear in x on an
    endpoint-inclusive grid covering the input box; queries are clipped to
    the box. Levels are matched by relative tolerance 1e-9.
    """

    def __init__(self, levels, omega0_axis, zeta_axis, tables):
        self.levels = np.asarray(levels, dtype=np.float64)
        self.omega0_axis = np.asarray(omega0_axis, dtype=np.float64)
        self.zeta_axis = np.asarray(zeta_axis, dtype=np.float64)
        self.tables = np.asarray(tables, dtype=np.float64)
        if self.tables.shape != (len(self.levels), len(self.omega0_axis),
                                 len(self.zeta_axis)):
            raise ValueError("tables shape must be (levels, len(omega0), len(zeta))")
        if np.any(self.tables < 0):
            raise ValueError("noise variances must be nonnegative")
        self._interp = [
            RegularGridInterpolator((self.omega0_axis, self.zeta_axis), tab,
                                    method="linear", bounds_error=False, fill_value=None)
            for tab in self.tables
        ]

    @classmethod
    def constant(cls, value: float, levels) -> "NoiseFunction":
        levels = np.asarray(levels, dtype=np.float64)
        ax = np.array([0.0, 1.0])
        tables = np.full((len(levels), 2, 2), float(value))
        return cls(levels, ax, ax, tables)

    def level_index(self, t: float) -> int:
        match = np.isclose(self.levels, t, rtol=1e-9, atol=0.0)
        if not match.any():
            raise ValueError(f"level {t!r} not in the fidelity grid {self.levels}")
        return int(np.argmax(match))

    def at(self, x, t: float) -> np.ndarray:
        """lambda(x, t) for rows of x at one level t."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        xq = np.column_stack([
            np.clip(x[:, 0], self.omega0_axis[0], self.omega0_axis[-1]),
            np.clip(x[:, 1], self.zeta_axis[0], self.zeta_axis[-1]),
        ])
        return self._interp[self.level_index(t)](xq)

    def at_points(self, points) -> np.ndarray:
        """lambda per joint-point row (mixed levels allowed)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty(len(pts))
        for t in np.unique(pts[:, 2]):
            m = pts[:, 2] == t
            out[m] = self.at(pts[m, :2], float(t))
        return out


@dataclass(frozen=True)
class ObservationSet:
    """Design points (n, 3), outputs (n,), known noise variances (n,)."""

    points: np.ndarray
    values: np.ndarray
    noise_vars: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        nv = np.asarray(self.noise_vars, dtype=np.float64).ravel()
        if not (len(pts) == len(vals) == len(nv)):
            raise ValueError("points, values, noise_vars must have equal length")
        if len(vals) and not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        if np.any(nv < 0):
            raise ValueError("noise variances must be nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "noise_vars", nv)

    def __len__(self) -> int:
        return len(self.values)

    def append(self, point, value: float, noise_var: float) -> "ObservationSet":
        pt = np.asarray(point, dtype=np.float64).reshape(1, 3)
        return ObservationSet(
            np.vstack([self.points, pt]) if len(self) else pt,
            np.append(self.values, value),
            np.append(self.noise_vars, noise_var),
        )


def _cholesky_with_jitter(a: np.ndarray, scale: float):
    """Lower Cholesky factor, escalating diagonal jitter up to JITTER_MAX*scale."""
    jitters = [0.0] + [JITTER_START * 10 ** k * scale for k in range(5)]
    for j in jitters:
        try:
            m = a if j == 0.0 else a + j * np.eye(len(a))
            return cholesky(m, lower=True), j
        except np.linalg.LinAlgError:
            continue
    raise IllConditionedError(
        f"Cholesky failed for n={len(a)} even with jitter {jitters[-1]:.1e}")


@dataclass(frozen=True)
class Presolve:
    """Node-side factors reused across covariance evaluations.

    B = L^-1 k(X, P); g = 1 - 1' A^-1 k(X, P), one column/entry per point.
    """

    B: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class PosteriorGP:
    """Immutable fitted ordinary-kriging posterior."""

    kernel: KernelSpec
    data: ObservationSet
    noise: NoiseFunction | None
    chol: np.ndarray          # L with L L' = K + diag(noise_vars) + jitter I
    w: np.ndarray             # L^-1 1
    u_resid: np.ndarray       # L^-1 (z - mhat 1)
    mhat: float
    s: float                  # 1' A^-1 1
    jitter: float

    @property
    def n(self) -> int:
        return len(self.data)

    def presolve(self, points) -> Presolve:
        kxp = self.kernel.cross(self.data.points, points)
        b = solve_triangular(self.chol, kxp, lower=True, check_finite=False)
        g = 1.0 - self.w @ b
        return Presolve(B=b, g=g)

    def mean(self, points) -> np.ndarray:
        pre = self.presolve(points)
        return self.mean_presolved(pre)

    def mean_presolved(self, pre: Presolve) -> np.ndarray:
        return self.mhat + self.u_resid @ pre.B

    def cov_presolved(self, pre_a: Presolve, pre_b: Presolve,
                      prior_cross: np.ndarray) -> np.ndarray:
        return prior_cross - pre_a.B.T @ pre_b.B + np.outer(pre_a.g, pre_b.g) / self.s

    def cov(self, points_a, points_b=None) -> np.ndarray:
        if points_b is None:
            points_b = points_a
        pre_a = self.presolve(points_a)
        pre_b = self.presolve(points_b)
        return self.cov_presolved(pre_a, pre_b, self.kernel.cross(points_a, points_b))

    def cov_diag_presolved(self, pre: Presolve) -> np.ndarray:
        raw = self.kernel.variance - np.einsum("ij,ij->j", pre.B, pre.B) \
            + pre.g * pre.g / self.s
        floor = -1e-10 * max(1.0, self.kernel.variance)
        if np.any(raw < floor):
            raise InvariantError(f"posterior variance {raw.min():.3e} below floor")
        return np.maximum(raw, 0.0)

    def cov_diag(self, points) -> np.ndarray:
        return self.cov_diag_presolved(self.presolve(points))

    def sample(self, points, n_draws: int, rng: np.random.Generator) -> np.ndarray:
        """Joint posterior draws at the points, shape (n_draws, len(points))."""
        mean = self.mean(points)
        cov = self.cov(points)
        ls, _ = _cholesky_with_jitter(cov, max(cov.diagonal().max(), 1e-12))
        z = rng.standard_normal((n_draws, len(mean)))
        return mean + z @ ls.T


def fit_posterior(kernel: KernelSpec, noise: NoiseFunction | None,
                  data: ObservationSet) -> PosteriorGP:
    """Fit the ordinary-kriging posterior to the observations.

    ``noise`` is kept as a reference for downstream field evaluation; the
    per-observation variances come from ``data.noise_vars``.
    """
    n = len(data)
    if n < 1:
        raise ValueError("at least one observation is required (improper uniform mean)")
    a = kernel.cross(data.points, data.points)
    a[np.diag_indices(n)] += data.noise_vars
    chol, jitter = _cholesky_with_jitter(a, kernel.variance)
    ones = np.ones(n)
    w = solve_triangular(chol, ones, lower=True, check_finite=False)
    uz = solve_triangular(chol, data.values, lower=True, check_finite=False)
    s = float(w @ w)
    mhat = float(w @ uz) / s
    return PosteriorGP(kernel=kernel, data=data, noise=noise, chol=chol, w=w,
                       u_resid=uz - mhat * w, mhat=mhat, s=s, jitter=jitter)


def posterior_mean(gp: PosteriorGP, point) -> float:
    """m_n at one joint point (omega0, zeta, t)."""
    return float(gp.mean(np.asarray(point, dtype=np.float64).reshape(1, 3))[0])


def posterior_cov(gp: PosteriorGP, point_p, point_q) -> float:
    """k_n between two joint points."""
    p = np.asarray(point_p, dtype=np.float64).reshape(1, 3)
    q = np.asarray(point_q, dtype=np.float64).reshape(1, 3)
    return float(gp.cov(p, q)[0, 0])
