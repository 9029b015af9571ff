"""Closed-form posterior statistics of the exceedance probability field.

For the threshold z_crit at the highest fidelity t_hf, with
V_n(x, t) = lambda(x, t) + k_n((x,t), (x,t)):

    u_n(x)      = (m_n(x, t_hf) - z_crit) / sqrt(V_n(x, t_hf))
    r_n(x, x')  = k_n((x,t_hf), (x',t_hf)) / sqrt(V_n(x,t_hf) V_n(x',t_hf))
    E_n p(x)    = Phi(u_n(x))
    Var_n p(x)  = Phi2(u_n(x), u_n(x); r_n(x, x)) - Phi(u_n(x))^2

and the uncertainty measure H_n integrates Var_n p over a quadrature measure.
Node sums use a fixed evaluation order (numpy reductions), so H_n does not
depend on how callers might distribute node evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfsur import gp as gpmod
from mfsur.design import Bounds, grid_centers
from mfsur.gp import InvariantError, NoiseFunction, PosteriorGP, Presolve, joint
from mfsur.normals import as_correlation, binorm_cdf, binorm_cdf_array, norm_cdf


@dataclass(frozen=True)
class ThresholdSpec:
    """Critical output level and the highest-fidelity time step."""

    z_crit: float
    t_hf: float

    def __post_init__(self):
        if not np.isfinite(self.z_crit) or self.t_hf <= 0:
            raise ValueError("z_crit must be finite and t_hf positive")


@dataclass(frozen=True)
class QuadratureMeasure:
    """Finite-node measure on the input box; weights sum to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(nodes) == 0:
            raise ValueError("measure needs at least one node")
        if len(nodes) != len(w):
            raise ValueError("nodes and weights must have equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)

    @classmethod
    def regular_grid(cls, bounds: Bounds, shape: tuple[int, int]) -> "QuadratureMeasure":
        """Uniform weights on cell centers: the uniform input distribution."""
        _, _, nodes = grid_centers(bounds, shape)
        return cls(nodes, np.full(len(nodes), 1.0 / len(nodes)))


@dataclass(frozen=True)
class FieldStats:
    """Batched node-side evaluation of the field on a quadrature measure."""

    measure: QuadratureMeasure
    presolve: Presolve
    lam: np.ndarray       # lambda(x_j, t_hf)
    variance: np.ndarray  # V_n(x_j, t_hf)
    u: np.ndarray
    r_diag: np.ndarray
    prob_mean: np.ndarray
    prob_var: np.ndarray
    H: float


class ExceedanceField:
    """Evaluator bundle for the exceedance statistics of a fitted posterior."""

    def __init__(self, gp: PosteriorGP, noise: NoiseFunction, threshold: ThresholdSpec):
        self.gp = gp
        self.noise = noise
        self.threshold = threshold
        self._stats_cache: dict[int, FieldStats] = {}

    def _joint_hf(self, x) -> np.ndarray:
        return joint(x, self.threshold.t_hf)

    def _variance_at(self, x) -> np.ndarray:
        pts = self._joint_hf(x)
        v = self.noise.at(np.atleast_2d(x), self.threshold.t_hf) + self.gp.cov_diag(pts)
        if np.any(v <= 0):
            raise InvariantError("V_n must be positive wherever the field is evaluated")
        return v

    def u_value(self, x) -> float:
        """Standardized margin u_n(x)."""
        x = np.asarray(x, dtype=np.float64).reshape(1, 2)
        m = self.gp.mean(self._joint_hf(x))[0]
        v = self._variance_at(x)[0]
        return float((m - self.threshold.z_crit) / np.sqrt(v))

    def r_value(self, x, x2) -> float:
        """Correlation r_n(x, x') of the latent margins."""
        x = np.asarray(x, dtype=np.float64).reshape(1, 2)
        x2 = np.asarray(x2, dtype=np.float64).reshape(1, 2)
        k = self.gp.cov(self._joint_hf(x), self._joint_hf(x2))[0, 0]
        v1 = self._variance_at(x)[0]
        v2 = self._variance_at(x2)[0]
        return as_correlation(k / np.sqrt(v1 * v2))

    def prob_mean(self, x) -> float:
        """Posterior mean of the exceedance probability at x."""
        return float(norm_cdf(self.u_value(x)))

    def prob_variance(self, x) -> float:
        """Posterior variance of the exceedance probability at x."""
        u = self.u_value(x)
        x = np.asarray(x, dtype=np.float64).reshape(1, 2)
        v = self._variance_at(x)[0]
        lam = self.noise.at(x, self.threshold.t_hf)[0]
        r = as_correlation((v - lam) / v)
        return max(binorm_cdf(u, u, r) - norm_cdf(u) ** 2, 0.0)

    def evaluate(self, measure: QuadratureMeasure) -> FieldStats:
        """Node-side statistics on the measure (cached per measure object)."""
        cached = self._stats_cache.get(id(measure))
        if cached is not None:
            return cached
        pts = self._joint_hf(measure.nodes)
        pre = self.gp.presolve(pts)
        kdiag = self.gp.cov_diag_presolved(pre)
        lam = self.noise.at(measure.nodes, self.threshold.t_hf)
        v = lam + kdiag
        if np.any(v <= 0):
            raise InvariantError("V_n must be positive on all quadrature nodes")
        u = (self.gp.mean_presolved(pre) - self.threshold.z_crit) / np.sqrt(v)
        r_diag = np.clip(kdiag / v, 0.0, 1.0)
        pm = norm_cdf(u)
        pv = np.maximum(binorm_cdf_array(u, u, r_diag) - pm * pm, 0.0)
        stats = FieldStats(measure=measure, presolve=pre, lam=lam, variance=v,
                           u=u, r_diag=r_diag, prob_mean=pm, prob_var=pv,
                           H=float(measure.weights @ pv))
        self._stats_cache[id(measure)] = stats
        return stats

    def uncertainty_H(self, measure: QuadratureMeasure) -> float:
        """Integrated posterior variance of the exceedance field."""
        return self.evaluate(measure).H

    def global_prob_estimate(self, measure: QuadratureMeasure) -> float:
        """Quadrature estimate of the global exceedance probability."""
        stats = self.evaluate(measure)
        return float(measure.weights @ stats.prob_mean)

    def global_prob_variance_bound(self, measure: QuadratureMeasure,
                                   g_factor: float = 1.0) -> float:
        """Upper bound G * H_n on the posterior variance of the global probability."""
        if g_factor < 0:
            raise ValueError("G must be nonnegative")
        return g_factor * self.uncertainty_H(measure)
