"""Sequential selection criteria: expected residual uncertainty and its
cost-normalized multi-fidelity form.

For a candidate observation at (x, t), the expected post-observation
uncertainty is

    J_n(x, t) = sum_j w_j [ Phi2(u_j, u_j; r_n(y_j, y_j))
                            - Phi2(u_j, u_j; k_n((y_j,t_hf),(x,t))^2
                                             / (V_n(y_j,t_hf) V_n(x,t))) ]

so the expected gain H_n - J_n is nonnegative (Cauchy-Schwarz keeps the
hypothetical correlation below r_n(y, y)). Single-level selection minimizes
J_n at a fixed level; multi-fidelity selection maximizes gain per unit cost,
which for level-only costs factorizes into per-level argmin then level argmax.

Ties break deterministically: lowest candidate index within a level, then
lowest level cost across levels (levels are evaluated in grid order, which is
cost-increasing for the a/t + b model).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from mfsur import _backend
from mfsur.design import Bounds, sample_candidates
from mfsur.exceedance import ExceedanceField, FieldStats, QuadratureMeasure
from mfsur.gp import InvariantError, Presolve, joint

logger = logging.getLogger(__name__)

GAIN_TOL = 1e-10
SATURATION_FACTOR = 1e-14
# gains (probability-variance units, <= 0.25) below this are pure round-off;
# covers the H_n = 0 corner where the relative test degenerates to "<= 0"
SATURATION_ABS = 1e-18


@dataclass(frozen=True)
class CostModel:
    """Per-observation simulation cost C(t) = a/t + b."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b < 0:
            raise ValueError("cost model requires a > 0 and b >= 0")

    def __call__(self, t) -> float | np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        c = self.a / t + self.b
        return float(c) if c.ndim == 0 else c


@dataclass(frozen=True)
class CandidateSet:
    """Per-level candidate input points."""

    levels: np.ndarray
    points: list

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        pts = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in self.points]
        if len(levels) != len(pts):
            raise ValueError("one candidate list per level")
        if any(len(p) == 0 for p in pts):
            raise ValueError("at least one candidate per level")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "points", pts)

    @classmethod
    def draw(cls, levels, count: int, bounds: Bounds,
             rng: np.random.Generator) -> "CandidateSet":
        """Fresh i.i.d. candidates from the input distribution, per level."""
        levels = np.asarray(levels, dtype=np.float64)
        return cls(levels, [sample_candidates(count, bounds, rng) for _ in levels])


@dataclass(frozen=True)
class LevelAudit:
    """Per-candidate criterion values at one level, for audit dumps."""

    level: float
    cost: float
    points: np.ndarray
    j_values: np.ndarray
    gains: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class SelectionResult:
    """Chosen observation point plus the full criterion audit."""

    x: np.ndarray
    t: float
    level_index: int
    cand_index: int
    j_value: float
    gain: float
    cost: float
    score: float
    degenerate: bool
    audit: list


class CriterionEvaluator:
    """Per-iteration cache for evaluating J_n over candidate batches.

    Node-side solve vectors are computed once (inside FieldStats) and reused
    for every candidate, leaving one cross-covariance GEMM and one batched
    diagonal-bivariate-CDF gain evaluation per candidate block.

    ``drop_mass`` optionally skips the nodes with the smallest posterior
    variances: a node's gain contribution never exceeds its variance
    contribution to H_n, so dropping a set of total weighted variance
    <= drop_mass * H_n perturbs every J value by at most that amount
    (downward). The default keeps the evaluation exact.
    """

    def __init__(self, field: ExceedanceField, measure: QuadratureMeasure,
                 drop_mass: float = 0.0):
        self.field = field
        self.measure = measure
        self.stats: FieldStats = field.evaluate(measure)
        stats = self.stats
        if drop_mass > 0.0 and stats.H > 0.0:
            contrib = measure.weights * stats.prob_var
            order = np.argsort(contrib, kind="stable")
            cum = np.cumsum(contrib[order])
            keep = np.ones(len(order), dtype=bool)
            keep[order[cum <= drop_mass * stats.H]] = False
            self._active = np.flatnonzero(keep)
        else:
            self._active = np.arange(len(measure.weights))
        idx = self._active
        self._nodes_hf = joint(measure.nodes[idx], field.threshold.t_hf)
        self._pre_nodes = Presolve(B=np.ascontiguousarray(stats.presolve.B[:, idx]),
                                   g=stats.presolve.g[idx])
        self._u2 = stats.u[idx] ** 2
        self._pm = stats.prob_mean[idx]
        self._w = measure.weights[idx]
        self._v_nodes = stats.variance[idx]

    @property
    def h_value(self) -> float:
        return self.stats.H

    def j_batch(self, xs: np.ndarray, level: float):
        """J_n and gain for candidate inputs xs at one level."""
        gp = self.field.gp
        stats = self.stats
        pts = joint(xs, level)
        lam = self.field.noise.at(xs, level)
        pre = gp.presolve(pts)
        v_cand = lam + gp.cov_diag_presolved(pre)
        if np.any(v_cand <= 0):
            raise InvariantError("V_n must be positive at candidates")
        # k_n((y, t_hf), (x, t)) laid out (candidates, nodes)
        prior_t = gp.kernel.cross(pts, self._nodes_hf)
        cross_t = gp.cov_presolved(pre, self._pre_nodes, prior_t)
        rho = cross_t * cross_t / (v_cand[:, None] * self._v_nodes[None, :])
        np.clip(rho, 0.0, 1.0, out=rho)
        gains = _backend.exceedance_gain(self._u2, self._pm, self._w, rho)
        j_values = stats.H - gains
        tol = GAIN_TOL * max(1.0, stats.H)
        if np.any(gains < -tol) or np.any(j_values < -tol):
            raise InvariantError(
                f"criterion bounds violated: min gain {gains.min():.3e}, "
                f"min J {j_values.min():.3e}, H {stats.H:.3e}")
        return j_values, gains


def criterion_J(field: ExceedanceField, candidate, measure: QuadratureMeasure) -> float:
    """Expected post-observation uncertainty for one candidate (x, t)."""
    candidate = np.asarray(candidate, dtype=np.float64).ravel()
    ev = CriterionEvaluator(field, measure)
    j, _ = ev.j_batch(candidate[:2].reshape(1, 2), float(candidate[2]))
    return float(j[0])


def select_sur(field: ExceedanceField, level: float, candidates: CandidateSet,
               measure: QuadratureMeasure, drop_mass: float = 0.0) -> SelectionResult:
    """Single-level selection: minimize J_n over the level's candidates."""
    levels = list(candidates.levels)
    matches = [i for i, lv in enumerate(levels) if np.isclose(lv, level, rtol=1e-9)]
    if not matches:
        raise ValueError(f"level {level} not present in the candidate set")
    li = matches[0]
    xs = candidates.points[li]
    ev = CriterionEvaluator(field, measure, drop_mass=drop_mass)
    j, gains = ev.j_batch(xs, level)
    ci = int(np.argmin(j))
    audit = [LevelAudit(level=level, cost=np.nan, points=xs, j_values=j,
                        gains=gains, scores=gains)]
    return SelectionResult(x=xs[ci].copy(), t=float(level), level_index=li,
                           cand_index=ci, j_value=float(j[ci]), gain=float(gains[ci]),
                           cost=np.nan, score=float(gains[ci]), degenerate=False,
                           audit=audit)


def select_msur(field: ExceedanceField, candidates: CandidateSet, cost: CostModel,
                measure: QuadratureMeasure, active=None,
                drop_mass: float = 0.0) -> SelectionResult:
    """Cost-normalized multi-fidelity selection over all active levels.

    Two steps: per level the J_n-minimizing candidate, then the level
    maximizing (H_n - J_n)/C(t). ``active`` optionally masks levels (used by
    the budget rule). If every gain is below SATURATION_FACTOR * H_n the
    model is saturated: the cheapest active level's best candidate is
    returned with ``degenerate=True``.
    """
    ev = CriterionEvaluator(field, measure, drop_mass=drop_mass)
    levels = candidates.levels
    if active is None:
        active = np.ones(len(levels), dtype=bool)
    active = np.asarray(active, dtype=bool)
    if not active.any():
        raise ValueError("no active level to select from")

    audit = []
    best = None  # (score, level_index, cand_index, j, gain, cost)
    for li, level in enumerate(levels):
        if not active[li]:
            continue
        xs = candidates.points[li]
        c = float(cost(level))
        if c <= 0:
            raise ValueError(f"cost must be positive, got C({level}) = {c}")
        j, gains = ev.j_batch(xs, float(level))
        scores = gains / c
        audit.append(LevelAudit(level=float(level), cost=c, points=xs,
                                j_values=j, gains=gains, scores=scores))
        ci = int(np.argmin(j))
        if best is None or scores[ci] > best[0]:
            best = (float(scores[ci]), li, ci, float(j[ci]), float(gains[ci]), c)

    score, li, ci, j_best, gain_best, c_best = best
    max_gain = max(float(a.gains.max()) for a in audit)
    degenerate = max_gain <= max(SATURATION_FACTOR * ev.h_value, SATURATION_ABS)
    if degenerate:
        # model saturated: fall back to the cheapest active level's best point
        costs = np.where(active, cost(levels), np.inf)
        li = int(np.argmin(costs))
        entry = next(a for a in audit if np.isclose(a.level, levels[li], rtol=1e-9))
        ci = int(np.argmin(entry.j_values))
        j_best = float(entry.j_values[ci])
        gain_best = float(entry.gains[ci])
        c_best = float(entry.cost)
        score = float(entry.scores[ci])
        logger.warning("selection saturated (max gain %.3e vs H %.3e); "
                       "falling back to cheapest level %g",
                       gain_best, ev.h_value, levels[li])
    return SelectionResult(x=candidates.points[li][ci].copy(), t=float(levels[li]),
                           level_index=li, cand_index=ci, j_value=j_best,
                           gain=gain_best, cost=c_best, score=score,
                           degenerate=degenerate, audit=audit)
