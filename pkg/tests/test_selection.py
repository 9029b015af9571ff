"""Selection criteria: closed-form J_n against a refit Monte-Carlo oracle,
two-step/joint equivalence, tie-breaking, degenerate saturation."""

import numpy as np
import pytest
from helpers import random_observations, toy_kernel, toy_noise

from mfsur.exceedance import ExceedanceField, QuadratureMeasure, ThresholdSpec
from mfsur.gp import KernelSpec, ObservationSet, fit_posterior
from mfsur.selection import (CandidateSet, CostModel, CriterionEvaluator,
                             criterion_J, select_msur, select_sur)

LEVELS = (1.0, 0.5, 0.2, 0.05, 0.01)
T_HF = 0.01
Z_CRIT = -3.0
BOUNDS = ((0.0, 30.0), (0.0, 1.0))


def make_field(data, lam=0.08, kernel=None):
    noise = toy_noise(lam, LEVELS)
    gp = fit_posterior(kernel or toy_kernel(), noise, data)
    return ExceedanceField(gp, noise, ThresholdSpec(Z_CRIT, T_HF)), noise


def small_setup(seed=40, n=12, lam=0.08, grid=(5, 5)):
    rng = np.random.default_rng(seed)
    data = random_observations(rng, n, levels=LEVELS, noise_value=lam)
    field, noise = make_field(data, lam)
    measure = QuadratureMeasure.regular_grid(BOUNDS, grid)
    return field, noise, measure, data


class TestCostModel:
    def test_benchmark_coefficients(self):
        cost = CostModel(0.0098, 0.02)
        assert cost(1.0) == pytest.approx(0.0298, abs=1e-12)
        assert cost(0.01) == pytest.approx(1.0, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            CostModel(0.0, 0.1)
        with pytest.raises(ValueError):
            CostModel(1.0, -0.1)


class TestCriterionJ:
    def test_uninformative_candidate_keeps_H(self):
        # a duplicate of a noiseless observation has k_n(., candidate) = 0
        # everywhere (Cauchy-Schwarz), so observing it again gains nothing
        rng = np.random.default_rng(41)
        lam = 0.1
        noise = toy_noise(lam, LEVELS)
        resolved = (15.0, 0.5, 0.2)
        data = random_observations(rng, 6, noise_value=lam)
        data = data.append(resolved, 0.3, 0.0)
        gp = fit_posterior(toy_kernel(), noise, data)
        field = ExceedanceField(gp, noise, ThresholdSpec(Z_CRIT, T_HF))
        measure = QuadratureMeasure.regular_grid(BOUNDS, (4, 4))
        h = field.uncertainty_H(measure)
        j = criterion_J(field, resolved, measure)
        assert j == pytest.approx(h, abs=1e-12 + 1e-9 * h)

    def test_full_resolution_at_single_node(self):
        field, noise, _, data = small_setup(lam=0.0)
        node = np.array([9.0, 0.35])
        measure = QuadratureMeasure([node], [1.0])
        j = criterion_J(field, (node[0], node[1], T_HF), measure)
        assert j == pytest.approx(0.0, abs=1e-12)

    def test_j_between_zero_and_H(self):
        field, noise, measure, _ = small_setup()
        ev = CriterionEvaluator(field, measure)
        rng = np.random.default_rng(42)
        for level in LEVELS:
            xs = rng.uniform((0, 0), (30, 1), (20, 2))
            j, gains = ev.j_batch(xs, level)
            assert np.all(j >= -1e-10)
            assert np.all(gains >= -1e-10)
            assert np.all(j <= ev.h_value + 1e-10)

    def test_matches_monte_carlo_refit_oracle(self):
        # the decisive validation: J equals the expected post-observation H
        field, noise, _, data = small_setup(seed=43, n=10, lam=0.1)
        measure = QuadratureMeasure.regular_grid(BOUNDS, (4, 4))
        rng = np.random.default_rng(44)
        n_mc = 600
        for cand in [(6.0, 0.25, 0.2), (21.0, 0.7, T_HF)]:
            j = criterion_J(field, cand, measure)
            pts = np.array([cand])
            m = field.gp.mean(pts)[0]
            v = noise.at(pts[:, :2], cand[2])[0] + field.gp.cov_diag(pts)[0]
            h_next = np.empty(n_mc)
            for i in range(n_mc):
                z = m + np.sqrt(v) * rng.standard_normal()
                grown = data.append(cand, z, noise.at(pts[:, :2], cand[2])[0])
                gp2 = fit_posterior(field.gp.kernel, noise, grown)
                f2 = ExceedanceField(gp2, noise, field.threshold)
                h_next[i] = f2.uncertainty_H(measure)
            se = h_next.std(ddof=1) / np.sqrt(n_mc)
            assert abs(j - h_next.mean()) <= 4 * se


class TestSelectSur:
    def test_single_candidate(self):
        field, noise, measure, _ = small_setup()
        cands = CandidateSet([0.2], [np.array([[14.0, 0.5]])])
        sel = select_sur(field, 0.2, cands, measure)
        assert sel.cand_index == 0
        assert np.array_equal(sel.x, [14.0, 0.5])

    def test_duplicate_of_noiseless_observation_loses(self):
        kernel = toy_kernel()
        lam = 0.1
        noise = toy_noise(lam, LEVELS)
        obs_x = (15.0, 0.5)
        data = ObservationSet([(obs_x[0], obs_x[1], T_HF)], [0.5], [0.0])
        gp = fit_posterior(kernel, noise, data)
        field = ExceedanceField(gp, noise, ThresholdSpec(Z_CRIT, T_HF))
        measure = QuadratureMeasure.regular_grid(BOUNDS, (5, 5))
        other = np.array([8.0, 0.3])
        cands = CandidateSet([T_HF], [np.array([obs_x, other])])
        sel = select_sur(field, T_HF, cands, measure)
        assert sel.cand_index == 1

    def test_argmin_matches_exhaustive(self):
        field, noise, measure, _ = small_setup(seed=45)
        rng = np.random.default_rng(46)
        xs = rng.uniform((0, 0), (30, 1), (5, 2))
        cands = CandidateSet([0.05], [xs])
        sel = select_sur(field, 0.05, cands, measure)
        js = np.array([criterion_J(field, (x[0], x[1], 0.05), measure) for x in xs])
        assert sel.cand_index == int(np.argmin(js))
        assert sel.j_value == pytest.approx(js.min(), rel=1e-12)

    def test_missing_level_rejected(self):
        field, noise, measure, _ = small_setup()
        cands = CandidateSet([0.2], [np.array([[14.0, 0.5]])])
        with pytest.raises(ValueError):
            select_sur(field, 0.1, cands, measure)


class TestSelectMsur:
    def test_equal_costs_reduce_to_global_sur(self):
        field, noise, measure, _ = small_setup(seed=47)
        rng = np.random.default_rng(48)
        cands = CandidateSet.draw(LEVELS, 4, BOUNDS, rng)
        flat_cost = CostModel(1e-9, 1.0)  # effectively constant across levels
        sel = select_msur(field, cands, flat_cost, measure)
        best = min(((criterion_J(field, (x[0], x[1], lv), measure), li, ci)
                    for li, lv in enumerate(LEVELS)
                    for ci, x in enumerate(cands.points[li])))
        assert (sel.level_index, sel.cand_index) == (best[1], best[2])

    def test_two_step_equals_joint_argmax(self):
        cost = CostModel(0.0098, 0.02)
        for seed in range(5):
            field, noise, measure, _ = small_setup(seed=50 + seed, n=8)
            rng = np.random.default_rng(60 + seed)
            levels = (1.0, 0.2, 0.01)
            cands = CandidateSet.draw(levels, 4, BOUNDS, rng)
            sel = select_msur(field, cands, cost, measure)
            ev = CriterionEvaluator(field, measure)
            best_score, best = -np.inf, None
            for li, lv in enumerate(levels):
                j, gains = ev.j_batch(cands.points[li], lv)
                scores = gains / cost(lv)
                ci = int(np.argmax(scores > best_score) if np.any(scores > best_score)
                         else 0)
                for ci, s in enumerate(scores):
                    if s > best_score:
                        best_score, best = s, (li, ci)
            assert (sel.level_index, sel.cand_index) == best
            assert sel.score == pytest.approx(best_score, rel=1e-12)

    def test_cost_rescaling_invariance(self):
        field, noise, measure, _ = small_setup(seed=70)
        rng = np.random.default_rng(71)
        cands = CandidateSet.draw(LEVELS, 5, BOUNDS, rng)
        base = select_msur(field, cands, CostModel(0.0098, 0.02), measure)
        for c in (0.1, 3.0, 250.0):
            scaled = select_msur(field, cands, CostModel(0.0098 * c, 0.02 * c), measure)
            assert scaled.level_index == base.level_index
            assert scaled.cand_index == base.cand_index

    def test_active_mask_excludes_levels(self):
        field, noise, measure, _ = small_setup(seed=72)
        rng = np.random.default_rng(73)
        cands = CandidateSet.draw(LEVELS, 4, BOUNDS, rng)
        active = np.array([True, True, True, False, False])
        sel = select_msur(field, cands, CostModel(0.0098, 0.02), measure, active=active)
        assert sel.level_index <= 2
        with pytest.raises(ValueError):
            select_msur(field, cands, CostModel(0.0098, 0.02), measure,
                        active=np.zeros(5, dtype=bool))

    def test_saturated_model_falls_back_to_cheapest(self):
        # every quadrature node is pinned by a noiseless observation at the
        # highest fidelity: no candidate can reduce uncertainty any further
        nodes = np.array([[5.0, 0.2], [12.0, 0.6], [20.0, 0.35], [27.0, 0.8]])
        pts = np.column_stack([nodes, np.full(4, T_HF)])
        data = ObservationSet(pts, [0.1, -0.5, 0.4, 1.0], np.zeros(4))
        noise = toy_noise(0.2, LEVELS)
        gp = fit_posterior(toy_kernel(), noise, data)
        field = ExceedanceField(gp, noise, ThresholdSpec(Z_CRIT, T_HF))
        measure = QuadratureMeasure(nodes, np.full(4, 0.25))
        rng = np.random.default_rng(74)
        cands = CandidateSet.draw(LEVELS, 3, BOUNDS, rng)
        sel = select_msur(field, cands, CostModel(0.0098, 0.02), measure)
        assert sel.degenerate
        assert sel.level_index == 0  # cheapest level on this grid

    def test_candidate_set_validation(self):
        with pytest.raises(ValueError):
            CandidateSet([0.2, 0.1], [np.array([[1.0, 0.5]])])
        with pytest.raises(ValueError):
            CandidateSet([0.2], [np.empty((0, 2))])


class TestDropMass:
    def test_truncated_evaluation_stays_close(self):
        field, noise, measure, _ = small_setup(seed=75, grid=(8, 8))
        rng = np.random.default_rng(76)
        xs = rng.uniform((0, 0), (30, 1), (10, 2))
        exact = CriterionEvaluator(field, measure, drop_mass=0.0)
        approx = CriterionEvaluator(field, measure, drop_mass=1e-7)
        j0, _ = exact.j_batch(xs, 0.05)
        j1, _ = approx.j_batch(xs, 0.05)
        assert np.all(j1 >= j0 - 1e-15)
        assert np.max(np.abs(j1 - j0)) <= 1e-7 * exact.h_value + 1e-15
