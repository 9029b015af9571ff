"""Ordinary-kriging posterior against a dense-inversion oracle."""

import numpy as np
import pytest
from helpers import dense_kriging_oracle, random_observations, toy_kernel, toy_noise

from mfsur.gp import (IllConditionedError, KernelSpec, NoiseFunction,
                      ObservationSet, _cholesky_with_jitter, fit_posterior, joint,
                      posterior_cov, posterior_mean)

LEVELS = (1.0, 0.5, 0.2, 0.05, 0.01)


def fit_toy(data, kernel=None):
    return fit_posterior(kernel or toy_kernel(), toy_noise(levels=LEVELS), data)


class TestFitBasics:
    def test_empty_data_rejected(self):
        data = ObservationSet(np.empty((0, 3)), [], [])
        with pytest.raises(ValueError):
            fit_toy(data)

    def test_single_noiseless_interpolates(self):
        pt = (12.0, 0.4, 0.05)
        data = ObservationSet([pt], [2.0], [0.0])
        gp = fit_toy(data)
        assert posterior_mean(gp, pt) == pytest.approx(2.0, abs=1e-10)
        assert posterior_cov(gp, pt, pt) == pytest.approx(0.0, abs=1e-10)

    def test_reverts_to_estimated_mean_far_from_data(self):
        kernel = KernelSpec(2.0, (0.02, 0.02), 0.05)
        data = ObservationSet([(1.0, 0.1, 1.0), (2.0, 0.2, 1.0)], [1.0, 3.0],
                              [0.1, 0.1])
        gp = fit_posterior(kernel, None, data)
        far = (29.0, 0.95, 0.01)
        assert posterior_mean(gp, far) == pytest.approx(gp.mhat, abs=1e-8)
        # far covariance: prior variance plus mean-estimation uncertainty
        assert posterior_cov(gp, far, far) == pytest.approx(
            kernel.variance + 1.0 / gp.s, abs=1e-8)

    def test_two_symmetric_observations_hand_solved(self):
        # query equidistant from both points: weights are equal by symmetry,
        # solved here explicitly through the 2x2 system
        kernel = toy_kernel()
        p1, p2 = (10.0, 0.4, 0.2), (14.0, 0.4, 0.2)
        q = (12.0, 0.4, 0.2)
        lam = 0.3
        data = ObservationSet([p1, p2], [1.0, 3.0], [lam, lam])
        gp = fit_posterior(kernel, None, data)
        k11 = kernel.variance + lam
        k12 = float(kernel.cross([p1], [p2])[0, 0])
        kq = float(kernel.cross([p1], [q])[0, 0])
        a = np.array([[k11, k12], [k12, k11]])
        a_inv = np.linalg.inv(a)
        ones = np.ones(2)
        mhat = ones @ a_inv @ np.array([1.0, 3.0]) / (ones @ a_inv @ ones)
        expect = mhat + np.array([kq, kq]) @ a_inv @ (np.array([1.0, 3.0]) - mhat)
        assert posterior_mean(gp, q) == pytest.approx(expect, abs=1e-12)
        assert mhat == pytest.approx(2.0, abs=1e-12)

    def test_mixed_levels_against_dense_oracle(self):
        rng = np.random.default_rng(10)
        kernel = toy_kernel()
        for trial in range(50):
            n = int(rng.integers(1, 7))
            data = random_observations(rng, n, levels=LEVELS)
            gp = fit_posterior(kernel, None, data)
            pts = joint(rng.uniform((0, 0), (30, 1), (4, 2)),
                        rng.choice(LEVELS, 4))
            mean_oracle, cov_oracle = dense_kriging_oracle(kernel, data, pts)
            scale = max(1.0, np.abs(mean_oracle).max())
            assert np.max(np.abs(gp.mean(pts) - mean_oracle)) <= 1e-10 * scale
            cov_scale = max(1.0, np.abs(cov_oracle).max())
            assert np.max(np.abs(gp.cov(pts) - cov_oracle)) <= 1e-10 * cov_scale


class TestPosteriorCov:
    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(11)
        data = random_observations(rng, 5)
        gp = fit_toy(data)
        p, q = (3.0, 0.3, 0.2), (20.0, 0.8, 0.05)
        assert posterior_cov(gp, p, q) == posterior_cov(gp, q, p)

    def test_cauchy_schwarz(self):
        rng = np.random.default_rng(12)
        data = random_observations(rng, 8)
        gp = fit_toy(data)
        for _ in range(100):
            p = joint(rng.uniform((0, 0), (30, 1), (1, 2)), rng.choice(LEVELS))
            q = joint(rng.uniform((0, 0), (30, 1), (1, 2)), rng.choice(LEVELS))
            kpq = gp.cov(p, q)[0, 0]
            assert kpq * kpq <= gp.cov_diag(p)[0] * gp.cov_diag(q)[0] + 1e-10

    def test_contraction_when_adding_data(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            data = random_observations(rng, int(rng.integers(2, 10)))
            gp_before = fit_toy(data)
            extra_x = rng.uniform((0, 0), (30, 1))
            extra = (extra_x[0], extra_x[1], float(rng.choice(LEVELS)))
            grown = data.append(extra, float(rng.normal()), 0.05)
            gp_after = fit_toy(grown)
            probes = joint(rng.uniform((0, 0), (30, 1), (10, 2)),
                           rng.choice(LEVELS, 10))
            assert np.all(gp_after.cov_diag(probes)
                          <= gp_before.cov_diag(probes) + 1e-10)

    def test_noiseless_interpolation_invariant(self):
        rng = np.random.default_rng(14)
        kernel = toy_kernel()
        xs = rng.uniform((0, 0), (30, 1), (6, 2))
        pts = joint(xs, 0.2)
        data = ObservationSet(pts, rng.normal(size=6), np.zeros(6))
        gp = fit_posterior(kernel, None, data)
        assert np.max(np.abs(gp.mean(pts) - data.values)) <= 1e-8
        assert np.max(gp.cov_diag(pts)) <= 1e-8 * kernel.variance


class TestSampling:
    def test_moments_match_posterior(self):
        rng = np.random.default_rng(15)
        data = random_observations(rng, 12)
        gp = fit_toy(data)
        pts = joint([[8.0, 0.3], [22.0, 0.7]], [0.01, 0.05])
        draws = gp.sample(pts, 100_000, np.random.default_rng(99))
        mean = gp.mean(pts)
        var = gp.cov_diag(pts)
        se_mean = np.sqrt(var / len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - mean) <= 4 * se_mean)
        se_var = var * np.sqrt(2.0 / (len(draws) - 1))
        assert np.all(np.abs(draws.var(axis=0, ddof=1) - var) <= 4 * se_var)


class TestConditioning:
    def test_jitter_resolves_duplicates(self):
        pt = (10.0, 0.5, 0.2)
        data = ObservationSet([pt, pt], [1.0, 1.0], [0.0, 0.0])
        gp = fit_toy(data)
        assert gp.jitter > 0

    def test_ill_conditioned_error(self):
        indefinite = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(IllConditionedError):
            _cholesky_with_jitter(indefinite, 1e-8)


class TestDomainTypes:
    def test_observation_set_validation(self):
        with pytest.raises(ValueError):
            ObservationSet([(1, 0.5, 0.2)], [1.0, 2.0], [0.1])
        with pytest.raises(ValueError):
            ObservationSet([(1, 0.5, 0.2)], [np.inf], [0.1])
        with pytest.raises(ValueError):
            ObservationSet([(1, 0.5, 0.2)], [1.0], [-0.1])

    def test_kernel_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(0.0, (0.3, 0.3), 1.0)
        with pytest.raises(ValueError):
            KernelSpec(1.0, (0.3, -0.3), 1.0)

    def test_kernel_gram_is_psd_with_jitter(self):
        rng = np.random.default_rng(16)
        kernel = toy_kernel()
        pts = joint(rng.uniform((0, 0), (30, 1), (40, 2)), rng.choice(LEVELS, 40))
        gram = kernel.cross(pts, pts)
        chol, jitter = _cholesky_with_jitter(gram, kernel.variance)
        assert jitter <= 1e-6 * kernel.variance

    def test_noise_function_bilinear_interpolation(self):
        levels = np.array([0.5, 0.1])
        ax = np.array([0.0, 10.0])
        bx = np.array([0.0, 1.0])
        tables = np.array([
            [[1.0, 2.0], [3.0, 4.0]],
            [[5.0, 5.0], [5.0, 5.0]],
        ])
        nf = NoiseFunction(levels, ax, bx, tables)
        got = nf.at([[5.0, 0.5]], 0.5)[0]
        assert got == pytest.approx(2.5, abs=1e-12)
        assert nf.at([[700.0, 3.0]], 0.5)[0] == pytest.approx(4.0)  # clipped
        assert nf.at([[2.0, 0.2]], 0.1)[0] == pytest.approx(5.0)

    def test_noise_function_level_lookup(self):
        nf = toy_noise()
        with pytest.raises(ValueError):
            nf.at([[1.0, 0.5]], 0.33)
        pts = np.array([(1.0, 0.5, 1.0), (2.0, 0.1, 0.01)])
        assert np.allclose(nf.at_points(pts), 0.05)
