"""E-step, M-step, and the plain EM loop against naive-formula oracles."""

import math

import numpy as np
import pytest

from gmmaccel import (
    DegenerateComponentError,
    FitConfig,
    MixtureModel,
    Responsibilities,
    SyntheticSpec,
    WeightedDataset,
    data_moments,
    e_step,
    e_step_with_loglik,
    fit_em,
    generate_synthetic,
    kmeans_init,
    log_likelihood,
    m_step_standard,
    mixture_moments,
)

from conftest import random_dataset, random_model, random_spd
from test_model import naive_gaussian_density


def naive_e_step(data, model):
    """Direct responsibility formula, densities evaluated the slow way."""
    n, k = data.count, model.n_components
    r = np.zeros((n, k))
    for j in range(n):
        dens = np.array([
            model.weights[i]
            * naive_gaussian_density(data.points[j], model.means[i], model.covariances[i])
            for i in range(k)
        ])
        r[j] = data.weights[j] * dens / dens.sum()
    return r


class TestEStep:
    def test_single_component_gets_all_weight(self, rng):
        model = random_model(rng, 1, 2)
        data = random_dataset(rng, 8, 2)
        resp = e_step(data, model)
        np.testing.assert_allclose(resp.matrix[:, 0], data.weights, rtol=1e-14)

    def test_identical_components_split_evenly(self, rng):
        cov = random_spd(rng, 2)
        mean = rng.standard_normal(2)
        model = MixtureModel([0.5, 0.5], [mean, mean], [cov, cov])
        data = random_dataset(rng, 6, 2)
        resp = e_step(data, model)
        np.testing.assert_allclose(resp.matrix[:, 0], data.weights / 2, rtol=1e-12)
        np.testing.assert_allclose(resp.matrix[:, 1], data.weights / 2, rtol=1e-12)

    def test_matches_direct_formula(self, rng):
        model = random_model(rng, 2, 3)
        data = random_dataset(rng, 5, 3)
        resp = e_step(data, model)
        np.testing.assert_allclose(resp.matrix, naive_e_step(data, model), rtol=1e-12)

    def test_row_sums_equal_weights(self, rng):
        model = random_model(rng, 3, 2)
        data = random_dataset(rng, 50, 2)
        resp = e_step(data, model)
        np.testing.assert_allclose(
            resp.matrix.sum(axis=1), data.weights, rtol=1e-10
        )
        assert resp.col_sums.sum() == pytest.approx(data.count, abs=1e-8)
        assert np.all(resp.matrix >= 0)

    def test_total_underflow_falls_back_to_weights(self, rng):
        model = random_model(rng, 2, 2, spread=0.5)
        # one point so remote that every component density underflows to zero
        points = np.vstack([rng.standard_normal((3, 2)), [[1e160, 1e160]]])
        data = WeightedDataset.from_points(points)
        resp = e_step(data, model)
        np.testing.assert_allclose(resp.matrix[-1], data.weights[-1] * model.weights,
                                   rtol=1e-12)
        assert np.isfinite(resp.matrix).all()


class TestMStep:
    def test_one_hot_partition_recovers_cluster_moments(self, rng):
        data = random_dataset(rng, 30, 2)
        half = 15
        r = np.zeros((30, 2))
        r[:half, 0] = data.weights[:half]
        r[half:, 1] = data.weights[half:]
        resp = Responsibilities(r, r.sum(axis=0))
        model = m_step_standard(data, resp)
        w = data.weights[:half]
        mean = w @ data.points[:half] / w.sum()
        diff = data.points[:half] - mean
        cov = (w[:, None] * diff).T @ diff / w.sum()
        np.testing.assert_allclose(model.means[0], mean, rtol=1e-12)
        np.testing.assert_allclose(model.covariances[0], cov, rtol=1e-10)
        assert model.weights[0] == pytest.approx(w.sum() / data.count, rel=1e-12)

    def test_uniform_responsibilities_give_global_moments(self, rng):
        data = random_dataset(rng, 25, 3)
        k = 3
        r = np.tile(data.weights[:, None] / k, (1, k))
        model = m_step_standard(data, Responsibilities(r, r.sum(axis=0)))
        mean = data.weights @ data.points / data.count
        for i in range(k):
            np.testing.assert_allclose(model.means[i], mean, rtol=1e-12)
            np.testing.assert_allclose(model.covariances[i], model.covariances[0],
                                       rtol=1e-12)

    def test_matches_loop_oracle(self, rng):
        data = random_dataset(rng, 12, 2)
        model0 = random_model(rng, 2, 2)
        resp = e_step(data, model0)
        model = m_step_standard(data, resp)
        for i in range(2):
            nk = resp.matrix[:, i].sum()
            mean = sum(resp.matrix[j, i] * data.points[j] for j in range(12)) / nk
            cov = sum(
                resp.matrix[j, i] * np.outer(data.points[j] - mean, data.points[j] - mean)
                for j in range(12)
            ) / nk
            np.testing.assert_allclose(model.means[i], mean, rtol=1e-12)
            np.testing.assert_allclose(model.covariances[i], cov, rtol=1e-10)
            assert model.weights[i] == pytest.approx(nk / data.count, rel=1e-12)

    def test_zero_mass_component_raises(self, rng):
        data = random_dataset(rng, 10, 2)
        r = np.zeros((10, 2))
        r[:, 0] = data.weights
        with pytest.raises(DegenerateComponentError):
            m_step_standard(data, Responsibilities(r, r.sum(axis=0)))


class TestFitEm:
    def test_single_gaussian_converges_immediately(self, rng):
        data = random_dataset(rng, 60, 2)
        mean = data.weights @ data.points / data.count
        diff = data.points - mean
        cov = (data.weights[:, None] * diff).T @ diff / data.count
        init = MixtureModel([1.0], [mean], [cov])
        model, trace = fit_em(data, init)
        assert trace.converged
        assert trace.iterations == 1

    def test_preset_data_converges_monotonically(self):
        data = generate_synthetic(SyntheticSpec(preset="vws", n=400, seed=1))
        init = kmeans_init(data, 3, np.random.default_rng(1))
        model, trace = fit_em(data, init)
        assert trace.converged
        assert model.n_components == 3
        deltas = np.diff(trace.objectives)
        assert deltas.min() >= -1e-10

    def test_moment_conservation_after_one_step(self, rng):
        data = random_dataset(rng, 80, 3)
        model0 = random_model(rng, 3, 3)
        model = m_step_standard(data, e_step(data, model0))
        assert model.weights.sum() == pytest.approx(1.0, abs=1e-15)
        dm = data_moments(data)
        mm = mixture_moments(model)
        np.testing.assert_allclose(mm.first * data.count, dm.first, rtol=1e-9)
        np.testing.assert_allclose(mm.second * data.count, dm.second, rtol=1e-9)

    def test_fused_estep_loglik_matches_direct(self, rng):
        data = random_dataset(rng, 40, 2)
        model = random_model(rng, 2, 2)
        _, loglik = e_step_with_loglik(data, model)
        assert loglik == pytest.approx(log_likelihood(data, model), rel=1e-13)


class TestFitConfig:
    def test_m_aa_resolution_rule(self):
        cfg = FitConfig()
        assert cfg.resolve_m_aa(3) == 5
        assert cfg.resolve_m_aa(2) == 5
        assert cfg.resolve_m_aa(5) == 10
        assert cfg.resolve_m_aa(10) == 10
        assert FitConfig(m_aa=7).resolve_m_aa(3) == 7

    def test_validation(self):
        with pytest.raises(Exception):
            FitConfig(tol=0.0)
        with pytest.raises(Exception):
            FitConfig(m_aa=0)
        with pytest.raises(Exception):
            FitConfig(max_iters=0)
