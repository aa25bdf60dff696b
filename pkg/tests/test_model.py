"""Densities, likelihoods, penalties, and moments against naive oracles."""

import json
import math

import numpy as np
import pytest

from gmmaccel import (
    DegenerateComponentError,
    InvalidInputError,
    MixtureModel,
    SyntheticSpec,
    WeightedDataset,
    data_moments,
    gaussian_log_density,
    load_model_json,
    log_likelihood,
    mixture_log_density,
    mixture_moments,
    penalized_log_likelihood,
    save_model_json,
)
from gmmaccel.model import (
    free_parameters_per_component,
    penalty_value,
    single_gaussian,
    spd_cholesky,
    total_free_parameters,
)

from conftest import random_dataset, random_model, random_spd

LN_2PI = math.log(2.0 * math.pi)


def naive_gaussian_density(x, mean, cov):
    """Direct evaluation of the density formula, no Cholesky tricks."""
    d = len(x)
    diff = np.asarray(x) - np.asarray(mean)
    quad = diff @ np.linalg.inv(cov) @ diff
    norm = math.sqrt((2.0 * math.pi) ** d * np.linalg.det(cov))
    return math.exp(-0.5 * quad) / norm


def naive_mixture_log_density(x, model):
    """Plain summation of the mixture density (no log-sum-exp)."""
    total = sum(
        model.weights[k] * naive_gaussian_density(x, model.means[k], model.covariances[k])
        for k in range(model.n_components)
    )
    return math.log(total)


class TestGaussianLogDensity:
    def test_standard_normal_at_mean(self):
        comp = single_gaussian(1.0, [0.0], [[1.0]])
        assert gaussian_log_density(np.array([0.0]), comp) == pytest.approx(
            -0.5 * LN_2PI, abs=1e-14
        )

    def test_identity_covariance_2d(self):
        comp = single_gaussian(1.0, [0.0, 0.0], np.eye(2))
        assert gaussian_log_density(np.zeros(2), comp) == pytest.approx(
            -LN_2PI, abs=1e-14
        )

    def test_offset_3d_quadratic_form(self):
        # quadratic form is 27 with identity covariance
        comp = single_gaussian(1.0, [-3.0, -3.0, -3.0], np.eye(3))
        assert gaussian_log_density(np.zeros(3), comp) == pytest.approx(
            -1.5 * LN_2PI - 13.5, abs=1e-12
        )

    def test_rejects_non_finite(self):
        comp = single_gaussian(1.0, [0.0], [[1.0]])
        with pytest.raises(InvalidInputError):
            gaussian_log_density(np.array([np.nan]), comp)

    def test_matches_naive_oracle(self, rng):
        for _ in range(20):
            cov = random_spd(rng, 3)
            mean = rng.standard_normal(3)
            x = rng.standard_normal(3)
            comp = single_gaussian(1.0, mean, cov)
            expected = math.log(naive_gaussian_density(x, mean, cov))
            assert gaussian_log_density(x, comp) == pytest.approx(expected, rel=1e-12)


class TestMixtureLogDensity:
    def test_single_component_degenerates(self, rng):
        model = random_model(rng, 1, 3)
        x = rng.standard_normal(3)
        assert mixture_log_density(x, model) == pytest.approx(
            gaussian_log_density(x, model.component(0)), rel=1e-14
        )

    def test_identical_components_collapse(self, rng):
        cov = random_spd(rng, 2)
        mean = rng.standard_normal(2)
        model = MixtureModel([0.5, 0.5], [mean, mean], [cov, cov])
        x = rng.standard_normal(2)
        assert mixture_log_density(x, model) == pytest.approx(
            gaussian_log_density(x, model.component(0)), rel=1e-14
        )

    def test_preset_model_against_direct_summation(self):
        model = SyntheticSpec(preset="vws").exact_model()
        x = np.zeros(3)
        assert mixture_log_density(x, model) == pytest.approx(
            naive_mixture_log_density(x, model), abs=1e-12
        )

    def test_logsumexp_agrees_with_naive_path(self, rng):
        for _ in range(10):
            model = random_model(rng, 3, 3)
            x = rng.uniform(-3, 3, size=3)
            assert mixture_log_density(x, model) == pytest.approx(
                naive_mixture_log_density(x, model), rel=1e-10
            )


class TestLogLikelihood:
    def test_single_point_single_component(self, rng):
        model = random_model(rng, 1, 2)
        x = rng.standard_normal(2)
        data = WeightedDataset.from_points(x[None, :])
        assert log_likelihood(data, model) == pytest.approx(
            gaussian_log_density(x, model.component(0)), rel=1e-14
        )

    def test_duplicate_point_half_weight_invariance(self, rng):
        model = random_model(rng, 2, 2)
        points = rng.standard_normal((4, 2))
        weights = np.array([1.0, 1.0, 1.0, 1.0])
        base = WeightedDataset(points, weights)
        split = WeightedDataset(
            np.vstack([points, points[-1]]),
            np.array([1.0, 1.0, 1.0, 0.5, 0.5]) * (5 / 4),
        )
        # rescale: both datasets carry sum(weights) = N, so compare per-weight
        lhs = log_likelihood(base, model)
        rhs = log_likelihood(split, model) / (5 / 4)
        assert rhs == pytest.approx(lhs, rel=1e-12)

    def test_matches_double_loop_oracle(self, rng):
        model = random_model(rng, 2, 3)
        data = random_dataset(rng, 10, 3)
        expected = sum(
            data.weights[j] * naive_mixture_log_density(data.points[j], model)
            for j in range(data.count)
        )
        assert log_likelihood(data, model) == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self, rng):
        model = random_model(rng, 2, 3)
        data = random_dataset(rng, 5, 2)
        with pytest.raises(InvalidInputError):
            log_likelihood(data, model)


class TestPenalizedLogLikelihood:
    def test_free_parameter_count(self):
        assert free_parameters_per_component(3) == 9
        assert total_free_parameters(3, 3) == 29

    def test_single_component_penalty(self, rng):
        model = random_model(rng, 1, 3)
        data = random_dataset(rng, 50, 3)
        d_tot = total_free_parameters(1, 3)
        expected = log_likelihood(data, model) - 0.5 * d_tot * math.log(50)
        assert penalized_log_likelihood(data, model) == pytest.approx(expected, rel=1e-14)

    def test_penalty_matches_scalar_oracle(self):
        w = np.array([0.3, 0.3, 0.4])
        # hand-evaluated: -(d/2) ln N - (T/2) sum ln w
        expected = -14.5 * math.log(1000) - 4.5 * (
            math.log(0.3) + math.log(0.3) + math.log(0.4)
        )
        assert penalty_value(3, 3, 1000, w) == pytest.approx(expected, rel=1e-12)

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(InvalidInputError):
            penalty_value(2, 3, 100, np.array([1.0, 0.0]))

    def test_penalty_depends_only_on_shape_and_weights(self, rng):
        data = random_dataset(rng, 30, 2)
        model = random_model(rng, 2, 2)
        gap0 = penalized_log_likelihood(data, model) - log_likelihood(data, model)
        shifted = MixtureModel(
            model.weights, model.means + 0.7, model.covariances * 1.3
        )
        gap1 = penalized_log_likelihood(data, shifted) - log_likelihood(data, shifted)
        assert gap1 == pytest.approx(gap0, rel=1e-12)


class TestMoments:
    def test_single_point(self):
        data = WeightedDataset.from_points(np.array([[2.0, -1.0]]))
        m = data_moments(data)
        assert m.zeroth == 1.0
        np.testing.assert_allclose(m.first, [2.0, -1.0])
        np.testing.assert_allclose(m.second, np.outer([2.0, -1.0], [2.0, -1.0]))

    def test_symmetric_pair_cancels(self):
        x = np.array([1.5, -0.5, 2.0])
        data = WeightedDataset.from_points(np.vstack([x, -x]))
        np.testing.assert_allclose(data_moments(data).first, 0.0, atol=1e-15)

    def test_data_moments_match_loop_oracle(self, rng):
        data = random_dataset(rng, 20, 3)
        m = data_moments(data)
        zeroth = sum(data.weights)
        first = sum(data.weights[j] * data.points[j] for j in range(20))
        second = sum(
            data.weights[j] * np.outer(data.points[j], data.points[j])
            for j in range(20)
        )
        assert m.zeroth == pytest.approx(zeroth, rel=1e-14)
        np.testing.assert_allclose(m.first, first, rtol=1e-12)
        np.testing.assert_allclose(m.second, second, rtol=1e-12)

    def test_mixture_moments_single_component(self, rng):
        model = random_model(rng, 1, 3)
        m = mixture_moments(model)
        assert m.zeroth == pytest.approx(1.0)
        np.testing.assert_allclose(m.first, model.means[0], rtol=1e-14)
        np.testing.assert_allclose(
            m.second,
            model.covariances[0] + np.outer(model.means[0], model.means[0]),
            rtol=1e-13,
        )

    def test_preset_model_first_moment(self):
        model = SyntheticSpec(preset="vws").exact_model()
        np.testing.assert_allclose(mixture_moments(model).first, 0.3, rtol=1e-12)

    def test_mixture_moments_match_loop_oracle(self, rng):
        model = random_model(rng, 3, 3)
        m = mixture_moments(model)
        first = sum(model.weights[k] * model.means[k] for k in range(3))
        second = sum(
            model.weights[k]
            * (model.covariances[k] + np.outer(model.means[k], model.means[k]))
            for k in range(3)
        )
        np.testing.assert_allclose(m.first, first, rtol=1e-13)
        np.testing.assert_allclose(m.second, second, rtol=1e-13)


class TestCholesky:
    def test_round_trip_random_spd(self, rng):
        for d in range(1, 7):
            cov = random_spd(rng, d)
            chol = spd_cholesky(cov)
            rebuilt = chol @ chol.T
            assert np.linalg.norm(rebuilt - cov) <= 1e-10 * np.linalg.norm(cov)

    def test_jitter_rescues_near_degenerate(self, rng):
        v = rng.standard_normal(3)
        cov = np.outer(v, v)  # rank one, trace > 0
        chol = spd_cholesky(cov)
        assert np.all(np.diag(chol) > 0)

    def test_hopeless_matrix_raises(self):
        with pytest.raises(DegenerateComponentError):
            spd_cholesky(-np.eye(2))


class TestMixtureModelType:
    def test_weight_sum_enforced(self, rng):
        with pytest.raises(InvalidInputError):
            MixtureModel([0.5, 0.4], np.zeros((2, 2)), np.stack([np.eye(2)] * 2))

    def test_immutable(self, rng):
        model = random_model(rng, 2, 2)
        with pytest.raises(AttributeError):
            model.weights = np.array([1.0, 0.0])
        with pytest.raises(ValueError):
            model.means[0, 0] = 99.0

    def test_components_view(self, rng):
        model = random_model(rng, 3, 2)
        comps = model.components
        assert len(comps) == 3
        assert comps[1].weight == pytest.approx(float(model.weights[1]))
        rebuilt = MixtureModel.from_components(comps)
        np.testing.assert_allclose(rebuilt.covariances, model.covariances)


class TestModelJson:
    def test_round_trip(self, rng, tmp_path):
        model = random_model(rng, 3, 3)
        path = tmp_path / "model.json"
        save_model_json(model, path)
        again = load_model_json(path)
        np.testing.assert_allclose(again.weights, model.weights, rtol=1e-15)
        np.testing.assert_allclose(again.means, model.means, rtol=1e-15)
        np.testing.assert_allclose(again.covariances, model.covariances, rtol=1e-15)

    def test_malformed_payload(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dim": 2, "components": [{"weight": 1.0}]}))
        with pytest.raises(InvalidInputError):
            load_model_json(path)
