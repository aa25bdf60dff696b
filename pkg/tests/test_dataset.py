"""Weighted dataset construction, normalization, and CSV round trips."""

import numpy as np
import pytest

from gmmaccel import InvalidInputError, WeightedDataset, load_dataset_csv, save_dataset_csv


class TestConstruction:
    def test_normalizes_weight_sum_to_n(self, rng):
        points = rng.standard_normal((40, 3))
        raw = rng.uniform(0.1, 9.0, size=40)
        data = WeightedDataset.from_points(points, raw)
        assert data.weights.sum() == pytest.approx(40.0, abs=1e-9 * 40)
        # relative proportions survive normalization
        np.testing.assert_allclose(data.weights / data.weights[0], raw / raw[0], rtol=1e-12)

    def test_default_unit_weights(self, rng):
        data = WeightedDataset.from_points(rng.standard_normal((7, 2)))
        np.testing.assert_allclose(data.weights, 1.0)
        assert data.dim == 2 and data.count == 7

    def test_strict_constructor_rejects_unnormalized(self, rng):
        points = rng.standard_normal((5, 2))
        with pytest.raises(InvalidInputError):
            WeightedDataset(points, np.full(5, 2.0))

    def test_rejects_bad_weights(self, rng):
        points = rng.standard_normal((5, 2))
        for bad in ([1, 1, 1, 1, 0], [1, 1, 1, 1, -2], [1, 1, 1, 1, np.nan]):
            with pytest.raises(InvalidInputError):
                WeightedDataset.from_points(points, np.array(bad, dtype=float))

    def test_rejects_non_finite_points(self):
        points = np.array([[0.0, 1.0], [np.inf, 0.0]])
        with pytest.raises(InvalidInputError):
            WeightedDataset.from_points(points)

    def test_one_dimensional_input_promoted(self):
        data = WeightedDataset.from_points(np.array([1.0, 2.0, 3.0]))
        assert data.dim == 1 and data.count == 3

    def test_arrays_read_only(self, rng):
        data = WeightedDataset.from_points(rng.standard_normal((4, 2)))
        with pytest.raises(ValueError):
            data.points[0, 0] = 5.0


class TestCsv:
    def test_round_trip_with_weights(self, rng, tmp_path):
        data = WeightedDataset.from_points(
            rng.standard_normal((12, 3)), rng.uniform(0.5, 2.0, size=12)
        )
        path = tmp_path / "data.csv"
        save_dataset_csv(data, path)
        again = load_dataset_csv(path)
        np.testing.assert_allclose(again.points, data.points, rtol=1e-15)
        np.testing.assert_allclose(again.weights, data.weights, rtol=1e-12)

    def test_round_trip_without_weights(self, rng, tmp_path):
        data = WeightedDataset.from_points(rng.standard_normal((6, 2)))
        path = tmp_path / "plain.csv"
        save_dataset_csv(data, path, include_weights=False)
        again = load_dataset_csv(path)
        np.testing.assert_allclose(again.points, data.points, rtol=1e-15)
        np.testing.assert_allclose(again.weights, 1.0)

    def test_missing_weight_column_defaults_then_normalizes(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x0,x1\n0.0,1.0\n2.0,3.0\n")
        data = load_dataset_csv(path)
        np.testing.assert_allclose(data.weights, [1.0, 1.0])

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(InvalidInputError):
            load_dataset_csv(path)

    def test_non_numeric_cell_rejected(self, tmp_path):
        path = tmp_path / "bad2.csv"
        path.write_text("x0,weight\n1.0,1.0\nfoo,1.0\n")
        with pytest.raises(InvalidInputError):
            load_dataset_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(InvalidInputError):
            load_dataset_csv(path)
