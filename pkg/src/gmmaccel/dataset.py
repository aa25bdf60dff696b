"""Weighted point clouds and their CSV representation.

The CSV layout is: a header row with coordinate columns named ``x0`` ..
``x{D-1}`` and an optional trailing ``weight`` column.  Missing weights
default to 1.  Loaded weights are rescaled so they sum to the number of
points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError

#: Relative tolerance on sum(weights) == n enforced at construction.
WEIGHT_SUM_RTOL = 1e-9


@dataclass(frozen=True)
class WeightedDataset:
    """N points in D dimensions, each carrying a positive weight.

    Weights act as (possibly fractional) sample multiplicities and must sum
    to N; use :meth:`from_points` to normalize arbitrary positive weights.
    Instances are immutable and safe to share between threads.
    """

    points: np.ndarray   # (N, D)
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        points = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if points.ndim != 2 or points.shape[0] < 1:
            raise InvalidInputError("points must be a non-empty (N, D) array")
        if weights.shape != (points.shape[0],):
            raise InvalidInputError("weights must be a length-N vector")
        if not np.all(np.isfinite(points)):
            raise InvalidInputError("points contain non-finite coordinates")
        if not np.all(weights > 0):
            raise InvalidInputError("all weights must be strictly positive")
        n = points.shape[0]
        if abs(float(weights.sum()) - n) > WEIGHT_SUM_RTOL * n:
            raise InvalidInputError(
                "weights must sum to the number of points; "
                "use WeightedDataset.from_points to normalize"
            )
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_points(cls, points, weights=None) -> "WeightedDataset":
        """Build a dataset, normalizing ``weights`` so they sum to N."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        n = points.shape[0]
        if weights is None:
            weights = np.ones(n)
        else:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (n,):
                raise InvalidInputError("weights must be a length-N vector")
            if not np.all(np.isfinite(weights)) or not np.all(weights > 0):
                raise InvalidInputError("all weights must be finite and positive")
            weights = weights * (n / weights.sum())
        return cls(points, weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]


def load_dataset_csv(path) -> WeightedDataset:
    """Read a dataset from CSV (``x0..x{D-1}`` columns, optional ``weight``)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    has_weight = bool(header) and header[-1] == "weight"
    coord_names = header[:-1] if has_weight else header
    expected = [f"x{i}" for i in range(len(coord_names))]
    if not coord_names or coord_names != expected:
        raise InvalidInputError(
            f"{path}: coordinate columns must be named x0..x{{D-1}}, got {header}"
        )
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")

    try:
        data = np.asarray(rows, dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric cell ({exc})") from None
    if data.shape[1] != len(header):
        raise InvalidInputError(f"{path}: ragged rows")

    if has_weight:
        return WeightedDataset.from_points(data[:, :-1], data[:, -1])
    return WeightedDataset.from_points(data)


def save_dataset_csv(data: WeightedDataset, path, include_weights: bool = True) -> None:
    """Write a dataset in the CSV layout accepted by :func:`load_dataset_csv`."""
    header = [f"x{i}" for i in range(data.dim)]
    if include_weights:
        header.append("weight")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(data.count):
            row = [f"{v:.17g}" for v in data.points[j]]
            if include_weights:
                row.append(f"{data.weights[j]:.17g}")
            writer.writerow(row)
