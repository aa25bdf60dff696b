"""Three-component benchmark mixtures with controlled overlap.

The presets share weights (0.3, 0.3, 0.4) and covariances (I, 1.5 I,
0.75 I) in three dimensions; only the mean separation changes:
``vws`` puts the outer means at (+-3, +-3, +-3), ``ps`` at +-2, and
``vps`` at +-1, ranging from visually obvious clusters to heavily
overlapping ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import WeightedDataset
from .exceptions import InvalidInputError
from .model import MixtureModel

PRESET_SEPARATION = {"vws": 3.0, "ps": 2.0, "vps": 1.0}
PRESET_NAMES = tuple(PRESET_SEPARATION)

_WEIGHTS = (0.3, 0.3, 0.4)
_COV_SCALES = (1.0, 1.5, 0.75)
_DIM = 3


@dataclass(frozen=True)
class SyntheticSpec:
    """What to generate: a named preset or explicit custom parameters."""

    preset: str = "vws"
    n: int = 1000
    seed: int = 0
    custom: MixtureModel | None = None

    def exact_model(self) -> MixtureModel:
        """The generating mixture (useful as an oracle in tests)."""
        if self.preset == "custom":
            if self.custom is None:
                raise InvalidInputError("custom preset requires a model")
            return self.custom
        sep = PRESET_SEPARATION.get(self.preset)
        if sep is None:
            raise InvalidInputError(f"unknown preset {self.preset!r}")
        means = np.array([[-sep] * _DIM, [0.0] * _DIM, [sep] * _DIM])
        covs = np.stack([scale * np.eye(_DIM) for scale in _COV_SCALES])
        return MixtureModel(np.array(_WEIGHTS), means, covs)


def generate_synthetic(spec: SyntheticSpec) -> WeightedDataset:
    """Draw ``spec.n`` unit-weight points from the preset mixture.

    Bit-identical output for identical specs: component indices are drawn
    first, then one standard normal block gets colored per point.
    """
    if spec.n < 1:
        raise InvalidInputError("need at least one sample")
    model = spec.exact_model()
    rng = np.random.default_rng(spec.seed)
    idx = rng.choice(model.n_components, size=spec.n, p=model.weights)
    z = rng.standard_normal((spec.n, model.dim))
    points = model.means[idx] + np.einsum("nij,nj->ni", model.cholesky[idx], z)
    return WeightedDataset.from_points(points)
