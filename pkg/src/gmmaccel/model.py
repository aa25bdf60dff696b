"""Gaussian mixture models: densities, likelihoods, and moment bookkeeping.

Every covariance is carried together with its lower-triangular Cholesky
factor; densities and quadratic forms are always evaluated through the
factor, never by inverting the covariance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import WeightedDataset
from .exceptions import DegenerateComponentError, InvalidInputError
from .instrumentation import sweeps

LN_2PI = math.log(2.0 * math.pi)

#: Relative diagonal jitter applied once when a covariance fails to factor.
CHOL_JITTER_REL = 1e-10


def spd_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``cov``, tolerating one near-degeneracy.

    A first factorization failure gets a single diagonal jitter of
    ``1e-10 * trace(cov) / D``; a second failure is a hard error.
    """
    cov = np.asarray(cov, dtype=np.float64)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[0]
    jitter = CHOL_JITTER_REL * float(np.trace(cov)) / d
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(d))
    except np.linalg.LinAlgError:
        raise DegenerateComponentError(
            "covariance is not positive-definite after jitter"
        ) from None


def stacked_cholesky(covs: np.ndarray) -> np.ndarray:
    """Factor a (K, D, D) stack in one call, falling back to the jitter path."""
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        return np.stack([spd_cholesky(c) for c in covs])


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component: weight in (0, 1], mean, SPD covariance."""

    weight: float
    mean: np.ndarray        # (D,)
    covariance: np.ndarray  # (D, D)
    chol: np.ndarray        # (D, D) lower triangular, covariance = chol @ chol.T

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class MixtureModel:
    """A convex combination of Gaussian components, stored as stacked arrays.

    Parameters
    ----------
    weights : (K,) array, summing to 1.
    means : (K, D) array.
    covariances : (K, D, D) array of SPD matrices.
    cholesky : (K, D, D) array, optional
        Lower factors of the covariances.  Computed (with the jitter
        fallback) when omitted.

    All arrays are made read-only; instances are immutable and thread-safe.
    """

    __slots__ = ("weights", "means", "covariances", "cholesky", "_half_log_det",
                 "_inv_chol")

    def __init__(self, weights, means, covariances, cholesky=None):
        weights = np.ascontiguousarray(np.asarray(weights, dtype=np.float64))
        means = np.ascontiguousarray(np.asarray(means, dtype=np.float64))
        covariances = np.ascontiguousarray(np.asarray(covariances, dtype=np.float64))
        k = weights.shape[0]
        if k < 1:
            raise InvalidInputError("a mixture needs at least one component")
        if means.ndim != 2 or means.shape[0] != k:
            raise InvalidInputError("means must have shape (K, D)")
        d = means.shape[1]
        if covariances.shape != (k, d, d):
            raise InvalidInputError("covariances must have shape (K, D, D)")
        if abs(float(weights.sum()) - 1.0) > 1e-9:
            raise InvalidInputError("component weights must sum to 1")
        if cholesky is None:
            cholesky = np.stack([spd_cholesky(covariances[i]) for i in range(k)])
        else:
            cholesky = np.ascontiguousarray(np.asarray(cholesky, dtype=np.float64))
            if cholesky.shape != (k, d, d):
                raise InvalidInputError("cholesky must have shape (K, D, D)")
        diag = np.einsum("kii->ki", cholesky)
        if np.any(diag <= 0.0):
            raise DegenerateComponentError("Cholesky factor has a non-positive diagonal")
        for arr in (weights, means, covariances, cholesky):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)
        object.__setattr__(self, "cholesky", cholesky)
        object.__setattr__(self, "_half_log_det", np.log(diag).sum(axis=1))
        object.__setattr__(self, "_inv_chol", None)

    def __setattr__(self, name, value):
        raise AttributeError("MixtureModel is immutable")

    @property
    def inv_cholesky(self) -> np.ndarray:
        """Stacked inverses of the Cholesky factors (computed once, cached)."""
        cached = object.__getattribute__(self, "_inv_chol")
        if cached is None:
            cached = np.tril(np.linalg.inv(self.cholesky))
            cached.setflags(write=False)
            object.__setattr__(self, "_inv_chol", cached)
        return cached

    @classmethod
    def _trusted(cls, weights, means, covariances, cholesky) -> "MixtureModel":
        """Construct without validation; inputs must be fresh, consistent arrays.

        Used by the fit loops, which build parameters that satisfy the
        invariants by construction; everything user-facing goes through
        ``__init__``.
        """
        self = object.__new__(cls)
        diag = np.einsum("kii->ki", cholesky)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)
        object.__setattr__(self, "cholesky", cholesky)
        object.__setattr__(self, "_half_log_det", np.log(diag).sum(axis=1))
        object.__setattr__(self, "_inv_chol", None)
        return self

    def validated(self) -> "MixtureModel":
        """Re-run the constructor checks (used on models returned to callers)."""
        return MixtureModel(self.weights, self.means, self.covariances, self.cholesky)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> tuple[GaussianComponent, ...]:
        return tuple(
            GaussianComponent(
                float(self.weights[k]), self.means[k], self.covariances[k], self.cholesky[k]
            )
            for k in range(self.n_components)
        )

    def component(self, k: int) -> GaussianComponent:
        return GaussianComponent(
            float(self.weights[k]), self.means[k], self.covariances[k], self.cholesky[k]
        )

    @classmethod
    def from_components(cls, components) -> "MixtureModel":
        comps = list(components)
        return cls(
            [c.weight for c in comps],
            [c.mean for c in comps],
            [c.covariance for c in comps],
            [c.chol for c in comps],
        )


def single_gaussian(weight, mean, covariance) -> GaussianComponent:
    """Convenience constructor computing the Cholesky factor."""
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    covariance = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
    return GaussianComponent(float(weight), mean, covariance, spd_cholesky(covariance))


# ---------------------------------------------------------------------------
# densities and likelihoods
# ---------------------------------------------------------------------------

def gaussian_log_density(x, comp: GaussianComponent) -> float:
    """Log density of one Gaussian at ``x``, evaluated via its Cholesky factor."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("input coordinates must be finite")
    if x.shape != comp.mean.shape:
        raise InvalidInputError("dimension mismatch between x and the component")
    z = solve_triangular(comp.chol, x - comp.mean, lower=True, check_finite=False)
    half_log_det = float(np.log(np.diag(comp.chol)).sum())
    d = x.shape[0]
    return -0.5 * (d * LN_2PI + float(z @ z)) - half_log_det


def log_density_matrix(points: np.ndarray, model: MixtureModel) -> np.ndarray:
    """(N, K) matrix of per-component log densities.  Counts as one sweep.

    ``points`` is assumed pre-validated (finite, matching dimension); this is
    the hot path shared by the E-step and every likelihood evaluation.
    """
    n, d = points.shape
    k = model.n_components
    out = np.empty((n, k))
    inv_l = model.inv_cholesky
    for i in range(k):
        z = (points - model.means[i]) @ inv_l[i].T
        out[:, i] = np.einsum("nd,nd->n", z, z)
    out *= -0.5
    out -= 0.5 * d * LN_2PI + model._half_log_det
    sweeps.bump()
    return out


def _log_mixture_rows(log_dens: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise log(sum_k w_k exp(log_dens)) with max-subtraction."""
    shifted = log_dens + np.log(weights)
    m = shifted.max(axis=1)
    finite = np.isfinite(m)
    out = np.full(m.shape, -np.inf)
    if np.any(finite):
        rows = shifted[finite] - m[finite, None]
        out[finite] = m[finite] + np.log(np.exp(rows).sum(axis=1))
    return out


def mixture_log_density(x, model: MixtureModel) -> float:
    """Log of the mixture density at ``x`` (log-sum-exp stabilized)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("input coordinates must be finite")
    if x.shape != (model.dim,):
        raise InvalidInputError("dimension mismatch between x and the model")
    log_dens = log_density_matrix(x[None, :], model)
    return float(_log_mixture_rows(log_dens, model.weights)[0])


def log_likelihood(data: WeightedDataset, model: MixtureModel) -> float:
    """Weighted log-likelihood sum_j zeta_j * ln f(x_j)."""
    if data.dim != model.dim:
        raise InvalidInputError("dataset and model dimensions differ")
    log_dens = log_density_matrix(data.points, model)
    rows = _log_mixture_rows(log_dens, model.weights)
    return float(data.weights @ rows)


def free_parameters_per_component(dim: int) -> int:
    """Mean plus symmetric covariance: D(D+3)/2 free parameters."""
    return dim * (dim + 3) // 2


def total_free_parameters(k: int, dim: int) -> int:
    """K components plus K weights minus the one simplex constraint."""
    return k * (free_parameters_per_component(dim) + 1) - 1


def penalty_value(k: int, dim: int, n: float, weights: np.ndarray) -> float:
    """Model-complexity penalty subtracted from the log-likelihood."""
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights <= 0.0):
        raise InvalidInputError("penalty requires strictly positive weights")
    t = free_parameters_per_component(dim)
    d_tot = total_free_parameters(k, dim)
    return -0.5 * d_tot * math.log(n) - 0.5 * t * float(np.log(weights).sum())


def penalized_log_likelihood(data: WeightedDataset, model: MixtureModel) -> float:
    """Log-likelihood minus the complexity penalty used for component killing."""
    return log_likelihood(data, model) + penalty_value(
        model.n_components, model.dim, data.count, model.weights
    )


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentSummary:
    """Zeroth/first/second raw moments of a dataset or mixture."""

    zeroth: float
    first: np.ndarray   # (D,)
    second: np.ndarray  # (D, D)


def data_moments(data: WeightedDataset) -> MomentSummary:
    """Exact weighted sums (sum zeta, sum zeta x, sum zeta x x^T)."""
    zeroth = float(data.weights.sum())
    first = data.weights @ data.points
    second = (data.weights[:, None] * data.points).T @ data.points
    second = 0.5 * (second + second.T)
    return MomentSummary(zeroth, first, second)


def mixture_moments(model: MixtureModel) -> MomentSummary:
    """Mixture raw moments sum_k w_k (1, mu_k, Sigma_k + mu_k mu_k^T)."""
    w = model.weights
    first = w @ model.means
    outer = np.einsum("kd,ke->kde", model.means, model.means)
    second = np.einsum("k,kde->de", w, model.covariances + outer)
    return MomentSummary(float(w.sum()), first, 0.5 * (second + second.T))


# ---------------------------------------------------------------------------
# JSON representation
# ---------------------------------------------------------------------------

def model_to_dict(model: MixtureModel) -> dict:
    return {
        "dim": model.dim,
        "components": [
            {
                "weight": float(model.weights[k]),
                "mean": model.means[k].tolist(),
                "covariance": model.covariances[k].tolist(),
            }
            for k in range(model.n_components)
        ],
    }


def model_from_dict(payload: dict) -> MixtureModel:
    try:
        dim = int(payload["dim"])
        comps = payload["components"]
        weights = [c["weight"] for c in comps]
        means = [c["mean"] for c in comps]
        covs = [c["covariance"] for c in comps]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed model payload: {exc}") from None
    model = MixtureModel(weights, means, covs)
    if model.dim != dim:
        raise InvalidInputError("declared dim does not match component shapes")
    return model


def save_model_json(model: MixtureModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


def load_model_json(path) -> MixtureModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
