"""Exact gradients of the (penalized) log-likelihood and monotonicity tests.

The gradients are what the cheap first-order monotonicity test is built on:
an accelerated candidate is accepted when the directional derivative at the
current iterate, taken toward the candidate, does not fall below ``-eps``.
Evaluating that inner product reuses the component moments already produced
by the M-step, so the test costs O(K D^2) and never touches the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import WeightedDataset
from .em import Responsibilities
from .exceptions import InvalidInputError
from .model import (
    MixtureModel,
    free_parameters_per_component,
    log_likelihood,
    penalized_log_likelihood,
)


@dataclass(frozen=True)
class ScoreVector:
    """Gradient blocks with respect to weights, means, and covariances."""

    d_weights: np.ndarray  # (K,)
    d_means: np.ndarray    # (K, D)
    d_covs: np.ndarray     # (K, D, D), symmetric


def score_weights(
    resp: Responsibilities, model: MixtureModel, n: float, penalized: bool = True
) -> np.ndarray:
    """Weight gradient N_k/w_k - T/(2 w_k) - N + T K/2.

    The additive constants come from eliminating the simplex multiplier; with
    ``penalized=False`` the shrinkage terms drop and the gradient reduces to
    N_k/w_k - N.
    """
    w = model.weights
    if np.any(w <= 0.0):
        raise InvalidInputError("weight scores require strictly positive weights")
    k = model.n_components
    t = free_parameters_per_component(model.dim) if penalized else 0
    return resp.col_sums / w - 0.5 * t / w - n + 0.5 * t * k


def _stacked_precisions(model: MixtureModel) -> np.ndarray:
    """Inverse covariances computed from the stored Cholesky factors."""
    inv_l = model.inv_cholesky
    return np.matmul(inv_l.transpose(0, 2, 1), inv_l)


def _mean_cov_scores(model, nk, first, scatter):
    """Gradient blocks from sufficient statistics of one E-step.

    ``first[k] = sum_j r_jk x_j`` and ``scatter[k]`` is the responsibility-
    weighted scatter about the model's own mean ``mu_k``.
    """
    prec = _stacked_precisions(model)
    d_means = np.matmul(prec, (first - nk[:, None] * model.means)[..., None])[..., 0]
    inner = scatter - nk[:, None, None] * model.covariances
    d_covs = 0.5 * np.matmul(np.matmul(prec, inner), prec)
    d_covs = 0.5 * (d_covs + d_covs.transpose(0, 2, 1))
    return d_means, d_covs


def _suff_stats(data, resp, means):
    """First moments and scatter about ``means`` for every component."""
    r = resp.matrix
    first = r.T @ data.points
    k, d = means.shape
    scatter = np.empty((k, d, d))
    for i in range(k):
        diff = data.points - means[i]
        s = (r[:, i][:, None] * diff).T @ diff
        scatter[i] = 0.5 * (s + s.T)
    return first, scatter


def score_means(
    data: WeightedDataset, resp: Responsibilities, model: MixtureModel
) -> np.ndarray:
    """Mean gradient Sigma_k^{-1} sum_j r_jk (x_j - mu_k), one row per component."""
    first, scatter = _suff_stats(data, resp, model.means)
    d_means, _ = _mean_cov_scores(model, resp.col_sums, first, scatter)
    return d_means


def score_covariances(
    data: WeightedDataset,
    resp: Responsibilities,
    model: MixtureModel,
    mean_next: np.ndarray | None = None,
) -> np.ndarray:
    """Covariance gradient (1/2) Sigma^{-1} (C_k - N_k Sigma_k) Sigma^{-1}.

    ``C_k`` is the responsibility-weighted scatter about the current mean.
    Passing ``mean_next`` centers the scatter on those vectors instead (a
    published variant); the default keeps every block consistent with the
    same iterate, which is what the finite-difference oracle validates.
    """
    centers = model.means if mean_next is None else np.asarray(mean_next, dtype=float)
    _, scatter = _suff_stats(data, resp, centers)
    prec = _stacked_precisions(model)
    inner = scatter - resp.col_sums[:, None, None] * model.covariances
    d_covs = 0.5 * np.einsum("kab,kbc,kcd->kad", prec, inner, prec)
    return 0.5 * (d_covs + d_covs.transpose(0, 2, 1))


def score_vector(
    data: WeightedDataset,
    resp: Responsibilities,
    model: MixtureModel,
    penalized: bool = True,
) -> ScoreVector:
    """All gradient blocks at ``model`` for the responsibilities ``resp``."""
    first, scatter = _suff_stats(data, resp, model.means)
    d_means, d_covs = _mean_cov_scores(model, resp.col_sums, first, scatter)
    d_w = score_weights(resp, model, data.count, penalized)
    return ScoreVector(d_w, d_means, d_covs)


def em_step_scores(
    model_it: MixtureModel,
    model_new: MixtureModel,
    col_sums: np.ndarray,
    n: float,
    penalized: bool = True,
) -> ScoreVector:
    """Scores at ``model_it`` rebuilt from the M-step output, no data pass.

    The M-step's means and covariances are sufficient statistics of the
    E-step: ``sum r x = N_k mu_new`` and the scatter about ``mu_it`` follows
    from the parallel-axis shift.  Requires ``model_new`` to have the same
    component count as ``model_it`` (no kills this step).
    """
    nk = np.asarray(col_sums, dtype=np.float64)
    dmu = model_new.means - model_it.means
    first = nk[:, None] * model_new.means
    scatter = nk[:, None, None] * model_new.covariances + (
        nk[:, None, None] * dmu[:, :, None] * dmu[:, None, :]
    )
    d_means, d_covs = _mean_cov_scores(model_it, nk, first, scatter)
    w = model_it.weights
    k = model_it.n_components
    t = free_parameters_per_component(model_it.dim) if penalized else 0
    d_w = nk / w - 0.5 * t / w - n + 0.5 * t * k
    return ScoreVector(d_w, d_means, d_covs)


def taylor_monotonicity_test(
    score: ScoreVector,
    theta_aa: MixtureModel,
    theta_it: MixtureModel,
    eps: float,
) -> bool:
    """First-order test: <grad, theta_aa - theta_it> > -eps.

    The inner product sums the weight block, the mean blocks, and the
    Frobenius products over the symmetric covariance differences.  Cost is
    O(K D^2), independent of the dataset size.
    """
    if theta_aa.n_components != theta_it.n_components or theta_aa.dim != theta_it.dim:
        raise InvalidInputError("models must share K and D for the first-order test")
    inner = float(score.d_weights @ (theta_aa.weights - theta_it.weights))
    inner += float(np.einsum("kd,kd->", score.d_means, theta_aa.means - theta_it.means))
    inner += float(
        np.einsum("kde,kde->", score.d_covs, theta_aa.covariances - theta_it.covariances)
    )
    return inner > -eps


def exact_monotonicity_test(
    data: WeightedDataset,
    theta_aa: MixtureModel,
    theta_it: MixtureModel,
    eps: float,
    penalized: bool = True,
    objective_it: float | None = None,
) -> bool:
    """Direct objective-difference test; costs a full dataset sweep.

    A candidate whose objective cannot be evaluated (non-positive-definite
    covariance, non-finite result) is treated as rejected.
    """
    objective = penalized_log_likelihood if penalized else log_likelihood
    try:
        obj_aa = objective(data, theta_aa)
    except (InvalidInputError, np.linalg.LinAlgError):
        return False
    if not np.isfinite(obj_aa):
        return False
    if objective_it is None:
        objective_it = objective(data, theta_it)
    return obj_aa - objective_it > -eps
