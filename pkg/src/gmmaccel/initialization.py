"""Weighted K-means with careful seeding and gap-statistic model selection.

The initializer estimates how many clusters the data supports by comparing
the clustering objective against reference datasets drawn uniformly over a
box aligned with the principal components, then seeds the mixture from the
best of several weighted K-means runs at that estimate plus a safety margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import WeightedDataset
from .exceptions import DegenerateComponentError, InvalidInputError
from .model import MixtureModel, spd_cholesky


@dataclass(frozen=True)
class InitConfig:
    """Knobs for the gap-statistic K-means initializer."""

    k_min: int = 2
    k_max: int = 10
    k_adjust: int = 2
    n_ref_sets: int = 10
    tau: float = 1.0
    n_trials: int = 10
    ref_trials: int = 1
    lloyd_max_iters: int = 300
    reference: str = "pca-box"  # or "normal"
    seed: int = 0


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray        # (K, D)
    assignment: np.ndarray       # (N,) cluster indices
    sse: float
    cluster_weights: np.ndarray  # (K,) total weight per cluster
    sse_history: tuple[float, ...] = ()


@dataclass(frozen=True)
class GapStatReport:
    """Per-K gap values, their Monte-Carlo spreads, and the chosen counts."""

    ks: tuple[int, ...]
    gsv: tuple[float, ...]
    s_k: tuple[float, ...]
    k_opt: int
    k_init: int
    criterion_satisfied: bool


def kmeans_pp_seed(data: WeightedDataset, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick K starting centroids: weight-proportional first, then weighted
    squared-distance-proportional."""
    n = data.count
    if k < 1 or k > n:
        raise InvalidInputError(f"need 1 <= K <= N, got K={k}, N={n}")
    points = data.points
    probs = data.weights / data.weights.sum()
    first = int(rng.choice(n, p=probs))
    centroids = np.empty((k, data.dim))
    centroids[0] = points[first]
    if k == 1:
        return centroids
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        mass = data.weights * d2
        total = mass.sum()
        if total <= 0.0:
            raise InvalidInputError("fewer distinct points than requested clusters")
        idx = int(rng.choice(n, p=mass / total))
        centroids[i] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _squared_distances(points, centroids):
    # ||x||^2 - 2 x.c + ||c||^2, clipped against round-off
    d2 = (
        (points**2).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids**2).sum(axis=1)
    )
    return np.maximum(d2, 0.0)


def weighted_kmeans(
    data: WeightedDataset, seeds: np.ndarray, max_iters: int = 300
) -> KMeansResult:
    """Lloyd iterations with weighted assignments and centroid updates.

    The clustering objective never increases between iterations.  A cluster
    that empties is re-seeded at the point currently paying the largest
    weighted squared distance.
    """
    seeds = np.asarray(seeds, dtype=np.float64)
    if seeds.ndim != 2 or seeds.shape[1] != data.dim:
        raise InvalidInputError("seeds must have shape (K, D)")
    k = seeds.shape[0]
    points, weights = data.points, data.weights
    row_idx = np.arange(data.count)
    centroids = seeds.copy()
    assignment = np.full(data.count, -1)
    history = []
    d2 = _squared_distances(points, centroids)
    for _ in range(max_iters):
        new_assignment = d2.argmin(axis=1)
        contrib = weights * d2[row_idx, new_assignment]
        for _ in range(2 * k + 1):
            empty = np.flatnonzero(np.bincount(new_assignment, minlength=k) == 0)
            if empty.size == 0:
                break
            idx = int(contrib.argmax())
            new_assignment[idx] = empty[0]
            contrib[idx] = -1.0
        else:
            raise DegenerateComponentError("could not populate every cluster")
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        wsums = np.bincount(assignment, weights=weights, minlength=k)
        for j in range(points.shape[1]):
            centroids[:, j] = np.bincount(
                assignment, weights=weights * points[:, j], minlength=k
            )
        centroids /= wsums[:, None]
        d2 = _squared_distances(points, centroids)
        history.append(float((weights * d2[row_idx, assignment]).sum()))
    sse = float((weights * d2[row_idx, assignment]).sum())
    cluster_weights = np.bincount(assignment, weights=weights, minlength=k)
    return KMeansResult(centroids, assignment, sse, cluster_weights, tuple(history))


def best_of_kmeans(
    data: WeightedDataset,
    k: int,
    rng: np.random.Generator,
    n_trials: int = 10,
    max_iters: int = 300,
) -> KMeansResult:
    """Smallest-objective result over ``n_trials`` independently seeded runs."""
    best = None
    for _ in range(n_trials):
        seeds = kmeans_pp_seed(data, k, rng)
        result = weighted_kmeans(data, seeds, max_iters)
        if best is None or result.sse < best.sse:
            best = result
    return best


def _pca_box_reference(data: WeightedDataset, rng: np.random.Generator) -> np.ndarray:
    mean = data.weights @ data.points / data.count
    centered = data.points - mean
    cov = (data.weights[:, None] * centered).T @ centered / data.count
    _, vecs = np.linalg.eigh(cov)
    rotated = centered @ vecs
    lo, hi = rotated.min(axis=0), rotated.max(axis=0)
    draws = rng.uniform(lo, hi, size=(data.count, data.dim))
    return draws @ vecs.T + mean


def _normal_reference(data: WeightedDataset, rng: np.random.Generator) -> np.ndarray:
    mean = data.weights @ data.points / data.count
    centered = data.points - mean
    cov = (data.weights[:, None] * centered).T @ centered / data.count
    chol = spd_cholesky(cov)
    return mean + rng.standard_normal((data.count, data.dim)) @ chol.T


def gap_statistic(
    data: WeightedDataset,
    k_min: int = 2,
    k_max: int = 10,
    n_ref_sets: int = 10,
    tau: float = 1.0,
    rng: np.random.Generator | None = None,
    k_adjust: int = 0,
    n_trials: int = 10,
    ref_trials: int = 1,
    max_iters: int = 300,
    reference: str = "pca-box",
) -> GapStatReport:
    """Gap values mean_b[ln SSE_ref] - ln SSE_data over K in [k_min, k_max].

    The chosen count is the smallest K whose gap exceeds the next one by more
    than ``tau`` reference standard deviations; when no K qualifies, the
    report flags it and falls back to ``k_max``.  Each reference set gets
    ``ref_trials`` clustering runs (averaging over the ``n_ref_sets``
    replicates already smooths their objective), the observed data
    ``n_trials``.
    """
    if k_min < 1 or k_max < k_min:
        raise InvalidInputError("need 1 <= k_min <= k_max")
    if n_ref_sets < 2:
        raise InvalidInputError("need at least two reference sets")
    rng = np.random.default_rng(0) if rng is None else rng
    draw = {"pca-box": _pca_box_reference, "normal": _normal_reference}.get(reference)
    if draw is None:
        raise InvalidInputError(f"unknown reference kind {reference!r}")

    refs = [WeightedDataset.from_points(draw(data, rng)) for _ in range(n_ref_sets)]
    ks = list(range(k_min, k_max + 1))
    gsv = []
    s_k = []
    tiny = np.finfo(float).tiny
    for k in ks:
        data_sse = best_of_kmeans(data, k, rng, n_trials, max_iters).sse
        ref_log = np.array([
            math.log(max(best_of_kmeans(ref, k, rng, ref_trials, max_iters).sse, tiny))
            for ref in refs
        ])
        gsv.append(float(ref_log.mean()) - math.log(max(data_sse, tiny)))
        s_k.append(float(ref_log.std()) * math.sqrt(1.0 + 1.0 / n_ref_sets))

    k_opt = k_max
    satisfied = False
    for i in range(len(ks) - 1):
        if gsv[i] > gsv[i + 1] + tau * s_k[i + 1]:
            k_opt = ks[i]
            satisfied = True
            break
    return GapStatReport(tuple(ks), tuple(gsv), tuple(s_k), k_opt,
                         k_opt + k_adjust, satisfied)


def _component_floor(data: WeightedDataset) -> float:
    mean = data.weights @ data.points / data.count
    centered = data.points - mean
    total_var = float(
        (data.weights * (centered**2).sum(axis=1)).sum()
    ) / data.count
    return max(total_var / data.dim, np.finfo(float).tiny)


def model_from_clusters(data: WeightedDataset, result: KMeansResult) -> MixtureModel:
    """Mixture whose components are the clusters' weighted moments.

    Singular within-cluster covariances (e.g. single-point clusters) receive
    a diagonal floor proportional to the overall data variance.
    """
    k = result.centroids.shape[0]
    d = data.dim
    floor = 1e-6 * _component_floor(data)
    weights = result.cluster_weights / data.count
    weights = weights / weights.sum()
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    for i in range(k):
        mask = result.assignment == i
        w = data.weights[mask]
        means[i] = w @ data.points[mask] / w.sum()
        diff = data.points[mask] - means[i]
        cov = (w[:, None] * diff).T @ diff / w.sum()
        covs[i] = 0.5 * (cov + cov.T)
    chols = []
    for i in range(k):
        try:
            chols.append(spd_cholesky(covs[i]))
        except DegenerateComponentError:
            covs[i] = covs[i] + floor * np.eye(d)
            chols.append(spd_cholesky(covs[i]))
    return MixtureModel(weights, means, covs, np.stack(chols))


def kmeans_init(
    data: WeightedDataset,
    k: int,
    rng: np.random.Generator | None = None,
    n_trials: int = 10,
    max_iters: int = 300,
) -> MixtureModel:
    """Fixed-K mixture initialization from the best of several K-means runs."""
    rng = np.random.default_rng(0) if rng is None else rng
    return model_from_clusters(data, best_of_kmeans(data, k, rng, n_trials, max_iters))


def gs_kmeans_init(
    data: WeightedDataset, cfg: InitConfig = InitConfig()
) -> tuple[MixtureModel, GapStatReport]:
    """Estimate the component count, then seed the mixture at that count
    plus the configured safety margin."""
    rng = np.random.default_rng(cfg.seed)
    report = gap_statistic(
        data,
        k_min=cfg.k_min,
        k_max=cfg.k_max,
        n_ref_sets=cfg.n_ref_sets,
        tau=cfg.tau,
        rng=rng,
        k_adjust=cfg.k_adjust,
        n_trials=cfg.n_trials,
        ref_trials=cfg.ref_trials,
        max_iters=cfg.lloyd_max_iters,
        reference=cfg.reference,
    )
    k_init = min(report.k_init, data.count)
    if k_init != report.k_init:
        report = replace(report, k_init=k_init)
    model = kmeans_init(data, k_init, rng, cfg.n_trials, cfg.lloyd_max_iters)
    return model, report
