"""Standard EM for Gaussian mixtures: E-step, M-step, and the fit loop.

Also owns the configuration and per-iteration trace types shared by every
fitter in the package.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import WeightedDataset
from .exceptions import DegenerateComponentError, InvalidInputError
from .model import (
    MixtureModel,
    log_density_matrix,
    penalty_value,
    stacked_cholesky,
)

#: Row log-mixture values below this are clamped so a fully-underflowed point
#: cannot poison the likelihood with -inf (it still drags it far down).
_LOG_FLOOR = math.log(np.finfo(np.float64).tiny)


class RestartMode(enum.Enum):
    """What an acceleration restart keeps of the residual history."""

    RESET_ALL = "reset"
    KEEP_LAST = "keeplast"


class SolutionChoice(enum.Enum):
    """How the iterate recorded in a trace row was produced."""

    EM = "em"
    AA = "aa"
    EM_FALLBACK_POSITIVITY = "em-positivity"
    EM_FALLBACK_MONOTONICITY = "em-monotonicity"
    FINAL_CONSERVATIVE_EM = "final-em"


@dataclass(frozen=True)
class FitConfig:
    """Shared knobs for all fitters.

    ``m_aa = None`` resolves at fit time to 5 when the starting K is at most
    3 and to 10 otherwise.  ``eps_mono`` is meaningful in [0.001, 0.01];
    larger values loosen the monotonicity guard and are accepted but not
    recommended.
    """

    tol: float = 1e-10
    max_iters: int = 50_000
    seed: int = 0
    eps_mono: float = 0.01
    m_aa: int | None = None
    restart_mode: RestartMode = RestartMode.RESET_ALL
    use_taylor_test: bool = True
    thread_count: int = 1
    # acceleration damping schedule (see anderson.AndersonState)
    aa_alpha_base: float = 1.2
    aa_damping_min: int = 1
    aa_damping_max: int = 15
    # diagnostics: pin lambda instead of running the schedule; tally how often
    # the cheap monotonicity test agrees with the exact one (costs one extra
    # sweep per accelerated iteration).
    aa_force_lambda: float | None = None
    record_test_agreement: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be at least 1")
        if self.m_aa is not None and self.m_aa < 1:
            raise InvalidInputError("m_aa must be at least 1")
        if self.eps_mono <= 0:
            raise InvalidInputError("eps_mono must be positive")

    def resolve_m_aa(self, k_init: int) -> int:
        if self.m_aa is not None:
            return self.m_aa
        return 5 if k_init <= 3 else 10

    def with_overrides(self, **kwargs) -> "FitConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    active_k: int
    choice: SolutionChoice
    kills: int
    elapsed_s: float


@dataclass
class FitTrace:
    """Per-iteration history of one fit.

    Row 0 records the objective of the initial model; subsequent rows record
    the state after each update.  ``iterations`` counts main-loop updates and
    excludes the final conservative step, so reduction factors compare loops
    of the same kind.
    """

    objective_kind: str  # "loglik" or "penalized"
    records: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    elapsed_s: float = 0.0

    def append(self, iteration, objective, active_k, choice, kills, elapsed_s):
        self.records.append(
            TraceRecord(iteration, float(objective), active_k, choice, kills, elapsed_s)
        )

    @property
    def iterations(self) -> int:
        n = len(self.records) - 1
        if self.records and self.records[-1].choice is SolutionChoice.FINAL_CONSERVATIVE_EM:
            n -= 1
        return max(n, 0)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective

    @property
    def final_k(self) -> int:
        return self.records[-1].active_k


@dataclass(frozen=True)
class Responsibilities:
    """Soft assignment matrix r[j, k] with row sums equal to the weights."""

    matrix: np.ndarray    # (N, K)
    col_sums: np.ndarray  # (K,) totals per component


def e_step_with_loglik(
    data: WeightedDataset, model: MixtureModel
) -> tuple[Responsibilities, float]:
    """One E-step, also returning the log-likelihood of ``model``.

    The responsibilities and the likelihood share the same density sweep;
    all fit loops use this fused form.  Rows where every component density
    underflows to zero are assigned responsibilities proportional to the
    component weights so the row-sum identity survives.
    """
    if data.dim != model.dim:
        raise InvalidInputError("dataset and model dimensions differ")
    log_dens = log_density_matrix(data.points, model)
    shifted = log_dens + np.log(model.weights)
    m = shifted.max(axis=1)
    dead = ~np.isfinite(m)
    if np.any(dead):
        safe = np.where(dead, 0.0, m)
        resp = np.exp(shifted - safe[:, None])
        resp[dead] = model.weights
        row_mix = safe + np.log(resp.sum(axis=1))
        resp /= resp.sum(axis=1, keepdims=True)
        row_mix[dead] = _LOG_FLOOR
    else:
        resp = np.exp(shifted - m[:, None])
        totals = resp.sum(axis=1)
        row_mix = m + np.log(totals)
        resp /= totals[:, None]
    resp *= data.weights[:, None]
    loglik = float(data.weights @ row_mix)
    return Responsibilities(resp, resp.sum(axis=0)), loglik


def e_step(data: WeightedDataset, model: MixtureModel) -> Responsibilities:
    """Responsibilities r[j, k] = zeta_j w_k G_k(x_j) / sum_l w_l G_l(x_j)."""
    resp, _ = e_step_with_loglik(data, model)
    return resp


def _weighted_mean_cov(points, resp_col, nk, mean=None):
    """Weighted mean and (centered, two-pass) covariance for one component."""
    if mean is None:
        mean = (resp_col @ points) / nk
    diff = points - mean
    cov = (resp_col[:, None] * diff).T @ diff / nk
    return mean, 0.5 * (cov + cov.T)


def m_step_standard(data: WeightedDataset, resp: Responsibilities) -> MixtureModel:
    """Maximization step: weighted means/covariances and weights N_k / N."""
    nk = resp.col_sums
    if np.any(nk <= 0.0):
        raise DegenerateComponentError("a component received zero responsibility mass")
    k = nk.shape[0]
    covs = np.empty((k, data.dim, data.dim))
    means = (resp.matrix.T @ data.points) / nk[:, None]
    for i in range(k):
        _, covs[i] = _weighted_mean_cov(data.points, resp.matrix[:, i], nk[i], means[i])
    weights = nk / nk.sum()
    return MixtureModel._trusted(weights, means, covs, stacked_cholesky(covs))


def _objective_change(new: float, old: float) -> float:
    """Absolute objective change used by every convergence check.

    An absolute criterion keeps slow merge plateaus (changes of ~1e-6 on
    objectives of ~1e4) from reading as converged, which matters for
    component annihilation at inflated starting counts.
    """
    return abs(new - old)


def fit_em(
    data: WeightedDataset, init: MixtureModel, cfg: FitConfig = FitConfig()
) -> tuple[MixtureModel, FitTrace]:
    """Plain EM at fixed K, stopping on relative log-likelihood change.

    The recorded log-likelihood sequence is non-decreasing (up to round-off);
    each iteration costs one density sweep.
    """
    trace = FitTrace(objective_kind="loglik")
    start = time.perf_counter()
    model = init
    resp, loglik = e_step_with_loglik(data, model)
    trace.append(0, loglik, model.n_components, SolutionChoice.EM, 0,
                 time.perf_counter() - start)
    for it in range(1, cfg.max_iters + 1):
        model = m_step_standard(data, resp)
        resp, new_loglik = e_step_with_loglik(data, model)
        trace.append(it, new_loglik, model.n_components, SolutionChoice.EM, 0,
                     time.perf_counter() - start)
        if _objective_change(new_loglik, loglik) < cfg.tol:
            trace.converged = True
            loglik = new_loglik
            break
        loglik = new_loglik
    trace.elapsed_s = time.perf_counter() - start
    return model.validated(), trace


def penalized_from_loglik(loglik: float, model: MixtureModel, n: float) -> float:
    """Penalized objective reusing a log-likelihood already in hand."""
    return loglik + penalty_value(model.n_components, model.dim, n, model.weights)
