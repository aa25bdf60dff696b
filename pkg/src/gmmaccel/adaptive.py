"""Adaptive EM: penalized weight update with component annihilation.

The weight update shrinks each component by half its per-component parameter
count; components whose shrunk weight reaches zero are removed outright and
the survivors are renormalized.  A final plain EM step restores exact moment
conservation after convergence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dataset import WeightedDataset
from .em import (
    FitConfig,
    FitTrace,
    Responsibilities,
    SolutionChoice,
    _objective_change,
    _weighted_mean_cov,
    e_step_with_loglik,
    m_step_standard,
    penalized_from_loglik,
)
from .exceptions import AllComponentsKilledError
from .model import MixtureModel, free_parameters_per_component, stacked_cholesky


@dataclass(frozen=True)
class AdaptiveStepOutcome:
    """Result of one adaptive M-step.

    ``killed`` lists the component indices (into the pre-step model) removed
    this sweep; the surviving weights are renormalized to sum to 1.
    ``penalized_ll`` is the penalized objective of the iterate the step
    consumed, available when the caller supplies that iterate's
    log-likelihood (the fused E-step provides it at no extra cost).
    """

    model: MixtureModel
    killed: tuple[int, ...]
    penalized_ll: float | None


def adaptive_m_step(
    data: WeightedDataset,
    resp: Responsibilities,
    model: MixtureModel,
    loglik: float | None = None,
) -> AdaptiveStepOutcome:
    """Shrunk weight update with killing; survivors get standard mean/cov updates.

    The shrink uses the component count K as of the start of the step for
    every component, even when several die in the same sweep.
    """
    k = model.n_components
    t = free_parameters_per_component(data.dim)
    nk = resp.col_sums
    n = float(data.count)
    denom = n - 0.5 * t * k
    if denom <= 0.0:
        raise AllComponentsKilledError(
            f"too many components for the data: N - T*K/2 = {denom:g} <= 0"
        )
    shrunk = np.maximum((nk - 0.5 * t) / denom, 0.0)
    survivors = np.flatnonzero(shrunk > 0.0)
    killed = tuple(int(i) for i in np.flatnonzero(shrunk == 0.0))
    if survivors.size == 0:
        raise AllComponentsKilledError(
            "the adaptive weight update killed every component at once"
        )

    d = data.dim
    means = (resp.matrix[:, survivors].T @ data.points) / nk[survivors, None]
    covs = np.empty((survivors.size, d, d))
    for out_i, i in enumerate(survivors):
        _, covs[out_i] = _weighted_mean_cov(
            data.points, resp.matrix[:, i], nk[i], means[out_i]
        )
    weights = shrunk[survivors]
    weights = weights / weights.sum()
    new_model = MixtureModel._trusted(weights, means, covs, stacked_cholesky(covs))

    pll = None
    if loglik is not None:
        pll = penalized_from_loglik(loglik, model, n)
    return AdaptiveStepOutcome(new_model, killed, pll)


def final_conservative_step(data: WeightedDataset, model: MixtureModel) -> MixtureModel:
    """One standard E+M step; the output matches the data moments exactly."""
    resp, _ = e_step_with_loglik(data, model)
    return m_step_standard(data, resp)


def fit_adaptive_em(
    data: WeightedDataset, init: MixtureModel, cfg: FitConfig = FitConfig()
) -> tuple[MixtureModel, FitTrace]:
    """Adaptive EM loop monitoring the penalized objective.

    All components are updated simultaneously each sweep.  After convergence
    one plain EM step is appended (trace choice ``FINAL_CONSERVATIVE_EM``) so
    the returned model conserves the data moments.
    """
    trace = FitTrace(objective_kind="penalized")
    start = time.perf_counter()
    model = init
    resp, loglik = e_step_with_loglik(data, model)
    pll = penalized_from_loglik(loglik, model, data.count)
    trace.append(0, pll, model.n_components, SolutionChoice.EM, 0,
                 time.perf_counter() - start)
    for it in range(1, cfg.max_iters + 1):
        outcome = adaptive_m_step(data, resp, model, loglik)
        model = outcome.model
        resp, loglik = e_step_with_loglik(data, model)
        new_pll = penalized_from_loglik(loglik, model, data.count)
        trace.append(it, new_pll, model.n_components, SolutionChoice.EM,
                     len(outcome.killed), time.perf_counter() - start)
        if _objective_change(new_pll, pll) < cfg.tol:
            trace.converged = True
            pll = new_pll
            break
        pll = new_pll

    model = final_conservative_step(data, model)
    _, loglik = e_step_with_loglik(data, model)
    trace.append(len(trace.records), penalized_from_loglik(loglik, model, data.count),
                 model.n_components, SolutionChoice.FINAL_CONSERVATIVE_EM, 0,
                 time.perf_counter() - start)
    trace.elapsed_s = time.perf_counter() - start
    return model.validated(), trace
