"""Restarted, regularized Anderson extrapolation over mixture parameters.

Mixture parameters are flattened to a vector laid out as all weights, then
all means, then the column-stacked lower triangles of the covariance
Cholesky factors.  Extrapolating the factors (rather than the covariances)
keeps every reconstructed covariance positive-definite as long as no factor
diagonal passes exactly through zero.

Also hosts the unguarded accelerated fit, kept as a demonstrator of why the
guards in :mod:`gmmaccel.accelerated` are necessary.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .adaptive import adaptive_m_step
from .dataset import WeightedDataset
from .em import (
    FitConfig,
    FitTrace,
    RestartMode,
    SolutionChoice,
    _objective_change,
    e_step_with_loglik,
    m_step_standard,
    penalized_from_loglik,
)
from .exceptions import (
    AllComponentsKilledError,
    DegenerateComponentError,
    InvalidInputError,
    NumericalFailureError,
)
from .model import MixtureModel

#: Floor applied to mixture weights in the unguarded fit so densities stay
#: evaluable; the guarded fit rolls back to EM instead.
NAIVE_WEIGHT_FLOOR = 1e-12


@lru_cache(maxsize=None)
def _vech_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the lower triangle, stacked column by column."""
    rows = np.concatenate([np.arange(j, d) for j in range(d)])
    cols = np.concatenate([np.full(d - j, j) for j in range(d)])
    return rows, cols


@lru_cache(maxsize=None)
def diag_positions(k: int, d: int) -> np.ndarray:
    """Indices of the factor diagonal entries within a flat parameter vector."""
    rows, cols = _vech_indices(d)
    within = np.flatnonzero(rows == cols)
    t2 = d * (d + 1) // 2
    offset = k + k * d
    return (offset + np.arange(k)[:, None] * t2 + within[None, :]).ravel()


def vector_length(k: int, dim: int) -> int:
    return k * (1 + dim + dim * (dim + 1) // 2)


@dataclass(frozen=True)
class ParameterVector:
    """Flattened mixture parameters: (weights, means, vech of Cholesky factors)."""

    flat: np.ndarray
    k: int
    dim: int


def flatten(model: MixtureModel) -> ParameterVector:
    """Flatten a model, orienting each factor column so its diagonal is positive."""
    k, d = model.n_components, model.dim
    rows, cols = _vech_indices(d)
    chol = model.cholesky
    diag = np.einsum("kii->ki", chol)
    if np.any(diag < 0.0):
        chol = chol * np.where(diag < 0.0, -1.0, 1.0)[:, None, :]
    flat = np.empty(vector_length(k, d))
    flat[:k] = model.weights
    flat[k : k + k * d] = model.means.ravel()
    flat[k + k * d :] = chol[:, rows, cols].ravel()
    return ParameterVector(flat, k, d)


def unflatten(vec, k: int | None = None, dim: int | None = None) -> MixtureModel:
    """Rebuild a model from a flat vector; weights are renormalized.

    The factor columns keep the positive-diagonal convention, so negated
    triangle entries reconstruct the same covariance.  An exactly-zero factor
    diagonal is a degenerate covariance and raises.
    """
    if isinstance(vec, ParameterVector):
        flat, k, dim = vec.flat, vec.k, vec.dim
    else:
        flat = np.asarray(vec, dtype=np.float64)
        if k is None or dim is None:
            raise InvalidInputError("k and dim are required for a raw vector")
    if flat.shape != (vector_length(k, dim),):
        raise InvalidInputError("flat vector length does not match (K, D)")
    weights = flat[:k].copy()
    total = weights.sum()
    if total <= 0.0:
        raise DegenerateComponentError("flattened weights have non-positive total")
    weights /= total
    means = flat[k : k + k * dim].reshape(k, dim).copy()
    rows, cols = _vech_indices(dim)
    chol = np.zeros((k, dim, dim))
    chol[:, rows, cols] = flat[k + k * dim :].reshape(k, -1)
    diag = np.einsum("kii->ki", chol)
    if np.any(diag == 0.0):
        raise DegenerateComponentError("zero diagonal in a reconstructed factor")
    if np.any(diag < 0.0):
        chol = chol * np.where(diag < 0.0, -1.0, 1.0)[:, None, :]
    covs = chol @ chol.transpose(0, 2, 1)
    return MixtureModel._trusted(weights, means, covs, chol)


# ---------------------------------------------------------------------------
# history, least-squares solve, damping schedule
# ---------------------------------------------------------------------------

class AAEvent(enum.Enum):
    ACCEPTED_AA = "accepted"
    FELL_BACK_TO_EM = "fell-back"
    RESTARTED = "restarted"


class AndersonState:
    """Residual history plus the adaptive Tikhonov damping schedule.

    Owns up to ``m_aa + 1`` pairs of (residual, fixed-point image); the
    effective extrapolation depth is one less than the stored count.  The
    damping exponent rises by one on every accepted extrapolation and falls
    by one on every fallback, clamped to ``[damping_min, damping_max]``; it
    maps to the fraction ``delta = 1 / (1 + alpha_base**(damping_max - s))``
    of the unregularized coefficient norm that the solve is allowed to keep.
    Single-owner mutable: one fit drives one state.
    """

    def __init__(
        self,
        m_aa: int,
        restart_mode: RestartMode = RestartMode.RESET_ALL,
        alpha_base: float = 2.0,
        damping_min: int = 1,
        damping_max: int = 15,
        force_lambda: float | None = None,
    ):
        if m_aa < 1:
            raise InvalidInputError("m_aa must be at least 1")
        self.m_aa = m_aa
        self.restart_mode = restart_mode
        self.alpha_base = alpha_base
        self.damping_min = damping_min
        self.damping_max = damping_max
        self.force_lambda = force_lambda
        self.residuals: list[np.ndarray] = []
        self.images: list[np.ndarray] = []
        # residual/image differences, maintained incrementally on push
        self._dres: list[np.ndarray] = []
        self._dimg: list[np.ndarray] = []
        self.damping_exponent = damping_min
        self.lambda_ = 0.0

    @property
    def m(self) -> int:
        """Number of usable residual differences."""
        return max(len(self.residuals) - 1, 0)

    @property
    def delta(self) -> float:
        return 1.0 / (1.0 + self.alpha_base ** (self.damping_max - self.damping_exponent))

    def push(self, residual: np.ndarray, image: np.ndarray) -> None:
        if self.residuals:
            self._dres.append(residual - self.residuals[-1])
            self._dimg.append(image - self.images[-1])
        self.residuals.append(residual)
        self.images.append(image)
        if len(self.residuals) > self.m_aa + 1:
            del self.residuals[0]
            del self.images[0]
            del self._dres[0]
            del self._dimg[0]

    def clear(self) -> None:
        """Drop the whole history (required when the component count changes)."""
        self.residuals.clear()
        self.images.clear()
        self._dres.clear()
        self._dimg.clear()

    def reset_damping(self) -> None:
        self.damping_exponent = self.damping_min

    def _system(self):
        df = np.stack(self._dres, axis=1)  # (dim, m), oldest first
        return df.T @ df, df.T @ self.residuals[-1]

    def solve_damped(self) -> np.ndarray:
        """Solve for the extrapolation coefficients at the scheduled damping."""
        a_mat, b = self._system()
        if self.force_lambda is not None:
            self.lambda_ = float(self.force_lambda)
            return _tikhonov_solve(a_mat, b, self.lambda_)
        gamma, lam = _damped_solve(a_mat, b, self.delta)
        self.lambda_ = lam
        return gamma


def solve_regularized_ls(state: AndersonState, lam: float | None = None) -> np.ndarray:
    """Plain Tikhonov solve (F^T F + lam I) gamma = F^T f on the current history.

    With ``lam`` omitted the state's current regularization is used.  A
    singular unregularized system is retried once with
    ``lam = 1e-12 * trace(F^T F) / m``.
    """
    if state.m < 1:
        raise InvalidInputError("need at least two residuals to extrapolate")
    a_mat, b = state._system()
    if lam is None:
        lam = state.lambda_
    return _tikhonov_solve(a_mat, b, lam)


def _tikhonov_solve(a_mat: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    m = a_mat.shape[0]
    try:
        gamma = np.linalg.solve(a_mat + lam * np.eye(m), b)
        if np.all(np.isfinite(gamma)):
            return gamma
    except np.linalg.LinAlgError:
        pass
    retry = 1e-12 * float(np.trace(a_mat)) / m
    if retry <= 0.0:
        return np.zeros(m)
    return np.linalg.solve(a_mat + (lam + retry) * np.eye(m), b)


def _damped_solve(a_mat: np.ndarray, b: np.ndarray, delta: float):
    """Coefficients whose squared norm is ``delta`` times the unregularized one.

    Works in the eigenbasis of F^T F, where the squared norm is
    ``sum c_i^2 / (e_i + lam)^2``: a scalar secular equation in ``lam``,
    solved with a bracketed Newton iteration on ``1/norm``.
    """
    m = a_mat.shape[0]
    if m == 1:
        e = max(float(a_mat[0, 0]), 0.0)
        eigvals = np.array([e])
        eigvecs = np.eye(1)
        c = np.asarray(b, dtype=np.float64)
    elif m == 2:
        a00, a01, a11 = float(a_mat[0, 0]), float(a_mat[0, 1]), float(a_mat[1, 1])
        half_tr = 0.5 * (a00 + a11)
        disc = math.sqrt(max(0.25 * (a00 - a11) ** 2 + a01 * a01, 0.0))
        eigvals = np.array([max(half_tr - disc, 0.0), max(half_tr + disc, 0.0)])
        v0 = (a01, eigvals[0] - a00) if abs(a01) > 1e-300 else (1.0, 0.0)
        norm = math.hypot(*v0)
        v0 = (v0[0] / norm, v0[1] / norm)
        eigvecs = np.array([[v0[0], -v0[1]], [v0[1], v0[0]]])
        c = eigvecs.T @ b
    else:
        eigvals, eigvecs = np.linalg.eigh(a_mat)
        eigvals = np.maximum(eigvals, 0.0)
        c = eigvecs.T @ b
    e_list = eigvals.tolist()
    c2_list = (c * c).tolist()

    # retry floor keeps the unregularized norm finite on singular systems
    total = sum(e_list)
    floor = 1e-12 * total / m if total > 0.0 else np.finfo(float).tiny

    def norm_sq_and_slope(lam):
        n2 = 0.0
        n3 = 0.0
        for e, c2 in zip(e_list, c2_list):
            d = e + lam
            if d <= 0.0:
                d = floor
            r = c2 / (d * d)
            n2 += r
            n3 += r / d
        return n2, n3

    base, _ = norm_sq_and_slope(0.0)
    if base == 0.0:
        return np.zeros(m), 0.0
    if not math.isfinite(base):
        base, _ = norm_sq_and_slope(floor)
        if base == 0.0 or not math.isfinite(base):
            return np.zeros(m), floor
    if delta >= 1.0:
        return eigvecs @ (c / np.maximum(eigvals, floor)), 0.0

    # Newton on phi(lam) = 1/sqrt(n2) - 1/sqrt(target), increasing and
    # concave-safe from the left; bisection bracket guards each step.
    target = delta * base
    inv_target = 1.0 / math.sqrt(target)
    lo = 0.0
    hi = max(float(eigvals[-1]), 1.0)
    n2_hi, _ = norm_sq_and_slope(hi)
    for _ in range(200):
        if n2_hi <= target:
            break
        hi *= 10.0
        n2_hi, _ = norm_sq_and_slope(hi)
    lam = min(max(floor, lo), hi)
    for _ in range(60):
        n2, n3 = norm_sq_and_slope(lam)
        if n2 > target:
            lo = lam
        else:
            hi = lam
        phi = 1.0 / math.sqrt(n2) - inv_target
        if abs(n2 - target) <= 1e-6 * target:
            break
        dphi = n3 / (n2 * math.sqrt(n2))
        if dphi > 0.0:
            step = lam - phi / dphi
            lam = step if lo < step < hi else 0.5 * (lo + hi)
        else:
            lam = 0.5 * (lo + hi)
    denom = eigvals + lam
    np.maximum(denom, floor, out=denom)
    return eigvecs @ (c / denom), lam


def gamma_to_alpha(gamma: np.ndarray) -> np.ndarray:
    """Map difference-basis coefficients to the convex-combination basis.

    The result always sums to 1 exactly (telescoping).
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    m = gamma.shape[0]
    alpha = np.empty(m + 1)
    alpha[0] = gamma[0]
    alpha[1:m] = gamma[1:] - gamma[:-1]
    alpha[m] = 1.0 - gamma[m - 1]
    return alpha


def aa_iterate(state: AndersonState, gamma: np.ndarray) -> np.ndarray:
    """Extrapolated iterate G(theta) - sum_i gamma_i [G_{i+1} - G_i] (flat)."""
    dg = np.stack(state._dimg, axis=1)  # (dim, m), oldest first
    return state.images[-1] - dg @ gamma


def lambda_schedule_update(state: AndersonState, event: AAEvent) -> AndersonState:
    """Advance the damping exponent after an iteration outcome.

    Acceptance relaxes the damping by one notch, a fallback tightens it by
    one; a periodic restart leaves the exponent alone (only a component kill
    resets it, which the driver does explicitly).
    """
    if event is AAEvent.ACCEPTED_AA:
        state.damping_exponent = min(state.damping_exponent + 1, state.damping_max)
    elif event is AAEvent.FELL_BACK_TO_EM:
        state.damping_exponent = max(state.damping_exponent - 1, state.damping_min)
    return state


def restart(state: AndersonState) -> AndersonState:
    """Periodic restart: drop the history, or keep only its newest entry."""
    if state.restart_mode is RestartMode.KEEP_LAST and state.residuals:
        state.residuals[:] = state.residuals[-1:]
        state.images[:] = state.images[-1:]
        state._dres.clear()
        state._dimg.clear()
    else:
        state.clear()
    return state


# ---------------------------------------------------------------------------
# the unguarded accelerated fit
# ---------------------------------------------------------------------------

def fit_naive_aa_em(
    data: WeightedDataset,
    init: MixtureModel,
    cfg: FitConfig = FitConfig(),
    adaptive: bool = True,
) -> tuple[MixtureModel, FitTrace]:
    """Anderson extrapolation applied directly to (adaptive) EM, no guards.

    No monotonicity control, no positivity rollback: extrapolated weights are
    merely clamped to a tiny floor and renormalized so densities remain
    evaluable.  With more starting components than the data supports this
    routine converges to visibly worse optima than its non-accelerated
    counterpart, which is exactly what it exists to demonstrate.  An iterate
    that cannot be evaluated at all aborts the run with
    :class:`NumericalFailureError` (carrying the partial trace).
    """
    kind = "penalized" if adaptive else "loglik"
    trace = FitTrace(objective_kind=kind)
    start = time.perf_counter()
    m_aa = cfg.resolve_m_aa(init.n_components)
    state = AndersonState(m_aa, RestartMode.RESET_ALL, force_lambda=0.0)

    def objective(loglik, model):
        if adaptive:
            return penalized_from_loglik(loglik, model, data.count)
        return loglik

    model = init
    try:
        resp, loglik = e_step_with_loglik(data, model)
        obj = objective(loglik, model)
        trace.append(0, obj, model.n_components, SolutionChoice.EM, 0,
                     time.perf_counter() - start)
        for it in range(1, cfg.max_iters + 1):
            if adaptive:
                outcome = adaptive_m_step(data, resp, model, loglik)
                em_model, kills = outcome.model, len(outcome.killed)
            else:
                em_model, kills = m_step_standard(data, resp), 0
            if kills:
                # the parameter dimension changed; past residuals are unusable
                state.clear()
                next_model = em_model
            else:
                theta_flat = flatten(model).flat
                g_flat = flatten(em_model).flat
                state.push(g_flat - theta_flat, g_flat)
                if state.m >= 1:
                    gamma = _tikhonov_solve(*state._system(), 0.0)
                    candidate = aa_iterate(state, gamma)
                    k_cur = em_model.n_components
                    np.clip(candidate[:k_cur], NAIVE_WEIGHT_FLOOR, None,
                            out=candidate[:k_cur])
                    next_model = unflatten(candidate, k_cur, data.dim)
                else:
                    next_model = em_model
            model = next_model
            resp, loglik = e_step_with_loglik(data, model)
            new_obj = objective(loglik, model)
            if not np.isfinite(new_obj):
                raise NumericalFailureError(
                    "objective became non-finite during unguarded acceleration",
                    trace=trace,
                )
            trace.append(it, new_obj, model.n_components, SolutionChoice.AA if state.m
                         else SolutionChoice.EM, kills, time.perf_counter() - start)
            if _objective_change(new_obj, obj) < cfg.tol:
                trace.converged = True
                obj = new_obj
                break
            obj = new_obj
    except (DegenerateComponentError, AllComponentsKilledError, np.linalg.LinAlgError) as exc:
        trace.elapsed_s = time.perf_counter() - start
        raise NumericalFailureError(
            f"unguarded accelerated run aborted: {exc}", trace=trace
        ) from exc
    trace.elapsed_s = time.perf_counter() - start
    return model.validated(), trace
