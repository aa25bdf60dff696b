"""Scikit-learn style estimator wrapping the fitters in this package.

``AdaptiveGaussianMixture`` follows the usual fit/predict/score_samples
conventions (plus ``sample_weight`` support), so it drops into sklearn
pipelines, grid searches, and ``clone``.  With ``n_components="auto"`` the
component count is estimated by the gap-statistic K-means initializer and
then refined by the adaptive solver, which can still remove components.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .accelerated import fit_accelerated_em
from .adaptive import fit_adaptive_em
from .anderson import fit_naive_aa_em
from .dataset import WeightedDataset
from .em import FitConfig, RestartMode, fit_em
from .exceptions import InvalidInputError
from .initialization import InitConfig, gs_kmeans_init, kmeans_init
from .line_search import fit_els_em
from .model import MixtureModel, log_density_matrix

_SOLVERS = ("aamem", "aem", "em", "els", "naive-aa")
_FIXED_K_SOLVERS = ("em", "els")


class AdaptiveGaussianMixture(DensityMixin, BaseEstimator):
    """Gaussian mixture estimation with optional component-count adaptivity.

    Parameters
    ----------
    n_components : int or "auto", default="auto"
        Starting component count.  "auto" estimates it with the
        gap-statistic K-means initializer (plus ``k_adjust``); adaptive
        solvers may still remove components while fitting.
    solver : {"aamem", "aem", "em", "els", "naive-aa"}, default="aamem"
        "aamem" is the guarded accelerated adaptive solver; "aem" its
        non-accelerated counterpart; "em" and "els" fix the component count;
        "naive-aa" is the unguarded accelerator (a demonstrator, not a
        recommendation).
    tol : float, default=1e-10
        Relative objective change that stops the iteration.
    max_iter : int, default=50000
    eps_mono : float, default=0.01
        Allowed objective decrease per accelerated step.
    m_aa : int or None, default=None
        Residual history depth; None resolves from the starting K.
    restart : {"reset", "keeplast"}, default="reset"
    use_taylor_test : bool, default=True
        Use the O(K D^2) first-order monotonicity test instead of an extra
        objective evaluation per candidate.
    k_min, k_max, k_adjust, n_ref_sets, tau : gap-statistic controls.
    n_init : int, default=10
        K-means restarts.
    random_state : int, RandomState or None, default=None

    Attributes
    ----------
    weights_, means_, covariances_ : fitted mixture parameters.
    n_components_ : final component count.
    converged_ : bool
    n_iter_ : iterations of the main loop.
    lower_bound_ : final objective value (penalized for adaptive solvers).
    trace_ : per-iteration fit history.
    gap_report_ : component-count report (only for ``n_components="auto"``).
    """

    def __init__(
        self,
        n_components="auto",
        solver="aamem",
        tol=1e-10,
        max_iter=50_000,
        eps_mono=0.01,
        m_aa=None,
        restart="reset",
        use_taylor_test=True,
        k_min=2,
        k_max=10,
        k_adjust=2,
        n_ref_sets=10,
        tau=1.0,
        n_init=10,
        random_state=None,
    ):
        self.n_components = n_components
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.eps_mono = eps_mono
        self.m_aa = m_aa
        self.restart = restart
        self.use_taylor_test = use_taylor_test
        self.k_min = k_min
        self.k_max = k_max
        self.k_adjust = k_adjust
        self.n_ref_sets = n_ref_sets
        self.tau = tau
        self.n_init = n_init
        self.random_state = random_state

    def _validate_inputs(self, X, sample_weight):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if sample_weight is not None:
            sample_weight = check_array(
                sample_weight, ensure_2d=False, dtype=np.float64
            )
            if sample_weight.shape != (X.shape[0],):
                raise InvalidInputError("sample_weight must have one entry per row")
        return WeightedDataset.from_points(X, sample_weight)

    def fit(self, X, y=None, sample_weight=None):
        """Fit the mixture; ``sample_weight`` scales each point's influence."""
        if self.solver not in _SOLVERS:
            raise InvalidInputError(f"solver must be one of {_SOLVERS}")
        data = self._validate_inputs(X, sample_weight)
        rs = check_random_state(self.random_state)
        seed = int(rs.randint(np.iinfo(np.int32).max))
        cfg = FitConfig(
            tol=self.tol,
            max_iters=self.max_iter,
            seed=seed,
            eps_mono=self.eps_mono,
            m_aa=self.m_aa,
            restart_mode=RestartMode(self.restart),
            use_taylor_test=self.use_taylor_test,
        )

        self.gap_report_ = None
        rng = np.random.default_rng(seed)
        if self.n_components == "auto":
            if self.solver in _FIXED_K_SOLVERS:
                raise InvalidInputError(
                    f"solver {self.solver!r} needs an integer n_components"
                )
            init, self.gap_report_ = gs_kmeans_init(
                data,
                InitConfig(
                    k_min=self.k_min,
                    k_max=self.k_max,
                    k_adjust=self.k_adjust,
                    n_ref_sets=self.n_ref_sets,
                    tau=self.tau,
                    n_trials=self.n_init,
                    seed=seed,
                ),
            )
        else:
            k = int(self.n_components)
            if k < 1:
                raise InvalidInputError("n_components must be at least 1")
            init = kmeans_init(data, k, rng, n_trials=self.n_init)

        if self.solver == "aamem":
            outcome = fit_accelerated_em(data, init, cfg)
            model, trace = outcome.model, outcome.trace
            self.counters_ = outcome.counters
        elif self.solver == "aem":
            model, trace = fit_adaptive_em(data, init, cfg)
        elif self.solver == "em":
            model, trace = fit_em(data, init, cfg)
        elif self.solver == "els":
            model, trace = fit_els_em(data, init, cfg)
        else:
            model, trace = fit_naive_aa_em(data, init, cfg, adaptive=True)

        self._model = model
        self.weights_ = model.weights
        self.means_ = model.means
        self.covariances_ = model.covariances
        self.n_components_ = model.n_components
        self.n_iter_ = trace.iterations
        self.converged_ = trace.converged
        self.lower_bound_ = trace.final_objective
        self.trace_ = trace
        return self

    @property
    def mixture_(self) -> MixtureModel:
        check_is_fitted(self, "_model")
        return self._model

    def _check_X(self, X):
        check_is_fitted(self, "_model")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self._model.dim:
            raise InvalidInputError(
                f"X has {X.shape[1]} features, the fit used {self._model.dim}"
            )
        return X

    def score_samples(self, X):
        """Per-sample log density under the fitted mixture."""
        X = self._check_X(X)
        log_dens = log_density_matrix(X, self._model) + np.log(self._model.weights)
        m = log_dens.max(axis=1)
        safe = np.where(np.isfinite(m), m, 0.0)
        return safe + np.log(np.exp(log_dens - safe[:, None]).sum(axis=1))

    def score(self, X, y=None):
        """Mean per-sample log density."""
        return float(np.mean(self.score_samples(X)))

    def predict_proba(self, X):
        """Posterior component membership probabilities, one row per sample."""
        X = self._check_X(X)
        log_dens = log_density_matrix(X, self._model) + np.log(self._model.weights)
        m = log_dens.max(axis=1, keepdims=True)
        p = np.exp(log_dens - np.where(np.isfinite(m), m, 0.0))
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        """Index of the most probable component for each sample."""
        return np.argmax(self.predict_proba(X), axis=1)

    def sample(self, n_samples=1, random_state=None):
        """Draw samples from the fitted mixture; returns (X, component labels)."""
        check_is_fitted(self, "_model")
        rng = np.random.default_rng(
            random_state if random_state is not None
            else int(check_random_state(self.random_state).randint(2**31 - 1))
        )
        model = self._model
        idx = rng.choice(model.n_components, size=n_samples, p=model.weights)
        z = rng.standard_normal((n_samples, model.dim))
        x = model.means[idx] + np.einsum("nij,nj->ni", model.cholesky[idx], z)
        return x, idx
