"""Benchmark harness: paired runs, reduction factors, trace CSV export.

Accelerated algorithms are always measured against their non-accelerated
counterpart run from the *same* initial model on the same data, so the
iteration and wall-clock reduction factors isolate the solver.  Timing
covers the fit loops only; initialization is reported separately.
"""

from __future__ import annotations

import csv
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accelerated import fit_accelerated_em
from .adaptive import fit_adaptive_em
from .anderson import fit_naive_aa_em
from .dataset import WeightedDataset
from .em import FitConfig, FitTrace, SolutionChoice, fit_em
from .exceptions import InvalidInputError, NumericalFailureError
from .initialization import kmeans_init
from .line_search import fit_els_em
from .model import MixtureModel

ALGORITHMS = ("em", "els", "aem", "aamem", "naive-aa")
#: Non-accelerated counterpart used for the reduction factors.
BASELINE_OF = {"em": "em", "aem": "aem", "els": "em", "aamem": "aem", "naive-aa": "aem"}


def compute_reduction_factors(
    baseline: FitTrace, accelerated: FitTrace
) -> tuple[float, float, float]:
    """Iteration and wall-clock reduction factors plus their ratio."""
    if accelerated.iterations < 1 or baseline.iterations < 1:
        raise InvalidInputError("both runs must have completed at least one iteration")
    if accelerated.elapsed_s <= 0.0 or baseline.elapsed_s <= 0.0:
        raise InvalidInputError("non-positive wall-clock duration; timing is unusable")
    irf = baseline.iterations / accelerated.iterations
    trf = baseline.elapsed_s / accelerated.elapsed_s
    return irf, trf, irf / trf


def run_algorithm(
    algorithm: str,
    data: WeightedDataset,
    init: MixtureModel,
    cfg: FitConfig,
) -> tuple[MixtureModel, FitTrace]:
    if algorithm == "em":
        return fit_em(data, init, cfg)
    if algorithm == "els":
        return fit_els_em(data, init, cfg)
    if algorithm == "aem":
        return fit_adaptive_em(data, init, cfg)
    if algorithm == "aamem":
        outcome = fit_accelerated_em(data, init, cfg)
        return outcome.model, outcome.trace
    if algorithm == "naive-aa":
        return fit_naive_aa_em(data, init, cfg, adaptive=True)
    raise InvalidInputError(f"unknown algorithm {algorithm!r}")


@dataclass(frozen=True)
class BenchRow:
    dataset: str
    algorithm: str
    k_init: int
    iterations: int
    seconds: float
    final_objective: float
    k_final: int
    irf: float
    trf: float
    irf_over_trf: float
    error: str | None = None


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    init_seconds: dict[tuple[str, int], float] = field(default_factory=dict)

    COLUMNS = ("dataset", "algorithm", "k_init", "iterations", "seconds",
               "final_objective", "k_final", "irf", "trf", "irf_over_trf", "error")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                writer.writerow([
                    row.dataset, row.algorithm, row.k_init, row.iterations,
                    f"{row.seconds:.17g}", f"{row.final_objective:.17g}",
                    row.k_final, f"{row.irf:.17g}", f"{row.trf:.17g}",
                    f"{row.irf_over_trf:.17g}", row.error or "",
                ])

    def format_table(self) -> str:
        header = f"{'dataset':<10} {'algo':<9} {'Kinit':>5} {'iters':>7} " \
                 f"{'seconds':>9} {'objective':>14} {'Kfin':>4} " \
                 f"{'IRF':>7} {'TRF':>7} {'IRF/TRF':>7}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            if r.error:
                lines.append(f"{r.dataset:<10} {r.algorithm:<9} {r.k_init:>5} "
                             f"FAILED: {r.error}")
                continue
            lines.append(
                f"{r.dataset:<10} {r.algorithm:<9} {r.k_init:>5} {r.iterations:>7} "
                f"{r.seconds:>9.3f} {r.final_objective:>14.4f} {r.k_final:>4} "
                f"{r.irf:>7.2f} {r.trf:>7.2f} {r.irf_over_trf:>7.2f}"
            )
        return "\n".join(lines)

    @property
    def any_failed(self) -> bool:
        return any(r.error for r in self.rows)


@dataclass(frozen=True)
class BenchSuite:
    """One benchmark request: datasets x algorithms x initial counts."""

    datasets: tuple[tuple[str, WeightedDataset], ...]
    algorithms: tuple[str, ...]
    k_inits: tuple[int, ...]
    config: FitConfig = FitConfig()
    n_init_trials: int = 10
    threads: int = 1


def _run_cell(name, data, k_init, algorithms, cfg, n_init_trials):
    """All requested runs for one (dataset, k_init) pair, sharing one init."""
    rng = np.random.default_rng([cfg.seed, k_init, zlib.crc32(name.encode())])
    t0 = time.perf_counter()
    init = kmeans_init(data, k_init, rng, n_trials=n_init_trials)
    init_seconds = time.perf_counter() - t0

    needed = list(dict.fromkeys(
        [BASELINE_OF[a] for a in algorithms] + list(algorithms)
    ))
    traces: dict[str, FitTrace | None] = {}
    errors: dict[str, str] = {}
    for algo in needed:
        try:
            _, trace = run_algorithm(algo, data, init, cfg)
            traces[algo] = trace
        except NumericalFailureError as exc:
            traces[algo] = exc.trace
            errors[algo] = str(exc)

    folded = {BASELINE_OF[a] for a in algorithms if BASELINE_OF[a] != a}
    rows = []
    for algo in algorithms:
        if algo in folded:
            continue
        trace = traces[algo]
        base = traces[BASELINE_OF[algo]]
        if algo in errors or trace is None:
            partial = trace.records[-1] if trace and trace.records else None
            rows.append(BenchRow(
                name, algo, k_init,
                trace.iterations if trace else 0,
                trace.elapsed_s if trace else 0.0,
                partial.objective if partial else float("nan"),
                partial.active_k if partial else 0,
                float("nan"), float("nan"), float("nan"),
                error=errors.get(algo, "no trace"),
            ))
            continue
        if BASELINE_OF[algo] in errors or base is None:
            irf = trf = ratio = float("nan")
        else:
            irf, trf, ratio = compute_reduction_factors(base, trace)
        rows.append(BenchRow(
            name, algo, k_init, trace.iterations, trace.elapsed_s,
            trace.final_objective, trace.final_k, irf, trf, ratio,
        ))
    return rows, init_seconds


def run_benchmark(suite: BenchSuite) -> BenchReport:
    """Run every (dataset, k_init) cell and assemble the report.

    Within a cell all algorithms share the same K-means initial model.  An
    algorithm that serves as the baseline of another requested algorithm is
    folded into that comparison row instead of getting its own.  Cells may
    run concurrently (``suite.threads``); per-cell seeds derive from the
    master seed, so results do not depend on scheduling.
    """
    for algo in suite.algorithms:
        if algo not in ALGORITHMS:
            raise InvalidInputError(f"unknown algorithm {algo!r}")
    cells = [
        (name, data, k_init)
        for name, data in suite.datasets
        for k_init in suite.k_inits
    ]
    report = BenchReport()
    if suite.threads > 1:
        with ThreadPoolExecutor(max_workers=suite.threads) as pool:
            futures = [
                pool.submit(_run_cell, name, data, k, suite.algorithms,
                            suite.config, suite.n_init_trials)
                for name, data, k in cells
            ]
            results = [f.result() for f in futures]
    else:
        results = [
            _run_cell(name, data, k, suite.algorithms, suite.config,
                      suite.n_init_trials)
            for name, data, k in cells
        ]
    for (name, _, k), (rows, init_s) in zip(cells, results):
        report.rows.extend(rows)
        report.init_seconds[(name, k)] = init_s
    return report


# ---------------------------------------------------------------------------
# trace CSV
# ---------------------------------------------------------------------------

def export_trace(trace: FitTrace, path) -> None:
    """Write one trace as CSV; reals carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# objective_kind={trace.objective_kind} "
                 f"converged={int(trace.converged)}\n")
        writer = csv.writer(fh)
        writer.writerow(["iter", "objective", "K_active", "choice", "kills",
                         "elapsed_s"])
        for rec in trace.records:
            writer.writerow([
                rec.iteration, f"{rec.objective:.17g}", rec.active_k,
                rec.choice.value, rec.kills, f"{rec.elapsed_s:.17g}",
            ])


def read_trace_csv(path) -> FitTrace:
    """Read a trace written by :func:`export_trace` without loss."""
    with open(path, newline="") as fh:
        first = fh.readline()
        kind = "loglik"
        converged = False
        if first.startswith("#"):
            for token in first[1:].split():
                key, _, value = token.partition("=")
                if key == "objective_kind":
                    kind = value
                elif key == "converged":
                    converged = bool(int(value))
            header = fh.readline()
        else:
            header = first
        if header.strip().split(",") != ["iter", "objective", "K_active",
                                         "choice", "kills", "elapsed_s"]:
            raise InvalidInputError(f"{path}: unexpected trace header")
        trace = FitTrace(objective_kind=kind, converged=converged)
        for row in csv.reader(fh):
            if not row:
                continue
            trace.append(int(row[0]), float(row[1]), int(row[2]),
                         SolutionChoice(row[3]), int(row[4]), float(row[5]))
    if trace.records:
        trace.elapsed_s = trace.records[-1].elapsed_s
    return trace
