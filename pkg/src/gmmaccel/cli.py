"""Command-line harness: generate data, fit mixtures, benchmark, plot.

Exit codes: 0 on success, 1 on usage errors, 2 on numerical failures (which
are reported on stderr rather than raised as tracebacks).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import (
    ALGORITHMS,
    BenchSuite,
    export_trace,
    read_trace_csv,
    run_algorithm,
    run_benchmark,
)
from .dataset import load_dataset_csv, save_dataset_csv
from .em import FitConfig, RestartMode
from .exceptions import GmmError, InvalidInputError
from .initialization import InitConfig, gap_statistic, gs_kmeans_init, kmeans_init
from .model import save_model_json
from .plots import render_convergence_svg
from .synthetic import PRESET_NAMES, SyntheticSpec, generate_synthetic


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_fit_flags(parser):
    parser.add_argument("--tol", type=float, default=1e-10,
                        help="relative objective change that stops the fit")
    parser.add_argument("--eps-mono", type=float, default=0.01,
                        help="allowed objective decrease per accelerated step")
    parser.add_argument("--m-aa", type=int, default=None,
                        help="residual history depth (default: 5 if Kinit<=3 else 10)")
    parser.add_argument("--restart", choices=["reset", "keeplast"], default="reset",
                        help="what an acceleration restart keeps")
    parser.add_argument("--no-taylor", action="store_true",
                        help="use the exact monotonicity test (one extra sweep)")
    parser.add_argument("--max-iters", type=int, default=50_000)
    parser.add_argument("--threads", type=int, default=1)


def _config_from(args, seed) -> FitConfig:
    return FitConfig(
        tol=args.tol,
        max_iters=args.max_iters,
        seed=seed,
        eps_mono=args.eps_mono,
        m_aa=args.m_aa,
        restart_mode=RestartMode(args.restart),
        use_taylor_test=not args.no_taylor,
        thread_count=args.threads,
    )


def _load_input(args):
    if args.input:
        return args.input, load_dataset_csv(args.input)
    if args.preset:
        spec = SyntheticSpec(preset=args.preset, n=args.n, seed=args.seed)
        return args.preset, generate_synthetic(spec)
    raise InvalidInputError("either --input or --preset is required")


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(preset=args.preset, n=args.n, seed=args.seed)
    data = generate_synthetic(spec)
    save_dataset_csv(data, args.output)
    print(f"wrote {data.count} points (D={data.dim}) to {args.output}")
    return 0


def _cmd_fit(args) -> int:
    name, data = _load_input(args)
    cfg = _config_from(args, args.seed)
    rng = np.random.default_rng(args.seed)
    if args.init == "gs-kmeans":
        init, report = gs_kmeans_init(data, InitConfig(seed=args.seed))
        print(f"gap statistic: K_est={report.k_opt}, starting K={init.n_components}")
    else:
        if args.kinit is None:
            raise InvalidInputError("--kinit is required with --init kmeans")
        init = kmeans_init(data, args.kinit, rng)
    model, trace = run_algorithm(args.algo, data, init, cfg)
    print(f"dataset={name} algo={args.algo} iterations={trace.iterations} "
          f"converged={trace.converged} K_final={model.n_components} "
          f"objective={trace.final_objective:.6f} elapsed={trace.elapsed_s:.3f}s")
    if args.output:
        save_model_json(model, args.output)
        print(f"model written to {args.output}")
    if args.trace:
        export_trace(trace, args.trace)
        print(f"trace written to {args.trace}")
    return 0


def _cmd_bench(args) -> int:
    datasets = []
    if args.input:
        datasets.append((args.input, load_dataset_csv(args.input)))
    for preset in (args.preset.split(",") if args.preset else []):
        spec = SyntheticSpec(preset=preset.strip(), n=args.n, seed=args.seed)
        datasets.append((preset.strip(), generate_synthetic(spec)))
    if not datasets:
        raise InvalidInputError("either --input or --preset is required")
    algos = tuple(a.strip() for a in args.algos.split(","))
    k_inits = tuple(int(k) for k in str(args.kinit).split(","))
    suite = BenchSuite(
        datasets=tuple(datasets),
        algorithms=algos,
        k_inits=k_inits,
        config=_config_from(args, args.seed),
        threads=args.threads,
    )
    report = run_benchmark(suite)
    print("# timing covers fit loops only; per-fit wall clock, initialization "
          "excluded")
    print(report.format_table())
    for (name, k), secs in sorted(report.init_seconds.items()):
        print(f"# init {name} Kinit={k}: {secs:.3f}s")
    if args.output:
        report.to_csv(args.output)
        print(f"report written to {args.output}")
    return 2 if report.any_failed else 0


def _cmd_gapstat(args) -> int:
    name, data = _load_input(args)
    rng = np.random.default_rng(args.seed)
    report = gap_statistic(
        data, k_min=args.kmin, k_max=args.kmax, n_ref_sets=args.refs,
        tau=args.tau, rng=rng, k_adjust=args.k_adjust,
    )
    print(f"dataset={name}  (B={args.refs}, tau={args.tau})")
    print(f"{'K':>3} {'GSV':>10} {'s_K':>10}")
    for k, g, s in zip(report.ks, report.gsv, report.s_k):
        marker = "  <-- K_est" if k == report.k_opt else ""
        print(f"{k:>3} {g:>10.4f} {s:>10.4f}{marker}")
    if not report.criterion_satisfied:
        print("warning: selection criterion never fired; reporting K_max")
    print(f"K_est={report.k_opt}  K_init={report.k_init}")
    return 0


def _cmd_plot(args) -> int:
    traces = []
    for path in args.trace:
        traces.append((path.rsplit("/", 1)[-1], read_trace_csv(path)))
    render_convergence_svg(traces, args.output, log_x=args.log_x)
    print(f"plot written to {args.output}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="gmmaccel",
                     description="Gaussian mixture fitting and benchmarks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset CSV")
    p.add_argument("--preset", choices=PRESET_NAMES, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fit", help="fit one mixture to a dataset")
    p.add_argument("--input", help="dataset CSV (x0..x{D-1}[,weight])")
    p.add_argument("--preset", choices=PRESET_NAMES,
                   help="generate this preset instead of reading a file")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algo", choices=ALGORITHMS, default="aamem")
    p.add_argument("--init", choices=["gs-kmeans", "kmeans"], default="gs-kmeans")
    p.add_argument("--kinit", type=int, default=None)
    p.add_argument("--output", help="write the fitted model as JSON")
    p.add_argument("--trace", help="write the per-iteration trace as CSV")
    _add_fit_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("bench", help="paired benchmark with reduction factors")
    p.add_argument("--preset", help="comma-separated presets (vws,ps,vps)")
    p.add_argument("--input", help="dataset CSV")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kinit", default="3", help="comma-separated starting K values")
    p.add_argument("--algos", default="aem,aamem",
                   help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    p.add_argument("--output", help="write the report as CSV")
    _add_fit_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("gapstat", help="estimate the component count")
    p.add_argument("--input")
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--refs", type=int, default=10)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--k-adjust", type=int, default=2)
    p.set_defaults(func=_cmd_gapstat)

    p = sub.add_parser("plot", help="render convergence traces to SVG")
    p.add_argument("--trace", nargs="+", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--log-x", action="store_true")
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"gmmaccel: error: {exc}", file=sys.stderr)
        return 1
    except GmmError as exc:
        print(f"gmmaccel: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gmmaccel: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
