"""Command-line front end.

Exit codes: 0 on success, 1 on a usage error, 2 on a data or numerical
error.  Every subcommand accepts ``--seed`` and ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .embedding import BaseKernelSpec, median_heuristic_bandwidth
from .harness import (
    ExperimentConfig,
    run_concentration_experiment,
    run_rate_experiment,
    write_concentration_csv,
    write_rate_csv,
    write_slopes_csv,
)
from .outer_kernel import OUTER_FAMILIES, OuterKernelSpec, kernel_table
from .regressor import cross_validate, fit, predict
from .storage import (
    DataFormatError,
    load_model,
    read_bag,
    read_manifest,
    save_model,
    write_bag,
    write_manifest,
)
from .synthetic import LabelFunctional, MetaDistributionSpec, make_dataset
from .theory import (
    BoundInputs,
    PriorParams,
    bag_size_schedule,
    bag_size_threshold,
    check_conditions,
    misspecified_bound,
    pbc_quantities,
    rate_exponent_misspecified,
    rate_exponent_wellspecified,
    reference_rate_comparison,
    wellspecified_bound,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("merr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _kernel_args(p):
    p.add_argument("--base", default="gaussian", choices=["gaussian", "laplacian", "cauchy"])
    p.add_argument("--bandwidth", default="1.0", help="base kernel bandwidth, or 'median' for the median heuristic")
    p.add_argument("--outer", default="linear", choices=OUTER_FAMILIES)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--method", default="exact", choices=["exact", "taylor", "auto"])


def _base_spec(args, bags) -> BaseKernelSpec:
    if args.bandwidth == "median":
        bw = median_heuristic_bandwidth(bags, seed=args.seed)
    else:
        bw = float(args.bandwidth)
    return BaseKernelSpec(args.base, bw)


def _write_matrix(rows, header, out):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    finally:
        if out:
            fh.close()


def cmd_fit(args):
    data, paths = read_manifest(args.manifest, args.label_bound)
    base = _base_spec(args, data.bags)
    outer = OuterKernelSpec(args.outer, args.theta)
    model = fit(data, base, outer, args.lam, method=args.method, threads=args.threads)
    save_model(model, args.out, paths)
    print(f"model={args.out} l={model.size} d={model.output_dim} lambda={model.lam!r} jitter={model.jitter_used!r}")


def _read_bag_list(path):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0][0].strip() != "bag_path":
        raise DataFormatError("manifest header must start with 'bag_path'")
    if len(rows) < 2:
        raise DataFormatError(f"manifest {path} lists no bags")
    return [read_bag(path.parent / r[0].strip()) for r in rows[1:]]


def cmd_predict(args):
    model = load_model(args.model)
    bags = _read_bag_list(args.manifest)
    if bags[0].dim != model.train_bags[0].dim:
        raise DataFormatError(f"test bags have dimension {bags[0].dim}, model expects {model.train_bags[0].dim}")
    pred = predict(model, bags)
    _write_matrix(pred, [f"y_{k + 1}" for k in range(pred.shape[1])], args.out)


def cmd_cv(args):
    data, _ = read_manifest(args.manifest, args.label_bound)
    base = _base_spec(args, data.bags)
    outer = OuterKernelSpec(args.outer, args.theta)
    grid = None if args.grid is None else [float(v) for v in args.grid.split(",") if v.strip()]
    best, curve = cross_validate(
        data, base, outer, grid, folds=args.folds, seed=args.seed, method=args.method, threads=args.threads
    )
    print("lambda,mean_risk")
    for lam, risk in curve:
        print(f"{lam!r},{risk!r}")
    print(f"best_lambda={best!r}")


def cmd_synth(args):
    meta = MetaDistributionSpec(
        dim=args.dim, mean_law=args.mean_law, lo=args.lo, hi=args.hi, tau=args.tau, component_sigma=args.sigma
    )
    functional = LabelFunctional(
        kind=args.label, output_dim=args.output_dim, noise_sigma=args.noise, clip_bound=args.clip_bound
    )
    data, bayes = make_dataset(meta, functional, args.l, args.N, args.seed, args.stream)
    out = Path(args.out_dir)
    (out / "bags").mkdir(parents=True, exist_ok=True)
    paths = []
    for i, bag in enumerate(data.bags):
        p = out / "bags" / f"bag_{i:05d}.csv"
        write_bag(p, bag)
        paths.append(p)
    write_manifest(out / "manifest.csv", paths, data.labels)
    _write_matrix(bayes, [f"f_{k + 1}" for k in range(bayes.shape[1])], out / "bayes.csv")
    print(f"wrote {len(paths)} bags to {out} (label bound C={data.label_bound!r})")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed_given:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_rates(args):
    cfg = _config(args)
    report = run_rate_experiment(cfg, threads=args.threads)
    write_rate_csv(report, args.out, timing=args.timing)
    slopes_path = args.slopes or str(args.out) + ".slopes.csv"
    write_slopes_csv(report, slopes_path)
    failed = sum(not r.ok for r in report.rows)
    print(f"rows={len(report.rows)} failed={failed} csv={args.out} slopes={slopes_path}")
    for a in sorted(report.slopes):
        slope, err, n, re, _ = report.slopes[a]
        print(f"a={a:.6g} slope={slope:.4f} stderr={err:.4f} points={n} theory={re:.4f}")


def cmd_concentration(args):
    cfg = _config(args)
    rows = run_concentration_experiment(cfg, threads=args.threads)
    write_concentration_csv(rows, args.out, cfg.hash)
    for N, alpha, radius, freq, bound in rows:
        print(f"N={N} alpha={alpha:g} radius={radius:.6g} frequency={freq:.4f} bound={bound:.6g}")


def cmd_theory(args):
    out = []
    prior = PriorParams(args.b, args.c, args.R, args.alpha_spec, args.beta)
    inputs = BoundInputs(
        B_k=args.B_k, B_K=args.B_K, L=args.L, h=args.h, C=args.C, l=args.l, N=args.N,
        lam=args.lam, eta=args.eta, delta=args.delta, f_rho_norm_H=args.f_norm,
    )
    A, B, Ndim = pbc_quantities(prior, args.lam)
    out += [("pbc_A", A), ("pbc_B", B), ("pbc_N_upper", Ndim)]
    out.append(("wellspecified_bound", wellspecified_bound(inputs, prior)))
    out.append(("misspecified_bound", misspecified_bound(inputs, args.s, args.Ttilde_norm, args.f_Ts_norm)))
    out.append(("bag_size_threshold", bag_size_threshold(inputs)))
    for name, ok, margin in check_conditions(inputs, Ndim, args.T_norm):
        out.append((f"condition.{name}", f"{'ok' if ok else 'violated'} margin={margin!r}"))
    if args.a is not None:
        re, le = rate_exponent_wellspecified(args.a, args.b, args.c)
        out += [("wellspecified.risk_exponent", re), ("wellspecified.lambda_exponent", le)]
        if args.l >= 2:
            out.append(("wellspecified.bag_size", bag_size_schedule(int(args.l), args.a, args.h)))
        re, le = rate_exponent_misspecified(args.a, args.s)
        out += [("misspecified.risk_exponent", re), ("misspecified.lambda_exponent", le)]
    r_sat, r_one = reference_rate_comparison(args.s)
    out += [("reference.merr_saturated", r_sat), ("reference.one_stage", r_one)]
    if args.csv:
        print("quantity,value")
        for k, v in out:
            print(f"{k},{v!r}" if isinstance(v, float) else f"{k},{v}")
    else:
        for k, v in out:
            print(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")


def cmd_kernels(args):
    print("family,formula,h")
    for fam, formula, h in kernel_table():
        print(f"{fam},{formula},{h}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 0)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="merr", description="Mean-embedding ridge regression on bags of samples.")
    parser.add_argument("--version", action="version", version=f"merr {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit a model on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label-bound", type=float, default=None)
    _kernel_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True, help="manifest of test bags (label columns optional)")
    p.add_argument("--out", default=None, help="CSV output (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", parents=[common], help="select lambda by bag-level cross-validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", default=None, help="comma-separated lambda values (default: 20 log-spaced)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--label-bound", type=float, default=None)
    _kernel_args(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic two-stage dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--l", type=_positive_int, required=True)
    p.add_argument("--N", type=_positive_int, required=True)
    p.add_argument("--dim", type=_positive_int, default=1)
    p.add_argument("--mean-law", default="uniform", choices=["uniform", "gaussian"])
    p.add_argument("--lo", type=float, default=-1.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--label", default="mean_norm_sq", choices=["mean_norm_sq", "gaussian_entropy", "linear_of_mean"])
    p.add_argument("--output-dim", type=_positive_int, default=1)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--clip-bound", type=float, default=None)
    p.add_argument("--stream", default="train", choices=["train", "test"])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rates", parents=[common], help="run a rate-saturation sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--slopes", default=None, help="slope summary CSV (default <out>.slopes.csv)")
    p.add_argument("--timing", action="store_true", help="write wall times into the main CSV")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("concentration", parents=[common], help="empirical embedding concentration check")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_concentration)

    p = sub.add_parser("theory", parents=[common], help="evaluate bounds, conditions and rate exponents")
    for name, default in [
        ("b", 2.0), ("c", 2.0), ("R", 1.0), ("alpha-spec", 1.0), ("beta", 1.0), ("s", 1.0),
        ("B-k", 1.0), ("B-K", 1.0), ("L", 1.0), ("h", 1.0), ("C", 1.0), ("l", 100.0), ("N", 1000.0),
        ("eta", 0.1), ("delta", 1.0), ("f-norm", 1.0), ("T-norm", 1.0), ("Ttilde-norm", 1.0), ("f-Ts-norm", 1.0),
    ]:
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float, default=default)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--a", type=float, default=None, help="bag-size exponent for rate exponents")
    p.add_argument("--csv", action="store_true", help="print CSV instead of key=value lines")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("kernels", parents=[common], help="list outer kernel families and Hoelder exponents")
    p.set_defaults(func=cmd_kernels)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (DataFormatError, ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"merr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
