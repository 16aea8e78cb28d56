"""
Command-line front end.

    studentrmt dos --mu 6 --Q 2
    studentrmt sample --N 50 --Q 2 --mu 6 --samples 8000 --estimator pearson
    studentrmt kl-table --mu-list 3,4,5 --Q-list 1.5,2,3,5
    studentrmt empirical --input returns.csv --window 1125 --Km 10 --mu 4
    studentrmt synth --out returns.csv

Every CSV carries its run manifest in ``#`` header lines; a JSON file with
timing and diagnostics is written next to it. Exit codes: 0 success,
1 numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dos import ConvergenceError, DensityOfStates, DOSParams, mp_edges
from .empirical import (
    DataFormatError,
    EmpiricalConfig,
    load_returns,
    run_empirical,
    synthetic_market,
    write_returns,
)
from .ensemble import DeltaGaussian, EnsembleParams, StudentInverseGamma, parse_law
from .kl import kl_benchmarks
from .mle import MLEConfig, MLENonConvergence
from .montecarlo import analytic_cdf, default_threads, ks_distance, sample_spectra
from .output import RunManifest, default_output_dir, write_csv, write_metadata
from .quadrature import QuadratureError

log = logging.getLogger("studentrmt")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _range(text):
    vals = _float_list(text)
    if len(vals) != 2 or not 0 <= vals[0] < vals[1]:
        raise argparse.ArgumentTypeError("expected LO,HI with 0 <= LO < HI")
    return tuple(vals)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _output_path(args, default_name):
    return Path(args.out) if args.out else default_output_dir() / default_name


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _law(args):
    if args.law == "student" and args.mu is None:
        raise UsageError("--mu is required with --law student")
    if args.law == "lognormal" and args.log_var is None:
        raise UsageError("--log-var is required with --law lognormal")
    try:
        return parse_law(args.law, args.mu, args.log_var)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config(args, skip=("func", "verbose")):
    # output locations do not affect file content
    skip = tuple(skip) + ("out", "figure")
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_dos(args) -> int:
    law = _law(args)
    if not args.Q > 1:
        raise UsageError("--Q must exceed 1")
    t0 = time.perf_counter()
    dos = DensityOfStates(DOSParams(law, args.Q))
    lam_min = dos.left_edge()
    lam_max = dos.right_edge()
    if args.lambda_range:
        lo, hi = args.lambda_range
    else:
        lo = 0.5 * lam_min
        hi = 1.2 * lam_max if lam_max is not None else 4.0 * mp_edges(1.0 / args.Q)[1]
    lam = np.linspace(max(lo, 1e-6 * hi), hi, args.points)
    grid = dos.curve(lam, tail_rtol=args.tail_rtol if isinstance(law, StudentInverseGamma) else None)
    out = _output_path(args, "dos.csv")
    manifest = RunManifest("dos", _config(args), None, __version__)
    notes = [f"law={law.describe()} Q={args.Q:g} lambda_min={lam_min!r} lambda_max={lam_max!r}",
             f"lambda_cut={grid.lam_cut!r}"]
    write_csv(out, {"lambda": grid.lam, "G_R": grid.G_R, "rho": grid.rho, "branch": list(grid.branch)}, manifest, notes)
    manifest.timing = {"seconds": time.perf_counter() - t0}
    write_metadata(_sidecar(out), manifest, {"lambda_min": lam_min, "lambda_max": lam_max, "lambda_cut": grid.lam_cut,
                                             "diagnostics": dos.diagnostics})
    if args.figure:
        from .plotting import plot_density
        plot_density(grid.lam, grid.rho, args.figure, grid.branch, f"{law.describe()}, Q={args.Q:g}")
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_sample(args) -> int:
    law = _law(args)
    params = EnsembleParams.from_ratio(args.N, args.Q, law)
    if args.estimator == "mle":
        if not isinstance(law, StudentInverseGamma) and args.mle_mu is None:
            raise UsageError("--estimator mle needs a Student law or --mle-mu")
        mle_cfg = MLEConfig(mu=args.mle_mu if args.mle_mu is not None else law.mu)
    else:
        mle_cfg = None
    if params.T <= params.N and args.estimator == "mle":
        raise UsageError("maximum likelihood needs T > N")
    t0 = time.perf_counter()
    spectra = sample_spectra(params, args.samples, args.seed, args.estimator, mle_cfg, threads=args.threads)
    pooled = np.concatenate(spectra)
    hi = args.lambda_max if args.lambda_max else float(np.quantile(pooled, 0.999)) * 1.05
    edges = np.linspace(0.0, hi, args.bins + 1)
    counts, _ = np.histogram(pooled, bins=edges)
    density = counts / (pooled.size * np.diff(edges))
    centers = 0.5 * (edges[1:] + edges[:-1])
    # limiting law: Marcenko-Pastur for the MLE and for constant volatility
    ref_law = DeltaGaussian() if args.estimator == "mle" else law
    analytic = DensityOfStates(DOSParams(ref_law, params.Q)).curve(centers, tail_rtol=None).rho
    extra = {"n_eigenvalues": int(pooled.size), "above_range": int((pooled > hi).sum()),
             "max_eigenvalue": float(pooled.max())}
    if args.ks:
        extra["ks_distance"] = ks_distance(pooled, analytic_cdf(ref_law, params.Q))
    out = _output_path(args, "sample.csv")
    manifest = RunManifest("sample", _config(args, ("func", "verbose", "threads")), args.seed, __version__)
    cols = {"lambda_lo": edges[:-1], "lambda_hi": edges[1:], "lambda": centers, "density": density,
            "analytic": analytic}
    write_csv(out, cols, manifest, [f"T={params.T} analytic={ref_law.describe()}"])
    manifest.timing = {"seconds": time.perf_counter() - t0, "threads": args.threads}
    write_metadata(_sidecar(out), manifest, extra)
    if args.figure:
        from .plotting import plot_histogram
        plot_histogram(edges, density, args.figure, {ref_law.describe(): analytic},
                       f"N={args.N}, Q={params.Q:g}, {args.estimator}")
    if "ks_distance" in extra:
        print(f"KS distance {extra['ks_distance']:.5f}")
    log.info("wrote %s", out)
    return EXIT_OK


def _aligned_table(cells) -> str:
    lines = []
    mus = sorted({c.mu for c in cells})
    for mu in mus:
        row = [c for c in cells if c.mu == mu]
        head = "mu = inf (gaussian)" if math.isinf(mu) else f"mu = {mu:g}"
        lines.append(head)
        lines.append(f"{'':>8}" + "".join(f"{'Q=' + format(c.Q, 'g'):>12}" for c in row))
        lines.append(f"{'Z/N':>8}" + "".join(f"{c.Z_over_N:12.6f}" for c in row))
        lines.append("Z'/N".rjust(8) + "".join(f"{c.Zprime_over_N:12.6f}" for c in row))
        lines.append("")
    return "\n".join(lines)


def cmd_kl_table(args) -> int:
    for mu in args.mu_list:
        if not mu > 2:
            raise UsageError(f"mu values must exceed 2, got {mu:g}")
    for Q in args.Q_list:
        if not Q > 1:
            raise UsageError(f"Q values must exceed 1, got {Q:g}")
    t0 = time.perf_counter()
    cells = [kl_benchmarks(mu, Q, args.tail_rtol) for mu in args.mu_list for Q in args.Q_list]
    out = _output_path(args, "kl_table.csv")
    manifest = RunManifest("kl-table", _config(args), None, __version__)
    cols = {"mu": [c.mu for c in cells], "Q": [c.Q for c in cells], "Z_over_N": [c.Z_over_N for c in cells],
            "Zprime_over_N": [c.Zprime_over_N for c in cells]}
    write_csv(out, cols, manifest)
    text = _aligned_table(cells)
    out.with_suffix(".txt").write_text(text + "\n")
    manifest.timing = {"seconds": time.perf_counter() - t0}
    write_metadata(_sidecar(out), manifest, {"cells": [dict(mu=c.mu, Q=c.Q, **c.meta) for c in cells]})
    if args.figure:
        from .plotting import plot_kl_table
        plot_kl_table(cols["mu"], cols["Q"], cols["Z_over_N"], cols["Zprime_over_N"], args.figure)
    print(text)
    return EXIT_OK


def cmd_empirical(args) -> int:
    if args.input is None:
        raise UsageError("--input is required (write a synthetic file with `studentrmt synth`)")
    try:
        cfg = EmpiricalConfig(args.window, args.step, args.Km)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.mu is not None and not args.mu > 2:
        raise UsageError("--mu must exceed 2")
    t0 = time.perf_counter()
    ds = load_returns(args.input, args.missing)
    if args.Km >= ds.N:
        raise UsageError(f"--Km must be smaller than the number of assets ({ds.N})")
    rep = run_empirical(ds, cfg, args.mu, args.rescale_volatility, bins=args.bins, lam_hist=args.lambda_max,
                        cutoff_method=args.cutoff_method)
    out = _output_path(args, "empirical.csv")
    manifest = RunManifest("empirical", _config(args), None, __version__)
    centers = 0.5 * (rep.edges[1:] + rep.edges[:-1])
    notes = [f"N={ds.N} windows={len(rep.spectra)} Q={rep.Q:g}"]
    if rep.cutoffs:
        notes.append("cutoffs (" + rep.cutoffs["method"] + "): "
                     + " ".join(f"lambda_{p:g}={v!r}" for p, v in rep.cutoffs.items() if p != "method"))
    write_csv(out, {"lambda_lo": rep.edges[:-1], "lambda_hi": rep.edges[1:], "lambda": centers,
                    "density": rep.density, "student": rep.student, "mp": rep.mp}, manifest, notes)
    spec_cols = {f"w{k:03d}": s for k, s in enumerate(rep.spectra)}
    spec_cols = {"rank": np.arange(1, ds.N + 1), **spec_cols}
    write_csv(out.with_name(out.stem + "_spectra.csv"), spec_cols, manifest)
    manifest.timing = {"seconds": time.perf_counter() - t0}
    extra = {"ks_student": rep.ks_student, "ks_mp": rep.ks_mp,
             "cutoffs": {str(k): v for k, v in (rep.cutoffs or {}).items()},
             "renormalisation_factors": rep.factors, "bulk_mean": float(rep.bulk.mean()), "data": rep.meta}
    write_metadata(_sidecar(out), manifest, extra)
    if args.figure:
        from .plotting import plot_histogram
        overlays = {"Marcenko-Pastur": rep.mp}
        if args.mu is not None:
            overlays = {f"student mu={args.mu:g}": rep.student, **overlays}
        cut = {f"p={p:g}": v for p, v in (rep.cutoffs or {}).items() if p != "method"}
        plot_histogram(rep.edges, rep.density, args.figure, overlays, f"K_m={args.Km}, Q={rep.Q:g}", cut)
    print(f"bulk mean {rep.bulk.mean():.4f}  KS to MP {rep.ks_mp:.4f}"
          + (f"  KS to Student {rep.ks_student:.4f}" if rep.ks_student is not None else ""))
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synthetic_market(args.N, args.T, args.mu, args.rho, seed=args.seed)
    out = _output_path(args, "synthetic_returns.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_returns(ds, out)
    log.info("wrote %s", out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p, figure=True):
    p.add_argument("--out", help="output CSV path (default: $STUDENTRMT_OUTDIR/<command>.csv)")
    if figure:
        p.add_argument("--figure", help="also render a PNG figure to this path")


def _add_law(p):
    p.add_argument("--law", choices=("student", "gaussian", "lognormal"), default="student")
    p.add_argument("--mu", type=_float, help="Student tail exponent (> 2; 'inf' means gaussian)")
    p.add_argument("--log-var", type=_float, help="variance of log sigma^2 for the lognormal law")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="studentrmt", description="Wishart-Student correlation spectra toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dos", help="density of states on a lambda grid")
    _add_law(p)
    p.add_argument("--Q", type=_float, required=True)
    p.add_argument("--lambda-range", type=_range, help="LO,HI")
    p.add_argument("--points", type=_positive_int, default=400)
    p.add_argument("--tail-rtol", type=_float, default=0.02)
    _add_common(p)
    p.set_defaults(func=cmd_dos)

    p = sub.add_parser("sample", help="Monte Carlo eigenvalue histogram")
    _add_law(p)
    p.add_argument("--N", type=_positive_int, required=True)
    p.add_argument("--Q", type=_float, required=True)
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimator", choices=("pearson", "mle"), default="pearson")
    p.add_argument("--mle-mu", type=_float, help="tail exponent used in the likelihood (default: --mu)")
    p.add_argument("--bins", type=_positive_int, default=80)
    p.add_argument("--lambda-max", type=_float)
    p.add_argument("--ks", action="store_true", help="report the KS distance to the limiting law")
    p.add_argument("--threads", type=_positive_int, default=default_threads())
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("kl-table", help="Z/N and Z'/N benchmark tables")
    p.add_argument("--mu-list", type=_float_list, default=[3.0, 4.0, 5.0])
    p.add_argument("--Q-list", type=_float_list, default=[1.5, 2.0, 3.0, 5.0])
    p.add_argument("--tail-rtol", type=_float, default=1e-3)
    _add_common(p)
    p.set_defaults(func=cmd_kl_table)

    p = sub.add_parser("empirical", help="windowed spectra of a returns file")
    p.add_argument("--input")
    p.add_argument("--window", type=_positive_int, default=1125)
    p.add_argument("--step", type=_positive_int, default=15)
    p.add_argument("--Km", type=int, default=0)
    p.add_argument("--mu", type=_float)
    p.add_argument("--rescale-volatility", action="store_true")
    p.add_argument("--missing", choices=("drop-date", "zero-fill"), default="drop-date")
    p.add_argument("--cutoff-method", choices=("poisson", "product"), default="poisson")
    p.add_argument("--bins", type=_positive_int, default=80)
    p.add_argument("--lambda-max", type=_float)
    _add_common(p)
    p.set_defaults(func=cmd_empirical)

    p = sub.add_parser("synth", help="write a synthetic market returns file")
    p.add_argument("--N", type=_positive_int, default=450)
    p.add_argument("--T", type=_positive_int, default=1410)
    p.add_argument("--mu", type=_float, default=3.85)
    p.add_argument("--rho", type=_float, default=0.2, help="market-mode correlation")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, figure=False)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataFormatError, FileNotFoundError) as exc:
        print(f"studentrmt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, QuadratureError, MLENonConvergence, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"studentrmt {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"studentrmt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
