"""Command-line entry point.

Subcommands: ``simulate`` (WAR(1) series), ``bandwidth`` (cross-validation
search), ``density`` (contour-grid export), ``study`` (replicated
benchmark), ``rcov`` (realized-covariance pipeline).  All flags are long
names only and every stochastic path is fully determined by ``--seed``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import matcore
from .bandwidth import CvConfig, default_lag, select_bandwidth
from .errors import ConfigError, DataError, DimensionError, DomainError, NumericError
from .estimators import KdeSpec, SpdSeries, kde_log_eval_many
from .evaluation import (
    QuadConfigD2,
    StudyConfig,
    resolve_threads,
    simulation_study,
    study_to_csv,
    study_to_markdown,
)
from .rcov import (
    intraday_log_returns,
    parse_price_csv,
    rc_to_spd_series,
    realized_cov_daily,
    write_rc_csv,
    write_stats_csv,
)
from .warsim import WarModel, preset_models, war1_simulate

USAGE_EXIT, DATA_EXIT, NUMERIC_EXIT = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_matrix(text: str, name: str) -> np.ndarray:
    """Parse 'a,b;c,d' into a matrix."""
    try:
        rows = [[float(x) for x in row.split(",")] for row in text.split(";")]
        return np.array(rows, dtype=float)
    except ValueError:
        raise UsageError(f"could not parse --{name} matrix {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spdkde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a WAR(1) series to CSV")
    sim.add_argument("--preset", choices=sorted(preset_models().keys()))
    sim.add_argument("--ar", help="AR matrix as 'a,b;c,d'")
    sim.add_argument("--sigma", help="innovation covariance as 'a,b;c,d'")
    sim.add_argument("--kappa", type=int, default=4)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--burnin", type=int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)

    bw = sub.add_parser("bandwidth", help="cross-validation bandwidth search")
    bw.add_argument("--input", required=True, help="series CSV from 'simulate' or 'rcov'")
    bw.add_argument("--kernel", choices=("wishart", "lg"), default="wishart")
    bw.add_argument("--method", choices=("lscv", "lcv"), default="lscv")
    bw.add_argument("--lag", type=int, default=None, help="LSCV lag, default ceil(n^(1/4))")
    bw.add_argument("--b-lo", type=float, default=1e-4)
    bw.add_argument("--b-hi", type=float, default=10.0)
    bw.add_argument("--coarse", type=int, default=25)
    bw.add_argument("--out-curve", default=None, help="criterion curve CSV")

    dens = sub.add_parser("density", help="export a fixed-correlation log-density grid")
    dens.add_argument("--input", required=True)
    dens.add_argument("--kernel", choices=("wishart", "lg"), default="wishart")
    dens.add_argument("--bandwidth", type=float, required=True)
    dens.add_argument("--rho", type=float, default=0.0, help="fixed correlation of the grid")
    dens.add_argument("--var-min", type=float, default=None)
    dens.add_argument("--var-max", type=float, default=None)
    dens.add_argument("--points", type=int, default=40, help="grid points per variance axis")
    dens.add_argument("--out", required=True)

    study = sub.add_parser("study", help="replicated WAR(1) benchmark")
    study.add_argument("--config", required=True, help="key = value text file")
    study.add_argument("--out-dir", required=True)
    study.add_argument("--threads", type=int, default=None)

    rcov = sub.add_parser("rcov", help="realized-covariance pipeline")
    rcov.add_argument("--prices", required=True)
    rcov.add_argument("--out-dir", required=True)
    rcov.add_argument("--rc-normalize", choices=("none", "count"), default="none")
    rcov.add_argument("--fill", choices=("ffill", "drop"), default="ffill")
    rcov.add_argument("--chain", action="store_true", help="run bandwidth + density afterwards")
    rcov.add_argument("--rho", type=float, default=0.25, help="correlation for chained density")

    return parser


def _kernel_name(flag: str) -> str:
    return "loggauss" if flag == "lg" else "wishart"


def cmd_simulate(args) -> int:
    if args.preset:
        model = preset_models()[args.preset]
        if args.kappa != 4:
            model = WarModel(ar=model.ar, sigma=model.sigma, kappa=args.kappa)
    else:
        if not (args.ar and args.sigma):
            raise UsageError("either --preset or both --ar and --sigma are required")
        model = WarModel(
            ar=_parse_matrix(args.ar, "ar"),
            sigma=_parse_matrix(args.sigma, "sigma"),
            kappa=args.kappa,
        )
    rng = np.random.default_rng(args.seed)
    series = war1_simulate(model, args.n, burnin=args.burnin, rng=rng)
    series.to_csv(args.out)
    fixed = model.stationary_scale
    residual = np.linalg.norm(fixed - model.ar @ fixed @ model.ar.T - model.sigma)
    print(f"kappa = {model.kappa}")
    print("stationary scale =")
    for row in fixed:
        print("  " + "  ".join(f"{x: .8f}" for x in row))
    print(f"lyapunov residual = {residual:.3e}")
    print(f"wrote {args.n} observations to {args.out}")
    return 0


def cmd_bandwidth(args) -> int:
    series = SpdSeries.from_csv(args.input)
    cfg = CvConfig(
        method=args.method,
        kernel=_kernel_name(args.kernel),
        lag=args.lag,
        b_lo=args.b_lo,
        b_hi=args.b_hi,
        coarse=args.coarse,
    )
    result = select_bandwidth(series, cfg)
    lag = result.lag if result.lag is not None else default_lag(len(series))
    print(f"n = {len(series)}  method = {args.method}  kernel = {args.kernel}  lag = {lag}")
    print(f"b_star = {result.bandwidth!r}")
    if result.boundary:
        print("warning: optimum at the search boundary", file=sys.stderr)
    if args.out_curve:
        with open(args.out_curve, "w", newline="") as fh:
            fh.write("b,criterion\n")
            for b, val in result.curve:
                fh.write(f"{b!r},{val!r}\n")
        print(f"wrote criterion curve to {args.out_curve}")
    return 0


def density_grid(series: SpdSeries, kernel: str, bandwidth: float, rho: float,
                 var_min: float | None, var_max: float | None, points: int):
    """Log-density rows (s11, s22, rho, rescaled log density), max zero.

    The grid is log-spaced over the sample's variance range (or the given
    bounds) at a fixed correlation; non-positive-definite grid points are
    excluded and counted.
    """
    if series.dim != 2:
        raise DomainError("density grids require a 2x2 series")
    diag = np.einsum("nii->ni", series.matrices)
    lo = var_min if var_min is not None else float(diag.min()) * 0.5
    hi = var_max if var_max is not None else float(diag.max()) * 1.5
    if not (lo > 0 and hi > lo):
        raise DomainError("variance grid bounds must satisfy 0 < var-min < var-max")
    grid = np.geomspace(lo, hi, points)
    excluded = 0
    mats, coords = [], []
    for s11 in grid:
        for s22 in grid:
            off = rho * math.sqrt(s11 * s22)
            if abs(rho) >= 1.0:
                excluded += 1
                continue
            mats.append([[s11, off], [off, s22]])
            coords.append((s11, s22))
    if not mats:
        raise DomainError("the whole grid was excluded; is |rho| < 1?")
    spec = KdeSpec(kernel=kernel, sample=series, bandwidth=bandwidth)
    logs = kde_log_eval_many(spec, np.array(mats))
    logs = logs - logs.max()
    rows = [(c[0], c[1], rho, v) for c, v in zip(coords, logs)]
    return rows, excluded


def _write_density_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("s11,s22,rho,log_density_rescaled\n")
        for s11, s22, rho, val in rows:
            fh.write(f"{s11!r},{s22!r},{rho!r},{val!r}\n")


def cmd_density(args) -> int:
    series = SpdSeries.from_csv(args.input)
    rows, excluded = density_grid(
        series,
        _kernel_name(args.kernel),
        args.bandwidth,
        args.rho,
        args.var_min,
        args.var_max,
        args.points,
    )
    _write_density_csv(rows, args.out)
    print(f"wrote {len(rows)} grid points to {args.out} ({excluded} excluded)")
    return 0


def _parse_study_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def cmd_study(args) -> int:
    import os

    raw = _parse_study_config(args.config)
    presets = preset_models()
    labels = [m.strip() for m in raw.get("models", "M1S1").split(",") if m.strip()]
    unknown = [m for m in labels if m not in presets]
    if unknown:
        raise DataError(f"unknown preset models: {unknown}")
    sizes = tuple(int(x) for x in raw.get("sizes", "100,300").split(","))
    methods = tuple(
        m.strip() for m in raw.get("methods", "w_lscv,w_lcv,lg_lscv,lg_lcv").split(",")
    )
    cfg = StudyConfig(
        models={m: presets[m] for m in labels},
        sample_sizes=sizes,
        methods=methods,
        replications=int(raw.get("replications", 100)),
        seed=int(raw.get("seed", 0)),
        burnin=int(raw.get("burnin", 200)),
        threads=args.threads,
        quad=QuadConfigD2(
            lam_max=float(raw.get("lam_max", 30.0)),
            n_lam=int(raw.get("n_lam", 64)),
            n_theta=int(raw.get("n_theta", 32)),
        )
        if raw.get("quad", "auto") == "fixed"
        else None,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    result = simulation_study(cfg)
    study_to_csv(result, os.path.join(args.out_dir, "summary.csv"))
    with open(os.path.join(args.out_dir, "summary.md"), "w") as fh:
        fh.write(study_to_markdown(result))
    total_failures = 0
    for cell in result.cells:
        raw_path = os.path.join(args.out_dir, f"raw_{cell.model}_{cell.n}_{cell.method}.csv")
        with open(raw_path, "w") as fh:
            fh.write("rise\n")
            for v in cell.rises:
                fh.write(f"{v!r}\n")
    failures = {(c.model, c.n): c.failures for c in result.cells}
    total_failures = sum(failures.values())
    total_reps = cfg.replications * len(failures)
    print(f"study complete: {len(result.cells)} cells written to {args.out_dir}")
    if total_failures:
        print(f"warning: {total_failures} failed replications", file=sys.stderr)
        if total_failures > 0.1 * total_reps:
            return NUMERIC_EXIT
    return 0


def cmd_rcov(args) -> int:
    import os

    table = parse_price_csv(args.prices, fill=args.fill)
    returns = intraday_log_returns(table)
    rc = realized_cov_daily(returns, normalize=args.rc_normalize)
    os.makedirs(args.out_dir, exist_ok=True)
    write_rc_csv(rc, os.path.join(args.out_dir, "rc_series.csv"))
    write_stats_csv(rc, os.path.join(args.out_dir, "rc_stats.csv"))
    series, excluded = rc_to_spd_series(rc)
    series.to_csv(os.path.join(args.out_dir, "rc_spd_series.csv"))
    print(
        f"{len(rc.dates)} days -> {len(series)} strictly positive definite "
        f"({excluded} excluded)"
    )
    if args.chain:
        cfg = CvConfig(method="lscv", kernel="wishart")
        result = select_bandwidth(series, cfg)
        print(f"b_star = {result.bandwidth!r} (lag {result.lag})")
        if result.boundary:
            print("warning: optimum at the search boundary", file=sys.stderr)
        with open(os.path.join(args.out_dir, "cv_curve.csv"), "w") as fh:
            fh.write("b,criterion\n")
            for b, val in result.curve:
                fh.write(f"{b!r},{val!r}\n")
        rows, _ = density_grid(series, "wishart", result.bandwidth, args.rho, None, None, 40)
        _write_density_csv(rows, os.path.join(args.out_dir, "density_grid.csv"))
        print(f"chained outputs written to {args.out_dir}")
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "bandwidth": cmd_bandwidth,
    "density": cmd_density,
    "study": cmd_study,
    "rcov": cmd_rcov,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (DomainError, DimensionError, NumericError, ConfigError, ValueError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
