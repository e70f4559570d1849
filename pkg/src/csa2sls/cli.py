"""Command-line front end: ``csa2sls estimate`` and ``csa2sls montecarlo``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .amse import csa2sls
from .dataframe import build_model_frame, expand_varlist, load_csv
from .errors import Csa2slsError
from .estimators import EstimationResult, resolve_mode
from .montecarlo import McConfig, run_grid
from .subsets import DEFAULT_R, DEFAULT_SEED

log = logging.getLogger(__name__)

RULE = "-" * 78
TITLE = "Complete Subset Model Averaging 2SLS Regression"


@dataclass
class CliSpec:
    subcommand: str
    argv: list[str] = field(default_factory=list)
    data_path: str | None = None
    dep: str | None = None
    exog: str = ""
    endo: str = ""
    iv: str = ""
    noconstant: bool = False
    large: bool = False
    onestep: bool = False
    quiet: bool = False
    r: int = DEFAULT_R
    seed: int = DEFAULT_SEED
    json_out: str | None = None
    # montecarlo overrides
    K_grid: list[int] | None = None
    rho_grid: list[float] | None = None
    n: int | None = None
    reps: int | None = None
    out: str = "montecarlo.tsv"
    workers: int = 1


@dataclass
class StoredResults:
    N: int
    K: int
    rmse: float
    estimator: str
    cmd: str
    depvar: str
    cmdline: str
    k_opt: int
    b: dict[str, float]
    V: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "K": self.K,
            "rmse": self.rmse,
            "estimator": self.estimator,
            "cmd": self.cmd,
            "depvar": self.depvar,
            "cmdline": self.cmdline,
            "k_opt": self.k_opt,
            "b": self.b,
            "V": self.V,
        }


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csa2sls",
        description="Complete subset averaging 2SLS estimation and simulation.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    est = sub.add_parser("estimate", help="estimate a model from a CSV file")
    est.add_argument("--data", required=True, help="CSV file with a header row")
    est.add_argument("--dep", required=True, help="dependent variable")
    est.add_argument("--endo", required=True, nargs="+", help="endogenous regressor(s)")
    est.add_argument("--iv", required=True, nargs="+", help="excluded instruments; ranges like z1-z14 allowed")
    est.add_argument("--exog", nargs="*", default=[], help="included exogenous regressors")
    est.add_argument("--noconstant", action="store_true", help="omit the intercept everywhere")
    est.add_argument("--large", action="store_true", help="never form the N x N averaged projector")
    est.add_argument("--onestep", action="store_true", help="one-step preliminary estimator (default: Mallows)")
    est.add_argument("--quiet", action="store_true", help="suppress the printed table")
    est.add_argument("--r", type=_positive_int, default=DEFAULT_R, help="max subsets per k before sampling")
    est.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help="subset-sampling seed")
    est.add_argument("--json", dest="json_out", help="write stored results as JSON")

    mc = sub.add_parser("montecarlo", help="run the simulation grid and write a TSV")
    mc.add_argument("--K", dest="K_grid", type=_positive_int, nargs="+", help="instrument counts")
    mc.add_argument("--rho", dest="rho_grid", type=float, nargs="+", help="instrument correlations")
    mc.add_argument("--n", type=_positive_int, help="sample size")
    mc.add_argument("--reps", type=_positive_int, help="replications per cell")
    mc.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    mc.add_argument("--r", type=_positive_int, default=DEFAULT_R)
    mc.add_argument("--onestep", action="store_true")
    mc.add_argument("--large", action="store_true")
    mc.add_argument("--workers", type=_positive_int, default=1)
    mc.add_argument("--out", default="montecarlo.tsv", help="output TSV path")
    mc.add_argument("--quiet", action="store_true")
    return parser


def parse_args(argv) -> CliSpec:
    argv = list(argv)
    ns = build_parser().parse_args(argv)
    spec = CliSpec(subcommand=ns.subcommand, argv=argv, seed=ns.seed, r=ns.r,
                   onestep=ns.onestep, large=ns.large, quiet=ns.quiet)
    if ns.subcommand == "estimate":
        spec.data_path = ns.data
        spec.dep = ns.dep
        spec.endo = " ".join(ns.endo)
        spec.iv = " ".join(ns.iv)
        spec.exog = " ".join(ns.exog)
        spec.noconstant = ns.noconstant
        spec.json_out = ns.json_out
    else:
        spec.K_grid = ns.K_grid
        spec.rho_grid = ns.rho_grid
        spec.n = ns.n
        spec.reps = ns.reps
        spec.out = ns.out
        spec.workers = ns.workers
    return spec


def _num(x: float, width: int = 10) -> str:
    """Stata-like compact number: up to 7 significant digits, no leading zero.

    Precision drops below 7 digits only when needed to fit ``width``.
    """
    if not np.isfinite(x):
        return "."
    for sig in range(7, 0, -1):
        s = f"{x:.{sig}g}"
        if "e" not in s:
            if s.startswith("0."):
                s = s[1:]
            elif s.startswith("-0."):
                s = "-" + s[2:]
        if len(s) <= width:
            break
    return s


def _wrap(label: str, names) -> list[str]:
    lines, current = [], label
    for name in names:
        if len(current) + len(name) + 1 > 78 and current != label:
            lines.append(current)
            current = ""
        current += f"{name} "
    lines.append(current)
    return lines


def render_report(result: EstimationResult, depvar: str, instrumented, instruments) -> str:
    head_w = 53
    out = [
        "",
        f"{TITLE:<{head_w}}Number of obs = {result.N}",
        f"{'':<{head_w}}Number of IVs = {result.K}",
        f"{'':<{head_w}}Root MSE      = {_num(result.rmse)}",
        "",
        "-" * 13 + "+" + "-" * 64,
        f"{depvar[:12]:>12} |{'Coef.':>11}{'Std. Err.':>12}{'z':>7}{'P>|z|':>9}{'[95% Conf. Interval]':>25}",
        "-" * 13 + "+" + "-" * 64,
    ]
    for j, name in enumerate(result.names):
        out.append(
            f"{name[:12]:>12} |"
            f"{_num(result.b[j]):>11}"
            f"{_num(result.se[j]):>11}"
            f"{result.z[j]:>9.2f}"
            f"{result.p[j]:>8.3f}"
            f"{_num(result.ci_low[j]):>13}"
            f"{_num(result.ci_high[j]):>12}"
        )
    out.append(RULE)
    out.extend(_wrap("Instrumented : ", instrumented))
    out.extend(_wrap("Instruments  : ", instruments))
    out.append(f"optimal k    : {result.k_opt}")
    out.append(RULE)
    return "\n".join(out) + "\n"


def stored_results(result: EstimationResult, spec: CliSpec, depvar: str) -> StoredResults:
    names = result.names
    return StoredResults(
        N=result.N,
        K=result.K,
        rmse=float(result.rmse),
        estimator="onestep" if spec.onestep else "mallows",
        cmd="csa2sls",
        depvar=depvar,
        cmdline=" ".join(spec.argv),
        k_opt=int(result.k_opt),
        b={name: float(v) for name, v in zip(names, result.b)},
        V={ri: {cj: float(result.V[i, j]) for j, cj in enumerate(names)} for i, ri in enumerate(names)},
    )


def emit_json(stored: StoredResults, path) -> None:
    with Path(path).open("w", newline="\n") as fh:
        json.dump(stored.to_dict(), fh, indent=2)
        fh.write("\n")


def run_estimate(spec: CliSpec, stdout=None):
    stdout = stdout or sys.stdout
    table = load_csv(spec.data_path)
    names = table.column_names
    endo = expand_varlist(spec.endo, names)
    exog = expand_varlist(spec.exog, names) if spec.exog.strip() else []
    iv = expand_varlist(spec.iv, names)
    [dep] = expand_varlist(spec.dep, names)
    frame = build_model_frame(table, dep, exog, endo, iv, constant=not spec.noconstant)
    if frame.n_dropped:
        log.info("dropped %d observations with missing values", frame.n_dropped)
    result = csa2sls(
        frame,
        prelim_mode="onestep" if spec.onestep else "mallows",
        r=spec.r,
        seed=spec.seed,
        proj_mode=resolve_mode(frame, large=spec.large),
    )
    stored = stored_results(result, spec, dep)
    if not spec.quiet:
        stdout.write(render_report(result, dep, endo, iv))
    if spec.json_out:
        emit_json(stored, spec.json_out)
    return result, stored


def run_montecarlo(spec: CliSpec, stdout=None):
    stdout = stdout or sys.stdout
    overrides = dict(
        seed=spec.seed,
        r=spec.r,
        prelim_mode="onestep" if spec.onestep else "mallows",
        proj_mode="streaming" if spec.large else None,
    )
    if spec.K_grid:
        overrides["K_grid"] = tuple(spec.K_grid)
    if spec.rho_grid:
        overrides["rho_grid"] = tuple(spec.rho_grid)
    if spec.n is not None:
        overrides["n"] = spec.n
    if spec.reps is not None:
        overrides["reps"] = spec.reps
    config = McConfig(**overrides)

    def report(cell):
        if spec.quiet:
            return
        parts = [f"K={cell.K:<3d} rho={cell.rho:<4g}"]
        for name, s in cell.summaries.items():
            parts.append(f"{name}: bias={s.bias:+.4f} mse={s.mse:.4f} fail={s.failures}")
        stdout.write("  ".join(parts) + "\n")

    cells = run_grid(config, spec.out, workers=spec.workers, progress=report)
    return cells


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    spec = parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if spec.subcommand == "estimate":
            run_estimate(spec)
        else:
            run_montecarlo(spec)
    except (Csa2slsError, ValueError, OSError) as exc:
        print(f"csa2sls: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
