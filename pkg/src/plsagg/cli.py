"""Command-line front end.

Exit codes: 0 ok, 1 check failure, 2 input error, 3 config error.
Errors are reported on stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .aggregators import PenaltySpec, fit
from .checks import run_checks
from .core import DesignMatrix, InvalidInputError, PreconditionError, TargetVector
from .hardness import chi2_tail_bound, make_l_hard, make_ms_hard
from .harness import ExperimentConfig, psi_rate, run_experiment
from .oracles import ConvexSolverConfig, all_oracles, maurey_grid_oracle

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3
RATE_COLUMNS = ["n", "M"] + [f"{k}_{v}" for v in ("base", "tilde", "bar") for k in ("MS", "C", "L")]


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError(EXIT_CONFIG, "config must be a JSON object")
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_inputs(args) -> tuple[DesignMatrix, TargetVector]:
    if not args.design or not args.targets:
        raise CliError(EXIT_INPUT, "--design and --targets are required")
    try:
        design = DesignMatrix.from_csv(args.design)
        targets = TargetVector.from_csv(args.targets)
        if design.bound_inferred and targets.n == design.n:
            # an inferred L must also cover the known truth
            f_max = float(np.max(np.abs(targets.f_vals)))
            if f_max > design.bound_l:
                design = replace(design, bound_l=f_max, bound_inferred=True)
        targets.check_against(design)
    except InvalidInputError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    return design, targets


def _penalty(cfg: dict) -> PenaltySpec:
    spec = cfg.get("penalty", cfg)
    try:
        return PenaltySpec.from_dict({k: v for k, v in spec.items() if k not in ("solver",)})
    except (InvalidInputError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid penalty config: {exc}") from exc


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    spec = _penalty(cfg)
    design, targets = _load_inputs(args)
    solver = dict(cfg.get("solver", {}))
    try:
        res = fit(design, targets.y_vals, spec, **solver)
    except PreconditionError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    except TypeError as exc:
        raise CliError(EXIT_CONFIG, f"invalid solver options: {exc}") from exc
    out = _out_dir(args)
    _write_json(out / "fit.json", res.to_dict())
    _write_json(out / "resolved_config.json", {"penalty": spec.to_dict(), "solver": solver})
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load_config(args.config)
    design, targets = _load_inputs(args)
    try:
        c_cfg = ConvexSolverConfig(max_iters=int(cfg.get("max_iters", 100_000)),
                                   gap_tol=float(cfg.get("gap_tol", 1e-8)))
    except (InvalidInputError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    results = all_oracles(design, targets.f_vals, c_cfg, float(cfg.get("pinv_tol", 1e-10)))
    payload = [r.to_dict() for r in results.values()]
    if "grid_m" in cfg:
        payload.append(maurey_grid_oracle(design, targets.f_vals, int(cfg["grid_m"])).to_dict())
    out = _out_dir(args)
    _write_json(out / "oracles.json", payload)
    _write_json(out / "resolved_config.json", {"gap_tol": c_cfg.gap_tol, "max_iters": c_cfg.max_iters, **cfg})
    return EXIT_OK


def cmd_simulate(args) -> int:
    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except (InvalidInputError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid experiment config: {exc}") from exc
    result = run_experiment(cfg, threads=args.threads)
    out = _out_dir(args)
    if args.format == "json":
        _write_json(out / "summary.json", result.summary)
        _write_json(out / "replications.json", [r.__dict__ for r in result.records])
    else:
        (out / "summary.csv").write_text(result.summary_csv())
        (out / "replications.csv").write_text(result.records_csv())
    _write_json(out / "manifest.json", result.manifest())
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"expected comma-separated integers, got {text!r}") from exc
    if not vals or min(vals) < 1:
        raise CliError(EXIT_INPUT, f"expected positive integers, got {text!r}")
    return vals


def rate_table(ns: list[int], ms: list[int]) -> str:
    lines = [",".join(RATE_COLUMNS)]
    for n in ns:
        for m in ms:
            row = [str(n), str(m)]
            for variant in ("base", "tilde", "bar"):
                for kind in ("MS", "C", "L"):
                    row.append(repr(psi_rate(n, m, kind, variant)))
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_rates(args) -> int:
    cfg = _load_config(args.config)
    ns = _int_list(args.n) if args.n else [int(v) for v in cfg.get("n", [])]
    ms = _int_list(args.M) if args.M else [int(v) for v in cfg.get("M", [])]
    if not ns or not ms:
        raise CliError(EXIT_INPUT, "rates needs --n and --M lists")
    if min(ms) < 2:
        raise CliError(EXIT_INPUT, "M must be >= 2")
    table = rate_table(ns, ms)
    out = _out_dir(args)
    if args.format == "json":
        rows = [dict(zip(RATE_COLUMNS, line.split(","))) for line in table.splitlines()[1:]]
        _write_json(out / "rates.json", rows)
    else:
        (out / "rates.csv").write_text(table)
    return EXIT_OK


def cmd_hardness(args) -> int:
    cfg = _load_config(args.config)
    kind = cfg.get("kind", "MS-hard")
    try:
        n, m, sigma = int(cfg["n"]), int(cfg["M"]), float(cfg.get("sigma", 1.0))
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"hardness config needs n, M (and optional sigma): {exc}") from exc
    try:
        if kind == "MS-hard":
            inst = make_ms_hard(n, m, sigma)
        elif kind == "L-hard":
            inst = make_l_hard(n, m, sigma, cfg.get("target_distance"))
        else:
            raise CliError(EXIT_CONFIG, f"unknown hardness kind {kind!r}")
    except (InvalidInputError, PreconditionError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    inst.export(_out_dir(args))
    return EXIT_OK


def cmd_check(args) -> int:
    bound = chi2_tail_bound
    if args.inject_chi2_scale is not None:
        scale = args.inject_chi2_scale

        def bound(d, x):
            return math.exp(-scale * x**2 / (2.0 * (1.0 + x * math.sqrt(2.0 / d))))

    results = run_checks(chi2_bound=bound)
    for r in results:
        print(r.line())
    if args.out:
        _write_json(_out_dir(args) / "check_report.json", [r.__dict__ for r in results])
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=1)

    parser = argparse.ArgumentParser(prog="plsagg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, text in (("fit", cmd_fit, "fit an aggregate to design/target CSVs"),
                             ("oracle", cmd_oracle, "compute MS, C and L oracles for the true f")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--design", help="design CSV (header j0..j{M-1})")
        p.add_argument("--targets", help="target CSV (header f,y)")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo experiment")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("rates", parents=[common], help="tabulate aggregation rates")
    p.add_argument("--n", help="comma-separated sample sizes")
    p.add_argument("--M", help="comma-separated dictionary sizes")
    p.set_defaults(func=cmd_rates)
    p = sub.add_parser("hardness", parents=[common], help="export a hard instance")
    p.set_defaults(func=cmd_hardness)
    p = sub.add_parser("check", parents=[common], help="run the theory check battery")
    p.add_argument("--inject-chi2-scale", type=float, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check, out=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": str(exc), "exit_code": exc.code}), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
