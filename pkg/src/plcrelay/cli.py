"""Command-line entry point.

Exit status: 0 on success, 1 on invalid input, 2 when a numerical routine
fails to converge (the result is still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .experiments import (ValidationError, list_presets, load_mapping, parse_assignments,
                          preset_mapping, run_experiment, spec_from_mapping)
from .poweropt import AllocationProblem, optimize_allocation
from .qapprox import Target, fit_gaussian_sum, table1_constants

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p, oracle=True):
    p.add_argument("--config", help="JSON file of configuration keys")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one key (value parsed as JSON when possible)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    p.add_argument("--seed", type=int, help="Monte Carlo seed")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--fit", choices=("table1", "fitted"), help="Gaussian-sum constants to use")
    p.add_argument("--workers", type=int, help="threads for sweep points")
    if oracle:
        p.add_argument("--no-oracle", action="store_true", help="skip the Monte Carlo columns")


def _metric_args(p):
    p.add_argument("--metric", action="append", dest="metrics",
                   help="outage, capacity, ber or usage (repeatable)")
    p.add_argument("--strategy", action="append", dest="strategies",
                   help="idf, isdf, df or direct (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plcrelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analytic", help="closed-form metrics at one operating point")
    _common(p, oracle=False)
    _metric_args(p)

    p = sub.add_parser("simulate", help="Monte Carlo metrics at one operating point")
    _common(p, oracle=False)
    _metric_args(p)

    p = sub.add_parser("sweep", help="closed form and Monte Carlo over a parameter grid")
    _common(p)
    _metric_args(p)
    p.add_argument("--param", help="swept configuration key (default p_t_db)")
    p.add_argument("--values", help="comma list, or start:stop:step inclusive")

    p = sub.add_parser("fit-q", help="fit a Gaussian sum to Q(x) or Q(exp(x))")
    p.add_argument("--target", choices=[t.value for t in Target], default="Q")
    p.add_argument("--terms", type=int, default=7)
    p.add_argument("--domain", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--grid", type=int, default=1001)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the fit record (JSON) here")

    p = sub.add_parser("optimize-power", help="outage-minimising source power fraction")
    _common(p, oracle=False)

    p = sub.add_parser("reproduce", help="run a bundled figure preset")
    p.add_argument("figure", help="preset name, see list-presets")
    _common(p)

    sub.add_parser("list-presets", help="show bundled presets")
    return parser


def _parse_values(text: str) -> list:
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValidationError("range must be start:stop:step with step > 0")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        if n < 0:
            raise ValidationError("empty range")
        return [round(start + k * step, 12) for k in range(n + 1)]
    try:
        return [json.loads(x) for x in text.split(",") if x.strip()]
    except json.JSONDecodeError as exc:
        raise ValidationError(f"bad value list {text!r}") from exc


def _mapping(args, base: dict | None = None) -> dict:
    data = dict(base or {})
    if getattr(args, "config", None):
        data.update(load_mapping(args.config))
    data.update(parse_assignments(args.set))
    for key in ("trials", "seed", "fit", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "no_oracle", False):
        data["oracle"] = False
    if getattr(args, "metrics", None):
        data["metrics"] = args.metrics
    if getattr(args, "strategies", None):
        data["strategies"] = args.strategies
    return data


def _sci(x: float) -> str:
    """Short scientific notation, 7.264e-4 rather than 7.264e-04."""
    mant, exp = f"{x:.3e}".split("e")
    return f"{mant}e{int(exp)}"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_point(args, oracle: bool, keep: str) -> int:
    data = _mapping(args)
    data.setdefault("metrics", ["outage", "capacity", "ber", "usage"])
    data.update(oracle=oracle, sweep_param="p_t_db")
    data.pop("sweep_values", None)
    table = run_experiment(spec_from_mapping(data))
    k = table.columns.index("method")
    table.rows = [r for r in table.rows if r[k] == keep]
    _emit(table.dumps(args.format), args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    data = _mapping(args)
    if args.param:
        data["sweep_param"] = args.param
    if args.values:
        data["sweep_values"] = _parse_values(args.values)
    _emit(run_experiment(spec_from_mapping(data)).dumps(args.format), args.out)
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    spec = spec_from_mapping(_mapping(args, preset_mapping(args.figure)))
    _emit(run_experiment(spec).dumps(args.format), args.out)
    return EXIT_OK


def _cmd_fit(args) -> int:
    target = Target(args.target)
    try:
        fit = fit_gaussian_sum(target, n_terms=args.terms, domain=args.domain, grid=args.grid,
                               restarts=args.restarts, seed=args.seed)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    ref = table1_constants(target)
    print(f"target: {target.value}  terms: {fit.n_terms}  domain: [{fit.domain[0]}, {fit.domain[1]}]")
    print(f"rmse: {fit.rmse:.4e}  sse: {fit.sse:.4e}  iterations: {fit.iterations}  "
          f"converged: {fit.converged}")
    print(f"paper: {_sci(ref.rmse)} (rmse), {_sci(ref.sse)} (sse)")
    if args.out:
        fit.save(args.out)
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _cmd_optimize(args) -> int:
    cfg = spec_from_mapping(_mapping(args)).config
    res = optimize_allocation(AllocationProblem.from_config(cfg))
    rec = dataclasses.asdict(res)
    if args.format == "json":
        text = json.dumps(rec, indent=1, sort_keys=True) + "\n"
    else:
        text = ",".join(rec) + "\n" + ",".join(repr(v) for v in rec.values()) + "\n"
    _emit(text, args.out)
    if res.method == "bisection" and not res.derivative_residual < 1e-8:
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_list() -> int:
    for name in list_presets():
        print(f"{name:8s} {preset_mapping(name).get('description', '')}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analytic":
            return _cmd_point(args, oracle=False, keep="closed_form")
        if args.command == "simulate":
            return _cmd_point(args, oracle=True, keep="monte_carlo")
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "reproduce":
            return _cmd_reproduce(args)
        if args.command == "fit-q":
            return _cmd_fit(args)
        if args.command == "optimize-power":
            return _cmd_optimize(args)
        return _cmd_list()
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
