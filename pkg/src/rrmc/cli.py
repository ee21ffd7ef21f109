"""`rr`: experiment runner emitting CSV.

Subcommands
    weights         extrapolation weight table (CSV rows r,alpha_r)
    noise-audit     empirical vs closed-form block covariances
    analytic        closed-form price of a payoff
    price           one combined-estimator run (one CSV row)
    sweep           grid of runs over orders and step counts
    table1          vanilla-call sweep R in {3,4}, n in {2,4,6,8,10}
    variance-ratio  consistent vs independent coupling variance
    plan            complexity-optimal (n, M) for a budget

Experiment rows share the schema
    experiment,R,n,M,scale,coupling,scheme,estimate,std_err,analytic,abs_err,seed,wall_ms

All randomness flows from --seed (default: $RR_SEED, else 0); substreams
are derived by labeled hashing, so identical invocations with equal
seeds write byte-identical CSV regardless of --workers.  Because of
that guarantee the wall_ms column is left empty unless --timing is
given; timings always go to stderr.  Options may also be supplied via
--config FILE containing flat key=value lines (flags win over the file).

Exit codes: 0 success, 1 configuration error, 2 numerical blow-up.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from fractions import Fraction
from typing import Optional

from .estimator import (
    EstimatorConfig,
    estimate,
    plan_budget,
    variance_ratio_experiment,
)
from .noise import (
    RandomSource,
    block_component_labels,
    build_schedule,
    empirical_block_covariance,
    overlap_oracle_matrix,
)
from .payoff import (
    PayoffSpec,
    analytic_reference,
    partial_lookback_call,
    up_and_out_call,
    vanilla_call,
)
from .scheme import BlowUpError, black_scholes
from .weights import HALF_ORDER, INTEGER, half_order_weights, standard_weights

SCHEMA = ["experiment", "R", "n", "M", "scale", "coupling", "scheme",
          "estimate", "std_err", "analytic", "abs_err", "seed", "wall_ms"]

TABLE1_ORDERS = (3, 4)
TABLE1_STEPS = (2, 4, 6, 8, 10)


class CliError(Exception):
    """Bad flags or config; maps to exit code 1."""


class Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise CliError(message)


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    return "%.17g" % float(value)


def _seed_default() -> int:
    raw = os.environ.get("RR_SEED", "")
    try:
        return int(raw) if raw else 0
    except ValueError:
        raise CliError(f"RR_SEED must be an integer, got {raw!r}")


def _add_common(p: Parser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (default: $RR_SEED, else 0)")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--config", default=None,
                   help="flat key=value defaults file; flags override")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel batch workers (results independent of this)")
    p.add_argument("--batch-size", type=int, default=None,
                   help="paths per batch substream (changing it changes the stream split)")
    p.add_argument("--timing", action="store_true", default=None,
                   help="fill the wall_ms column (breaks byte-identity across runs)")


def _add_model(p: Parser) -> None:
    p.add_argument("--S0", type=float, default=None, help="spot (default 100)")
    p.add_argument("--rate", type=float, default=None, help="risk-free rate (default 0.15)")
    p.add_argument("--sigma", type=float, default=None, help="volatility (default 1.0)")
    p.add_argument("--T", type=float, default=None, help="horizon in years (default 1.0)")


def _add_payoff(p: Parser) -> None:
    p.add_argument("--payoff", choices=["vanilla", "lookback", "up-out"], default=None,
                   help="payoff kind (default vanilla)")
    p.add_argument("--K", type=float, default=None, help="strike (default 100)")
    p.add_argument("--L", type=float, default=None, help="up-and-out barrier (default 300)")
    p.add_argument("--lam", type=float, default=None,
                   help="lookback fraction lambda (default 1.1)")


def _add_estimator(p: Parser, grid: bool = False) -> None:
    if grid:
        p.add_argument("--R-grid", dest="r_grid", default=None,
                       help="comma-separated extrapolation orders (default 3,4)")
        p.add_argument("--n-grid", dest="n_grid", default=None,
                       help="comma-separated macro step counts (default 2,4,6,8,10)")
    else:
        p.add_argument("--R", "--order", dest="order", type=int, default=None,
                       help="extrapolation order (default 3)")
        p.add_argument("--n", type=int, default=None, help="macro step count (default 10)")
    p.add_argument("--M", type=int, default=None, help="sample paths (default 100000)")
    p.add_argument("--scale", choices=["integer", "half"], default=None,
                   help="weak-error scale (default integer)")
    p.add_argument("--coupling", choices=["consistent", "independent"], default=None,
                   help="noise coupling across levels (default consistent)")
    p.add_argument("--scheme", choices=["discrete", "bridged"], default=None,
                   help="stepwise-constant or bridged-extrema scheme (default discrete)")
    p.add_argument("--schedule", choices=["sparing", "lazy"], default=None,
                   help="consistent-noise schedule (default sparing)")


DEFAULTS = {
    "seed": None,  # resolved via RR_SEED
    "out": "-",
    "workers": 1,
    "batch_size": 65536,
    "timing": False,
    "S0": 100.0,
    "rate": 0.15,
    "sigma": 1.0,
    "T": 1.0,
    "payoff": "vanilla",
    "K": 100.0,
    "L": 300.0,
    "lam": 1.1,
    "order": 3,
    "n": 10,
    "M": 100000,
    "scale": "integer",
    "coupling": "consistent",
    "scheme": "discrete",
    "schedule": "sparing",
    "r_grid": "3,4",
    "n_grid": "2,4,6,8,10",
    "samples": 100000,
    "kind": "sparing",
    "exact": False,
    "budget": None,
    "var": None,
    "ctilde": None,
}

_BOOL_KEYS = {"timing", "exact"}


def _load_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, val = line.partition("=")
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}")
    return values


_UNSET = object()


def _resolve(args: argparse.Namespace, key: str, default=_UNSET):
    """Flag value if given, else config-file value, else the default."""
    cli_value = getattr(args, key, None)
    if cli_value is not None:
        return cli_value
    fallback = DEFAULTS.get(key) if default is _UNSET else default
    file_values = getattr(args, "_file_values", {})
    if key in file_values:
        raw = file_values[key]
        if key in _BOOL_KEYS or isinstance(fallback, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(fallback, int) and not isinstance(fallback, bool):
            return int(raw)
        if isinstance(fallback, float):
            return float(raw)
        return raw
    if key == "seed":
        return _seed_default()
    return fallback


def _parse_grid(text: str, what: str) -> list:
    try:
        values = [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise CliError(f"bad {what} grid: {text!r}")
    if not values:
        raise CliError(f"empty {what} grid")
    return values


def _open_out(path: str):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _build_payoff(args) -> PayoffSpec:
    kind = _resolve(args, "payoff")
    rate = _resolve(args, "rate")
    horizon = _resolve(args, "T")
    scheme = _resolve(args, "scheme")
    source = "bridged" if scheme == "bridged" else "grid"
    if kind == "vanilla":
        return vanilla_call(_resolve(args, "K"), rate, horizon)
    if kind == "lookback":
        return partial_lookback_call(_resolve(args, "lam"), rate, horizon,
                                     extrema_source=source)
    return up_and_out_call(_resolve(args, "K"), _resolve(args, "L"), rate, horizon,
                           extrema_source=source)


def _build_config(args, order: int, n: int, samples: int,
                  payoff: Optional[PayoffSpec] = None) -> EstimatorConfig:
    model = black_scholes(_resolve(args, "rate"), _resolve(args, "sigma"),
                          _resolve(args, "S0"))
    scale = INTEGER if _resolve(args, "scale") == "integer" else HALF_ORDER
    try:
        return EstimatorConfig(
            model=model,
            payoff=payoff if payoff is not None else _build_payoff(args),
            order=order,
            macro_steps=n,
            samples=samples,
            scale=scale,
            coupling=_resolve(args, "coupling"),
            scheme=_resolve(args, "scheme"),
            seed=_resolve(args, "seed"),
            schedule_kind=_resolve(args, "schedule"),
            batch_size=_resolve(args, "batch_size"),
            workers=_resolve(args, "workers"),
        )
    except ValueError as exc:
        raise CliError(str(exc))


def _report_row(experiment: str, rep, timing: bool) -> list:
    return [
        experiment,
        str(rep.order),
        str(rep.macro_steps),
        str(rep.samples),
        rep.scale_kind,
        rep.coupling,
        rep.scheme,
        _fmt(rep.estimate),
        _fmt(rep.std_error),
        _fmt(rep.analytic),
        _fmt(abs(rep.error)) if rep.error is not None else "",
        str(rep.seed),
        str(int(round(rep.wall_time_s * 1000.0))) if timing else "",
    ]


def _note(experiment: str, rep) -> None:
    print(f"# {experiment}: R={rep.order} n={rep.macro_steps} M={rep.samples} "
          f"estimate={rep.estimate:.6f} std_err={rep.std_error:.6f} "
          f"wall_ms={int(round(rep.wall_time_s * 1000.0))}", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_weights(args) -> int:
    order = _resolve(args, "order")
    scale = _resolve(args, "scale")
    exact = _resolve(args, "exact")
    if exact and scale != "integer":
        raise CliError("--exact is available for the integer scale only")
    try:
        wv = standard_weights(order) if scale == "integer" else half_order_weights(order)
    except ValueError as exc:
        raise CliError(str(exc))
    fh, close = _open_out(_resolve(args, "out"))
    try:
        w = _writer(fh)
        w.writerow(["r", "alpha_r"])
        for r, a in enumerate(wv.weights, start=1):
            if exact:
                frac = Fraction(a)
                w.writerow([str(r), f"{frac.numerator}/{frac.denominator}"])
            else:
                w.writerow([str(r), _fmt(a)])
    finally:
        if close:
            fh.close()
    return 0


def _cmd_noise_audit(args) -> int:
    order = _resolve(args, "order")
    samples = _resolve(args, "samples")
    kind = _resolve(args, "kind")
    seed = _resolve(args, "seed")
    try:
        schedule = build_schedule(order, kind)
    except ValueError as exc:
        raise CliError(str(exc))
    source = RandomSource(seed, 0).substream("noise-audit", kind)
    empirical = empirical_block_covariance(schedule, source, samples)
    oracle = overlap_oracle_matrix(order)
    labels = block_component_labels(order)
    fh, close = _open_out(_resolve(args, "out"))
    try:
        w = _writer(fh)
        w.writerow(["matrix", "level_i", "index_i", "level_j", "index_j", "value"])
        for name, mat in (("empirical", empirical), ("oracle", oracle)):
            for i, (ri, ki) in enumerate(labels):
                for j, (rj, kj) in enumerate(labels):
                    value = mat[i, j] if mat.ndim == 2 else float(mat)
                    w.writerow([name, str(ri), str(ki), str(rj), str(kj), _fmt(value)])
    finally:
        if close:
            fh.close()
    return 0


def _cmd_analytic(args) -> int:
    payoff = _build_payoff(args)
    value = analytic_reference(payoff, spot=_resolve(args, "S0"),
                               vol=_resolve(args, "sigma"))
    if value is None:
        raise CliError(f"no closed form for payoff {payoff.kind!r}")
    fh, close = _open_out(_resolve(args, "out"))
    try:
        fh.write(_fmt(value) + "\n")
    finally:
        if close:
            fh.close()
    return 0


def _cmd_price(args) -> int:
    config = _build_config(args, _resolve(args, "order"), _resolve(args, "n"),
                           _resolve(args, "M"))
    rep = estimate(config, stream_labels=("price",))
    timing = _resolve(args, "timing")
    fh, close = _open_out(_resolve(args, "out"))
    try:
        w = _writer(fh)
        w.writerow(SCHEMA)
        w.writerow(_report_row("price", rep, timing))
    finally:
        if close:
            fh.close()
    _note("price", rep)
    return 0


def _cmd_sweep(args) -> int:
    orders = _parse_grid(_resolve(args, "r_grid"), "order")
    steps = _parse_grid(_resolve(args, "n_grid"), "step")
    samples = _resolve(args, "M")
    timing = _resolve(args, "timing")
    fh, close = _open_out(_resolve(args, "out"))
    try:
        w = _writer(fh)
        w.writerow(SCHEMA)
        for order in orders:
            for n in steps:
                config = _build_config(args, order, n, samples)
                rep = estimate(config, stream_labels=("sweep", order, n))
                w.writerow(_report_row("sweep", rep, timing))
                _note("sweep", rep)
    finally:
        if close:
            fh.close()
    return 0


def _cmd_table1(args) -> int:
    samples = _resolve(args, "M")
    timing = _resolve(args, "timing")
    fh, close = _open_out(_resolve(args, "out"))
    try:
        w = _writer(fh)
        w.writerow(SCHEMA)
        for order in TABLE1_ORDERS:
            for n in TABLE1_STEPS:
                config = _build_config(args, order, n, samples,
                                       payoff=vanilla_call(_resolve(args, "K"),
                                                           _resolve(args, "rate"),
                                                           _resolve(args, "T")))
                rep = estimate(config, stream_labels=("table1", order, n))
                w.writerow(_report_row("table1", rep, timing))
                _note("table1", rep)
    finally:
        if close:
            fh.close()
    return 0


def _cmd_variance_ratio(args) -> int:
    steps = _parse_grid(_resolve(args, "n_grid", default="50"), "step")
    config = _build_config(args, _resolve(args, "order", default=2), steps[0],
                           _resolve(args, "M"))
    rows = variance_ratio_experiment(config, steps)
    timing = _resolve(args, "timing")
    fh, close = _open_out(_resolve(args, "out"))
    try:
        w = _writer(fh)
        w.writerow(SCHEMA + ["variance", "variance_ratio"])
        for row in rows:
            for rep in (row["consistent"], row["independent"]):
                w.writerow(_report_row("variance-ratio", rep, timing)
                           + [_fmt(rep.variance), _fmt(row["variance_ratio"])])
                _note("variance-ratio", rep)
    finally:
        if close:
            fh.close()
    return 0


def _cmd_plan(args) -> int:
    budget = _resolve(args, "budget")
    var = _resolve(args, "var")
    ctilde = _resolve(args, "ctilde")
    if budget is None or var is None or ctilde is None:
        raise CliError("plan needs --budget, --var and --ctilde")
    try:
        plan = plan_budget(_resolve(args, "order"), float(budget), float(var),
                           float(ctilde))
    except ValueError as exc:
        raise CliError(str(exc))
    fh, close = _open_out(_resolve(args, "out"))
    try:
        w = _writer(fh)
        w.writerow(["order", "budget", "var", "ctilde", "n_star", "m_star",
                    "theta", "complexity"])
        w.writerow([str(plan.order), _fmt(plan.budget), _fmt(plan.variance_estimate),
                    _fmt(plan.c_tilde_estimate), str(plan.n_star), str(plan.m_star),
                    _fmt(plan.theta), str(plan.complexity)])
    finally:
        if close:
            fh.close()
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> Parser:
    parser = Parser(prog="rr", description=__doc__,
                    formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("weights", help="extrapolation weight table")
    p.add_argument("--order", "--R", dest="order", type=int, default=None,
                   help="extrapolation order (default 3)")
    p.add_argument("--scale", choices=["integer", "half"], default=None,
                   help="weak-error scale (default integer)")
    p.add_argument("--exact", action="store_true", default=None,
                   help="print exact rationals p/q (integer scale only)")
    _add_common(p)
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("noise-audit", help="block covariance: empirical vs oracle")
    p.add_argument("--order", "--R", dest="order", type=int, default=None,
                   help="extrapolation order (default 3)")
    p.add_argument("--samples", type=int, default=None,
                   help="blocks to sample (default 100000)")
    p.add_argument("--kind", choices=["sparing", "lazy"], default=None,
                   help="schedule kind (default sparing)")
    _add_common(p)
    p.set_defaults(func=_cmd_noise_audit)

    p = sub.add_parser("analytic", help="closed-form price")
    _add_payoff(p)
    _add_model(p)
    p.add_argument("--scheme", choices=["discrete", "bridged"], default=None,
                   help=argparse.SUPPRESS)  # accepted for symmetry, irrelevant here
    _add_common(p)
    p.set_defaults(func=_cmd_analytic)

    p = sub.add_parser("price", help="single combined-estimator run")
    _add_payoff(p)
    _add_model(p)
    _add_estimator(p)
    _add_common(p)
    p.set_defaults(func=_cmd_price)

    p = sub.add_parser("sweep", help="grid of runs over R and n")
    _add_payoff(p)
    _add_model(p)
    _add_estimator(p, grid=True)
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("table1", help="vanilla-call sweep R in {3,4}, n in {2..10}")
    _add_model(p)
    p.add_argument("--K", type=float, default=None, help="strike (default 100)")
    p.add_argument("--M", type=int, default=None, help="sample paths (default 100000)")
    p.add_argument("--coupling", choices=["consistent", "independent"], default=None)
    p.add_argument("--schedule", choices=["sparing", "lazy"], default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_table1)

    p = sub.add_parser("variance-ratio", help="coupling variance comparison")
    _add_payoff(p)
    _add_model(p)
    p.add_argument("--R", "--order", dest="order", type=int, default=None,
                   help="extrapolation order (default 2)")
    p.add_argument("--n-grid", dest="n_grid", default=None,
                   help="comma-separated macro step counts (default 50)")
    p.add_argument("--M", type=int, default=None, help="sample paths (default 100000)")
    p.add_argument("--scale", choices=["integer", "half"], default=None)
    p.add_argument("--scheme", choices=["discrete", "bridged"], default=None)
    p.add_argument("--schedule", choices=["sparing", "lazy"], default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_variance_ratio)

    p = sub.add_parser("plan", help="complexity-optimal (n, M) for a budget")
    p.add_argument("--order", "--R", dest="order", type=int, default=None,
                   help="extrapolation order (default 3)")
    p.add_argument("--budget", type=float, default=None, help="total unit Euler steps")
    p.add_argument("--var", type=float, default=None, help="Var f(X_T) estimate")
    p.add_argument("--ctilde", type=float, default=None, help="|c~_R| estimate")
    _add_common(p)
    p.set_defaults(func=_cmd_plan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config_path = getattr(args, "config", None)
        args._file_values = _load_config_file(config_path) if config_path else {}
        return args.func(args)
    except CliError as exc:
        print(f"rr: error: {exc}", file=sys.stderr)
        return 1
    except BlowUpError as exc:
        print(f"rr: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
