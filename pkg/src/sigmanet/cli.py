"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 budget failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .activation import C_BOUNDS, Sigma, SigmaParams, format_real, sigma_table
from .enumeration import MonicPoly, TreeIndex, index_to_poly, parse_int, poly_to_address
from .poly_fit import FitError, fit_polynomial, sigma_rep, term_grid_error
from .tlfn import BudgetError, build_network, load_model, sup_error

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3

# sweeps behind the three published plots; the variant sets are our choice
FIGURES = {
    "1": {"range": (0.0, 50.0), "variants": [(3.0, 0.5)]},
    "2": {"range": (0.0, 100.0), "variants": [(1.0, lam) for lam in (0.5, 0.25, 0.1, 0.05)]},
    "3": {"range": (0.0, 100.0), "variants": [(s, 0.75) for s in (1.0, 2.0, 3.0, 5.0)]},
}


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class Target:
    """A d-variate function on rows of an ``(N, d)`` array."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    dims: int | None = None

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.fn(X), dtype=float)

    def univariate(self) -> Callable[[np.ndarray], np.ndarray]:
        return lambda xs: self(np.asarray(xs, dtype=float).reshape(-1, 1)).reshape(np.shape(xs))


def _csv_target(path: str) -> Target:
    """Samples on a tensor grid, one row ``x_1, ..., x_d, value`` per point, linearly interpolated."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as err:
        raise UsageError(f"cannot read samples from {path}: {err}") from err
    if data.shape[1] < 2:
        raise UsageError("sample file needs at least one coordinate column and one value column")
    d = data.shape[1] - 1
    axes = [np.unique(data[:, q]) for q in range(d)]
    if math.prod(len(ax) for ax in axes) != data.shape[0]:
        raise UsageError("samples must cover a full tensor grid")
    values = np.full([len(ax) for ax in axes], np.nan)
    idx = tuple(np.searchsorted(axes[q], data[:, q]) for q in range(d))
    values[idx] = data[:, -1]
    interp = RegularGridInterpolator(axes, values, bounds_error=False, fill_value=None)
    return Target(f"csv:{path}", lambda X: interp(X), d)


def make_target(name: str) -> Target:
    if name.startswith("const:"):
        try:
            c = float(name.split(":", 1)[1])
        except ValueError as err:
            raise UsageError(f"bad constant in {name!r}") from err
        return Target(name, lambda X: np.full(X.shape[0], c))
    if name.startswith("csv:"):
        return _csv_target(name.split(":", 1)[1])
    builtins = {
        "identity": Target("identity", lambda X: X[:, 0], 1),
        "abs-shift": Target("abs-shift", lambda X: np.abs(X[:, 0] - 0.5), 1),
        "sin-pi": Target("sin-pi", lambda X: np.sin(np.pi * X[:, 0]), 1),
        "mean2": Target("mean2", lambda X: X.mean(axis=1)),
        "product2": Target("product2", lambda X: X.prod(axis=1)),
    }
    if name not in builtins:
        raise UsageError(f"unknown function {name!r}; choose from {', '.join(builtins)}, const:<c>, csv:<path>")
    return builtins[name]


def _params(args) -> SigmaParams:
    try:
        return SigmaParams(args.s, args.lam, args.precision, args.c_bound)
    except ValueError as err:
        raise UsageError(str(err)) from err


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _num(ctx, x) -> str:
    return format_real(ctx, x)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# subcommands


def cmd_sigma_table(args) -> int:
    params = _params(args)
    try:
        rows = sigma_table(params, args.start, args.end, args.step)
    except ValueError as err:
        raise UsageError(str(err)) from err
    ctx = Sigma.for_params(params).ctx
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "sigma"])
    for t, v in rows:
        w.writerow([repr(float(t)), _num(ctx, v)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_figure(args) -> int:
    fig = FIGURES[args.which]
    lo, hi = fig["range"]
    if not args.step > 0:
        raise UsageError("step must be positive")
    count = int(math.floor((hi - lo) / args.step + 1e-9)) + 1
    ts = [lo + i * args.step for i in range(count)]
    sigmas = [Sigma.for_params(SigmaParams(s, lam, args.precision, args.c_bound)) for s, lam in fig["variants"]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"sigma[s={s:g};lambda={lam:g}]" for s, lam in fig["variants"]])
    for t in ts:
        w.writerow([repr(float(t))] + [_num(sig.ctx, sig(t)) for sig in sigmas])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_enum(args) -> int:
    try:
        if args.direction == "poly-to-index":
            idx = poly_to_address(MonicPoly.parse(args.payload))
            text = idx.decimal() if idx.is_materializable(args.max_bits) else json.dumps(idx.to_json())
        else:
            try:
                n = TreeIndex.from_json(json.loads(args.payload))
            except (json.JSONDecodeError, TypeError, AttributeError):
                n = parse_int(args.payload)
            text = str(index_to_poly(n))
    except (ValueError, ZeroDivisionError) as err:
        raise UsageError(f"cannot parse {args.payload!r}: {err}") from err
    _emit(text + "\n", args.out)
    return EXIT_OK


def cmd_fit1d(args) -> int:
    params = _params(args)
    target = make_target(args.function)
    if target.dims not in (None, 1):
        raise UsageError(f"{target.name} is not univariate")
    g = target.univariate()
    try:
        fit = fit_polynomial(g, args.eps, max_degree=args.max_degree)
    except FitError as err:
        sys.stderr.write(f"budget failure: {err}\n")
        return EXIT_BUDGET
    term = sigma_rep(fit, params)
    err = term_grid_error(term, g)
    report = {
        "function": target.name,
        "eps": repr(float(args.eps)),
        "method": fit.method,
        "degree": fit.degree,
        "poly_error": repr(float(fit.sup_error)),
        "sigma_error": repr(err),
        "index_bits": term.index.bit_length(),
        "precision": term.params.precision,
        "within_budget": err < args.eps,
    }
    if args.out:
        _emit(_dump(term.to_json()), args.out)
    sys.stdout.write(_dump(report))
    return EXIT_OK if err < args.eps else EXIT_BUDGET


def cmd_build(args) -> int:
    params = _params(args)
    target = make_target(args.function)
    if target.dims is not None and target.dims != args.d:
        raise UsageError(f"{target.name} takes {target.dims} variable(s), got --d {args.d}")
    try:
        model, report = build_network(target, args.d, args.eps, params, a=args.a, b=args.b, grid=args.grid)
    except BudgetError as err:
        sys.stderr.write(f"budget failure: {err}\n")
        return EXIT_BUDGET
    except ValueError as err:
        raise UsageError(str(err)) from err
    _emit(model.dumps() + "\n", args.out)
    text = _dump({"function": target.name, **report.to_json()})
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    if args.out:
        sys.stdout.write(text)
    return EXIT_OK if report.within_budget else EXIT_VERIFY


def cmd_verify(args) -> int:
    if args.grid < 2:
        raise UsageError("grid must have at least 2 points per axis")
    try:
        with open(args.model, encoding="utf-8") as fh:
            model = load_model(fh.read())
    except (OSError, ValueError, KeyError) as err:
        raise UsageError(f"cannot load model {args.model}: {err}") from err
    target = make_target(args.function)
    err = sup_error(model, target, args.grid)
    ok = err <= model.eps
    sys.stdout.write(_dump({"function": target.name, "grid": args.grid, "eps": repr(model.eps),
                            "measured_error": repr(err), "ok": ok}))
    return EXIT_OK if ok else EXIT_VERIFY


# --------------------------------------------------------------------------
# parser


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from err
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--s", type=_positive_float, default=3.0, help="interval length s (default 3)")
    common.add_argument("--lambda", dest="lam", type=_positive_float, default=0.5,
                        help="monotonicity tolerance lambda (default 0.5)")
    common.add_argument("--precision", type=int, default=53, help="working precision in bits (default 53)")
    common.add_argument("--c-bound", choices=C_BOUNDS, default="coefficient",
                        help="derivative bound used for transition widths (default coefficient)")
    common.add_argument("--out", help="output file (default stdout)")

    parser = argparse.ArgumentParser(prog="sigmanet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sigma-table", parents=[common], help="CSV of t, sigma(t)")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--end", type=float, default=49.0)
    p.add_argument("--step", type=float, default=1.0)
    p.set_defaults(run=cmd_sigma_table)

    p = sub.add_parser("figure", parents=[common], help="CSV data for the sigma plots")
    p.add_argument("--which", choices=sorted(FIGURES), default="1")
    p.add_argument("--step", type=float, default=0.1)
    p.set_defaults(run=cmd_figure)

    p = sub.add_parser("enum", parents=[common], help="polynomial <-> index")
    p.add_argument("direction", choices=["poly-to-index", "index-to-poly"])
    p.add_argument("payload", help="polynomial like 'x^2 - 1/2 x' or a decimal index")
    p.add_argument("--max-bits", type=int, default=1 << 16, help="largest index printed in decimal")
    p.set_defaults(run=cmd_enum)

    p = sub.add_parser("fit1d", parents=[common], help="represent a univariate function by one sigma term")
    p.add_argument("--function", default="sin-pi")
    p.add_argument("--eps", type=_positive_float, default=1e-2)
    p.add_argument("--max-degree", type=int, default=64)
    p.set_defaults(run=cmd_fit1d)

    p = sub.add_parser("build", parents=[common], help="build the two-hidden-layer network")
    p.add_argument("--function", default="mean2")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--eps", type=_positive_float, default=0.2)
    p.add_argument("--a", type=float, default=0.0, help="box lower end (default 0)")
    p.add_argument("--b", type=float, default=1.0, help="box upper end, at most a + s (default 1)")
    p.add_argument("--grid", type=int, default=33, help="verification points per axis (default 33)")
    p.add_argument("--report", help="also write the build report here")
    p.set_defaults(run=cmd_build)

    p = sub.add_parser("verify", parents=[common], help="measure a saved model against a function")
    p.add_argument("model")
    p.add_argument("--function", default="mean2")
    p.add_argument("--grid", type=int, default=33)
    p.set_defaults(run=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.run(args)
    except UsageError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
