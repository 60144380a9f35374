"""``ren-reduce`` command-line front end.

Exit codes: 0 success, 1 verification failed, 2 command-specific failure
(generation, missing certificate, reduction, dimension mismatch, solver),
3 argument or I/O error.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .certify import all_passed, verify
from .errors import (
    CertificateError,
    GenerationError,
    ReductionError,
    SchemaError,
    ShapeError,
    WellPosednessError,
)
from .lti import check_optimality, extract_lti
from .model import Activation, load_package, save_package
from .reduce import isrk_reduce
from .simulate import (
    error_measure,
    read_inputs_csv,
    rollout,
    white_noise_inputs,
    write_trace_csv,
)
from .synth import generate

EXIT_OK, EXIT_FAIL, EXIT_ERROR, EXIT_USAGE = 0, 1, 2, 3
SWEEP_HEADER = ("n_hat", "h2_error", "C_percent", "beta_reduced", "beta_full")

log = logging.getLogger("renreduce")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sig4(x):
    return f"{x:.4g}"


def _emit(args, payload, human):
    if args.json:
        print(json.dumps(payload, indent=1, default=float))
    else:
        print(human)


def _load(path):
    try:
        return load_package(path)
    except (OSError, SchemaError) as exc:
        raise UsageError(str(exc)) from None


def _save(pkg, path):
    try:
        save_package(pkg, path)
    except OSError as exc:
        raise UsageError(str(exc)) from None


def parse_orders(text):
    """``"1:5,10,20"`` -> ``[1, 2, 3, 4, 5, 10, 20]`` (sorted, unique)."""
    orders = set()
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        try:
            if ":" in part:
                lo, hi = (int(s) for s in part.split(":"))
                if lo > hi:
                    raise ValueError
                orders.update(range(lo, hi + 1))
            else:
                orders.add(int(part))
        except ValueError:
            raise UsageError(f"bad order specification {part!r}") from None
    if not orders:
        raise UsageError("empty order list")
    if min(orders) < 1:
        raise UsageError("orders must be positive")
    return sorted(orders)


def _worker_count(jobs):
    try:
        cap = int(os.environ.get("REN_REDUCE_THREADS", "0"))
    except ValueError:
        raise UsageError("REN_REDUCE_THREADS must be an integer") from None
    if cap < 0:
        raise UsageError("REN_REDUCE_THREADS must be >= 0")
    cap = cap or os.cpu_count() or 1
    return max(1, min(cap, jobs))


# --- commands ----------------------------------------------------------------

def cmd_generate(args):
    try:
        pkg = generate(args.n, args.q, args.m, args.p, gamma=args.gamma,
                       alpha_bar=args.alpha_bar, seed=args.seed,
                       lower_triangular_d11=args.lower_triangular_d11,
                       activation=Activation(args.activation))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _save(pkg, args.output)
    meta = pkg.metadata
    _emit(args, {"output": args.output, **meta},
          f"wrote {args.output}: n={args.n} q={args.q} s={meta['coupling_scale']:g} "
          f"(seed {args.seed})")
    return EXIT_OK


def cmd_verify(args):
    pkg = _load(args.file)
    try:
        reports = verify(pkg, args.margin, relative=args.relative)
    except CertificateError as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    ok = all_passed(reports)
    print(json.dumps({"passed": ok, "reports": [r.to_dict() for r in reports]}, indent=1))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_reduce(args):
    pkg = _load(args.file)
    n = pkg.model.n
    if not 1 <= args.order <= n:
        raise UsageError(f"--order must lie in [1, {n}], got {args.order}")
    if args.restarts < 1 or args.max_iter < 1 or args.tol <= 0:
        raise UsageError("--restarts and --max-iter must be positive and --tol > 0")
    try:
        red, hist = isrk_reduce(pkg, args.order, restarts=args.restarts, tol=args.tol,
                                max_iter=args.max_iter, seed=args.seed)
    except (ReductionError, CertificateError) as exc:
        print(f"reduction failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _save(red, args.output)
    if args.history:
        try:
            with open(args.history, "w", newline="") as fh:
                hist.to_csv(fh)
        except OSError as exc:
            raise UsageError(str(exc)) from None
    opt = check_optimality(extract_lti(pkg.model), extract_lti(red.model), tol=args.tol)
    summary = opt.summary()
    payload = {
        "output": args.output,
        "n_hat": args.order,
        "h2_error": hist.best_h2,
        "relative_h2_error": hist.best_relative_h2,
        "best_restart": hist.best_restart,
        "best_iter": hist.best_iter,
        "converged_restarts": sum(r.converged for r in hist.restarts),
        "b_conditions_hold": summary["b_ok"],
        "optimality": summary,
    }
    _emit(args, payload,
          f"h2 error {hist.best_h2:.6e} (relative {hist.best_relative_h2:.4g}), "
          f"b-conditions {'hold' if summary['b_ok'] else 'do not hold'} at tol {args.tol:g} "
          f"(max residual {summary['b_max']:.2e})")
    return EXIT_OK


def _evaluate(full, red, n_inputs, horizon, seed):
    U = white_noise_inputs(n_inputs, horizon, full.model.m, seed)
    return error_measure(full, red, U)


def cmd_evaluate(args):
    full, red = _load(args.full), _load(args.reduced)
    if args.inputs < 1 or args.horizon < 1:
        raise UsageError("--inputs and --horizon must be positive")
    try:
        report = _evaluate(full, red, args.inputs, args.horizon, args.seed)
    except ShapeError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_ERROR
    doc = report.to_dict()
    if args.output:
        try:
            Path(args.output).write_text(json.dumps(doc, indent=1) + "\n")
        except OSError as exc:
            raise UsageError(str(exc)) from None
    if args.json:
        print(json.dumps(doc, indent=1))
    else:
        print(",".join([str(red.model.n), _sig4(report.c_mean), _sig4(report.beta_reduced),
                        _sig4(report.beta_full), "" if report.gamma is None else _sig4(report.gamma)]))
    return EXIT_OK


def _sweep_one(pkg, order, args):
    red, hist = isrk_reduce(pkg, order, restarts=args.restarts, tol=args.tol,
                            max_iter=args.max_iter, seed=(args.seed, order))
    report = _evaluate(pkg, red, args.inputs, args.horizon, args.seed)
    return order, red, hist, report


def cmd_sweep(args):
    pkg = _load(args.file)
    orders = parse_orders(args.orders)
    if max(orders) > pkg.model.n:
        raise UsageError(f"orders must not exceed n={pkg.model.n}")
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(str(exc)) from None

    workers = _worker_count(len(orders))
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                results = list(ex.map(_sweep_one, [pkg] * len(orders), orders, [args] * len(orders)))
        else:
            results = [_sweep_one(pkg, k, args) for k in orders]
    except ReductionError as exc:
        print(f"reduction failed: {exc}", file=sys.stderr)
        return EXIT_ERROR

    rows = []
    for order, red, hist, report in results:
        save_package(red, out / f"reduced_{order}.json")
        with open(out / f"history_{order}.csv", "w", newline="") as fh:
            hist.to_csv(fh)
        rows.append({"n_hat": order, "h2_error": hist.best_h2, "C_percent": report.c_mean,
                     "beta_reduced": report.beta_reduced, "beta_full": report.beta_full})
    lines = [",".join(SWEEP_HEADER)]
    lines += [",".join(repr(float(r[k])) if k != "n_hat" else str(r[k]) for k in SWEEP_HEADER)
              for r in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    table = [f"{'n_hat':>6} {'h2_error':>12} {'C_%':>9} {'beta_red':>9} {'beta_full':>9}"]
    table += [f"{r['n_hat']:>6} {r['h2_error']:>12.5e} {_sig4(r['C_percent']):>9} "
              f"{_sig4(r['beta_reduced']):>9} {_sig4(r['beta_full']):>9}" for r in rows]
    _emit(args, rows, "\n".join(table))
    return EXIT_OK


def _read_x0(path, n):
    try:
        x0 = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
    except (OSError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    if x0.size != n:
        raise UsageError(f"{path}: expected {n} state values, got {x0.size}")
    return x0


def cmd_simulate(args):
    pkg = _load(args.file)
    model = pkg.model
    try:
        u = read_inputs_csv(args.input, m=model.m)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    x0 = np.zeros(model.n) if args.x0 is None else _read_x0(args.x0, model.n)
    try:
        trace = rollout(model, x0, u)
    except WellPosednessError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        write_trace_csv(args.output, trace)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    res = float(trace.residuals.max()) if trace.residuals.size else 0.0
    _emit(args, {"output": args.output, "steps": int(u.shape[0]), "max_residual": res},
          f"wrote {u.shape[0]} steps to {args.output} (max solver residual {res:.2e})")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="ren-reduce", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="draw a certified random REN")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--q", type=int, default=100)
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--p", type=int, default=1)
    g.add_argument("--gamma", type=float, default=2.0)
    g.add_argument("--alpha-bar", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lower-triangular-d11", action="store_true")
    g.add_argument("--activation", choices=[a.value for a in Activation], default="relu")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("verify", parents=[common], help="check the certificate LMIs")
    v.add_argument("file")
    v.add_argument("--margin", type=float, default=0.0)
    v.add_argument("--relative", action="store_true", help="scale the margin by ||LMI||_F")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("reduce", parents=[common], help="certificate-preserving reduction")
    r.add_argument("file")
    r.add_argument("--order", type=int, required=True)
    r.add_argument("--restarts", type=int, default=10)
    r.add_argument("--tol", type=float, default=1e-6)
    r.add_argument("--max-iter", type=int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--history", help="per-iteration history CSV")
    r.set_defaults(func=cmd_reduce)

    e = sub.add_parser("evaluate", parents=[common], help="simulation-based accuracy and gain")
    e.add_argument("full")
    e.add_argument("reduced")
    e.add_argument("--inputs", type=int, default=10)
    e.add_argument("--horizon", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="reduce and evaluate over many orders")
    s.add_argument("file")
    s.add_argument("--orders", required=True, help="e.g. '1:50' or '5,10,20,40'")
    s.add_argument("--restarts", type=int, default=10)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--inputs", type=int, default=10)
    s.add_argument("--horizon", type=int, default=1000)
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", parents=[common], help="roll out one input sequence")
    m.add_argument("file")
    m.add_argument("--input", required=True, help="CSV with header t,u1..um")
    m.add_argument("--x0", help="initial state, comma separated")
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ren-reduce {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
