"""Command line front end: ``minprec verify|tune|bench``.

Exit codes: 0 success, 1 accuracy unachievable, 2 parse, usage or I/O
error, 3 numerical failure. Errors print one line on stderr of the form
``minprec-error:<kind>:<message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from .precision import (
    BINARY32,
    BINARY64,
    DEFAULT_LATTICE,
    DivideByZeroError,
    DomainError,
    PrecisionError,
    PrecisionSpec,
    RangeOverflowError,
    parse_lattice,
)
from .program import EvaluationError, ProgramError, eval_dsa, load_program
from .solvers import (
    IRConfig,
    SolverError,
    direct_solve,
    forward_error,
    gen_matrix,
    gmres_m,
    ir_solve,
)
from .stochastic import format_significant
from .tuner import DEFAULT_SEED, AccuracyUnachievableError, TuneRequest, tune

EXIT_OK = 0
EXIT_UNACHIEVABLE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _spec(text: str) -> PrecisionSpec:
    try:
        return PrecisionSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _lattice(text: str) -> tuple[PrecisionSpec, ...]:
    try:
        return tuple(parse_lattice(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="minprec", description="Precision validation and tuning for small numerical programs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="stochastic-arithmetic digit report for a program")
    v.add_argument("--program", required=True, help=".mp program file")
    v.add_argument("--precision", type=_spec, default=BINARY64, help="uniform precision (default s53e11)")
    v.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    v.add_argument("--json", metavar="PATH", help="write the report as JSON ('-' for stdout)")

    t = sub.add_parser("tune", help="find a minimal precision assignment")
    t.add_argument("--program", required=True)
    t.add_argument("--digits", type=float, required=True, help="requested significant digits")
    t.add_argument("--lattice", type=_lattice, default=DEFAULT_LATTICE, help="comma-separated, ascending")
    t.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    t.add_argument("--json", metavar="PATH", help="also write the report to PATH")
    t.add_argument("--jobs", type=int, default=1, help="parallel accuracy trials")

    b = sub.add_parser("bench", help="run a mixed-precision solver benchmark")
    b.add_argument("solver", choices=["ir", "gmres"])
    b.add_argument("--n", type=int, default=100)
    b.add_argument("--cond", type=float, default=1e3)
    b.add_argument("--seed", type=_seed, default=0)
    b.add_argument("--tol", type=float, default=None, help="stopping tolerance (ir 2^-50, gmres 1e-10)")
    b.add_argument("--u", type=_spec, default=BINARY64, help="ir storage precision")
    b.add_argument("--u-f", type=_spec, default=BINARY32, help="ir factorization precision")
    b.add_argument("--u-r", type=_spec, default=BINARY64, help="ir residual precision")
    b.add_argument("--max-iter", type=int, default=50)
    b.add_argument("--m", type=int, default=None, help="gmres restart length (default n)")
    b.add_argument("--inner", type=_spec, default=BINARY32)
    b.add_argument("--outer", type=_spec, default=BINARY64)
    b.add_argument("--max-restart", type=int, default=50)
    b.add_argument("--json", metavar="PATH", help="write the result to PATH instead of stdout")
    return p


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_verify(args) -> int:
    program = load_program(args.program)
    events: list = []
    outputs = eval_dsa(program, args.precision, args.seed, events)
    doc = {
        "precision": str(args.precision),
        "seed": args.seed,
        "outputs": {
            name: {
                "samples": list(sv.samples),
                "value": sv.mean,
                "digits": est.digits,
                "computational_zero": est.is_computational_zero,
            }
            for name, (sv, est) in outputs.items()
        },
        "events": [{"kind": e.kind, "op": e.op, "statement": e.statement} for e in events],
    }
    if args.json is not None:
        _write(args.json, dump_json(doc))
    if args.json != "-":
        for name, (sv, est) in outputs.items():
            flag = "  computational zero" if est.is_computational_zero else ""
            samples = ", ".join(repr(s) for s in sv.samples)
            print(f"{name} = {format_significant(sv.mean, est.digits)}  digits {est.digits:.2f}{flag}")
            print(f"  samples: {samples}")
        kinds = sorted({e.kind for e in events})
        if kinds:
            print(f"instabilities: {len(events)} ({', '.join(kinds)})")
    return EXIT_OK


def cmd_tune(args) -> int:
    program = load_program(args.program)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    try:
        request = TuneRequest(program, args.digits, args.lattice, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = tune(request, jobs=args.jobs).to_json()
    if args.json is not None and args.json != "-":
        _write(args.json, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.n < 1 or args.cond < 1:
        raise UsageError("need --n >= 1 and --cond >= 1")
    a = gen_matrix(args.n, args.cond, args.seed)
    x_true = np.random.default_rng([args.seed, 1]).uniform(1.0, 2.0, args.n)
    b = a.data @ x_true
    oracle = direct_solve(a, b)
    doc: dict = {"solver": args.solver, "n": args.n, "cond": args.cond, "seed": args.seed}
    if args.solver == "ir":
        tol = 2.0**-50 if args.tol is None else args.tol
        try:
            cfg = IRConfig(args.u, args.u_f, args.u_r, tol, args.max_iter)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        res = ir_solve(a, b, cfg)
        doc["config"] = {"u": str(cfg.u), "u_f": str(cfg.u_f), "u_r": str(cfg.u_r), "tol": tol, "max_iter": cfg.max_iter}
        doc["iterations"] = res.iterations
    else:
        tol = 1e-10 if args.tol is None else args.tol
        m = args.n if args.m is None else args.m
        if m < 1:
            raise UsageError("--m must be at least 1")
        res = gmres_m(a, b, m, args.inner, args.outer, tol, args.max_restart)
        doc["config"] = {"m": m, "inner": str(args.inner), "outer": str(args.outer), "tol": tol, "max_restart": args.max_restart}
        doc["restarts"] = res.restarts
        doc["inner_iterations"] = res.inner_iterations
        doc["inner_estimate"] = float(res.inner_estimate)
    doc["history"] = [float(h) for h in res.history]
    doc["forward_error"] = forward_error(res.x, oracle)
    _write(args.json, dump_json(doc))
    return EXIT_OK


_COMMANDS = {"verify": cmd_verify, "tune": cmd_tune, "bench": cmd_bench}


def _numerical_kind(exc: BaseException) -> str:
    if isinstance(exc, EvaluationError):
        exc = exc.cause
    if isinstance(exc, SolverError):
        return exc.kind
    if isinstance(exc, DivideByZeroError):
        return "divide-by-zero"
    if isinstance(exc, RangeOverflowError):
        return "overflow"
    if isinstance(exc, DomainError):
        return "domain"
    return "numerical"


def _fail(kind: str, message: str, code: int) -> int:
    message = " ".join(str(message).split())
    print(f"minprec-error:{kind}:{message}", file=sys.stderr)
    return code


def run_cli(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except ProgramError as exc:
        return _fail(exc.kind, exc, EXIT_USAGE)
    except OSError as exc:
        return _fail("io", exc, EXIT_USAGE)
    except AccuracyUnachievableError as exc:
        return _fail("accuracy-unachievable", exc, EXIT_UNACHIEVABLE)
    except (EvaluationError, SolverError, PrecisionError) as exc:
        return _fail(_numerical_kind(exc), exc, EXIT_NUMERICAL)


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
