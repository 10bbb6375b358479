"""Command-line entry point: ``linescale {scale,support,drw,ot} ...``.

Exit codes: 0 success, 1 domain or argument error, 2 numeric or invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .drw import DrwConfig, drw_run, visitation_report
from .engine import PRNG_NAME, Schedule, run_scaling, verify_limit_class
from .errors import (
    DomainError,
    Inconclusive,
    InvariantViolation,
    NumericError,
    ScheduleExhausted,
)
from .matrix import CONV_TOL, ScheduleStep, distances
from .support import (
    KSpec,
    birkhoff_decompose,
    find_k_diagonal,
    has_support,
    has_total_support,
    k_positive_part,
    minimal_blocking_subset,
    positive_part,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _emit(obj, out) -> None:
    if out:
        fio.write_json(out, obj)
    else:
        sys.stdout.write(fio.dumps(obj))


def _read_kspec(arg: str, n: int) -> KSpec:
    if arg == "full":
        return KSpec.full(n)
    K = KSpec.from_json(fio.read_json(arg))
    K.check(n)
    return K


def _read_trace(path: str) -> list[ScheduleStep]:
    """Steps from JSON lines ({"axis": "r", "index": 3}) or whitespace-separated tokens like ``r3 c1``."""
    steps = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("{"):
            rec = json.loads(line)
            steps.append(ScheduleStep(rec["axis"], int(rec["index"])))
            continue
        for tok in line.replace(",", " ").split():
            if len(tok) < 2 or not tok[1:].isdigit():
                raise DomainError(f"{path}:{lineno}: bad schedule token {tok!r}; expected e.g. r1 or c2")
            steps.append(ScheduleStep(tok[0], int(tok[1:])))
    if not steps:
        raise DomainError(f"{path}: trace schedule is empty")
    return steps


# ---- subcommands ----

def cmd_scale(args) -> int:
    W0 = fio.load_matrix(args.input)
    n = W0.n
    name = args.schedule
    if name == "random" and args.seed is None:
        raise DomainError("random schedule requires an explicit --seed")
    if args.recurrent and name != "random":
        raise DomainError("--recurrent applies to the random schedule only")
    if name == "cyclic":
        sched = Schedule.cyclic()
    elif name == "greedy":
        sched = Schedule.greedy()
    elif name == "random":
        rec = _read_kspec(args.recurrent, n) if args.recurrent else None
        sched = Schedule.random(args.seed, rec)
    elif name.startswith("trace:"):
        sched = Schedule.from_trace(_read_trace(name[len("trace:"):]))
    else:
        raise DomainError(f"unknown schedule {name!r}; expected cyclic, random, greedy or trace:FILE")

    res = run_scaling(W0, sched, args.max_steps, args.tol,
                      detect_stall=not args.no_stall, record=bool(args.trace_out))
    report = res.to_json()
    report["schedule"] = name
    report["seed"] = args.seed
    K0 = sched.recurrent_set(n)
    report["recurrent_set"] = K0.to_json()
    if not args.no_limit_check:
        lim = verify_limit_class(W0, K0, res.final_matrix.entries, args.limit_tol)
        report["limit_report"] = lim.to_json()
        report["limit_report"]["passed"] = lim.passed(args.limit_tol)
    if args.trace_out:
        fio.write_jsonl(args.trace_out, res.trace_records())
    _emit(report, args.out)
    return 0


def cmd_support(args) -> int:
    W = fio.load_matrix(args.input)
    n = W.n
    K = _read_kspec(args.k, n)
    pp = positive_part(W)
    diag = find_k_diagonal(W, K)
    out = {
        "n": n,
        "has_support": has_support(W),
        "has_total_support": has_total_support(W),
        "positive_part_null": not bool(np.any(pp > 0)),
        "positive_part": pp,
        "k": K.to_json(),
        "has_k_diagonal": diag is not None,
        "k_diagonal": diag.to_json() if diag is not None else None,
        "k_positive_part": k_positive_part(W, K),
        "minimal_blocking_subset": None if diag is not None else minimal_blocking_subset(W, K).to_json(),
    }
    if args.decompose:
        out["decomposition"] = birkhoff_decompose(W, K).to_json()
    _emit(out, args.out)
    return 0


def cmd_drw(args) -> int:
    W0 = fio.load_matrix(args.matrix)
    cfg = DrwConfig(W0, args.steps, args.seed, args.start)
    res = drw_run(cfg)
    max_dev, freq = visitation_report(res, W0.n)
    out = {
        "steps": args.steps,
        "seed": args.seed,
        "start": args.start,
        "freq": freq,
        "visit_counts": res.visit_counts,
        "max_dev": max_dev,
        "d_B_final": float(res.d_B_trace[-1]) if res.d_B_trace.size else distances(res.final_matrix)[2],
        "d_B_exact_final": distances(res.final_matrix)[2],
        "trajectory_hash": f"{res.trajectory_hash:016x}",
        "final_matrix": res.final_matrix.entries,
    }
    if args.dump_counts:
        fio.write_csv(args.dump_counts, ["vertex", "count"],
                      [(i + 1, int(c)) for i, c in enumerate(res.visit_counts)])
    _emit(out, args.out)
    return 0


def _parse_grid(text: str | None) -> np.ndarray:
    from .ot import DEFAULT_EPS_GRID

    if not text:
        return DEFAULT_EPS_GRID
    if text.startswith("log:"):
        # log:HI:LO:COUNT as powers of ten
        try:
            hi, lo, count = text[4:].split(":")
            return np.logspace(float(hi), float(lo), int(count))
        except ValueError:
            raise DomainError(f"bad grid {text!r}; expected log:HI:LO:COUNT") from None
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise DomainError(f"bad epsilon grid {text!r}; expected comma-separated numbers") from None


def cmd_ot(args) -> int:
    from . import ot

    if args.ot_command == "densities":
        fio.write_columns(args.out, ot.density_table(args.points))
        qpath = args.quantiles_out or str(Path(args.out).with_name(Path(args.out).stem + "_quantiles.csv"))
        fio.write_columns(qpath, ot.quantile_table(args.n))
        return 0

    if args.ot_command == "sweep":
        p, q = ot.reference_grids(args.n)
        cost = ot.build_cost(p, q)
        rep = ot.epsilon_support_threshold(cost, _parse_grid(args.eps_grid), jobs=args.jobs)
        fio.write_csv(args.out, ot.CSV_HEADER, [r.csv_fields() for r in rep.rows])
        summary = rep.to_json()
        if args.check_scaling:
            checks = []
            for r in rep.rows:
                if r.has_support:
                    continue
                outcome = ot.scaling_outcome(ot.gibbs_kernel(cost, r.epsilon).xi, args.scaling_steps)
                checks.append({"epsilon": r.epsilon, **outcome})
            summary["scaling_checks"] = checks
        if args.report:
            fio.write_json(args.report, summary)
        else:
            sys.stdout.write(fio.dumps({k: summary[k] for k in ("eps_ok", "eps_fail", "monotone")}))
        return 0

    if args.ot_command == "solve":
        prob = ot.OtProblem.reference(args.n, args.epsilon)
        kernel = ot.gibbs_kernel(prob.cost, prob.epsilon)
        sol = ot.uniform_sinkhorn(kernel, args.tol, args.max_iter)
        out = {
            "n": args.n,
            "epsilon": args.epsilon,
            "tol": args.tol,
            "zero_count": kernel.zero_count,
            "has_support": kernel.has_support,
            "has_total_support": kernel.has_total_support,
            **sol.to_json(include_arrays=args.full),
        }
        _emit(out, args.out)
        return 0
    raise DomainError(f"unknown ot command {args.ot_command!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="linescale", description="Single-line matrix scaling toolkit.")
    p.add_argument("--version", action="version", version=f"linescale {__version__} (PRNG: {PRNG_NAME})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scale", help="run a normalization schedule on a CSV matrix")
    s.add_argument("--input", required=True)
    s.add_argument("--schedule", default="cyclic", help="cyclic | random | greedy | trace:FILE")
    s.add_argument("--seed", type=_u64)
    s.add_argument("--recurrent", help="KSpec JSON file restricting the random schedule")
    s.add_argument("--tol", type=_positive_float, default=CONV_TOL)
    s.add_argument("--max-steps", type=_positive_int, default=100_000)
    s.add_argument("--no-stall", action="store_true", help="spend the full step budget")
    s.add_argument("--limit-tol", type=_positive_float, default=1e-6)
    s.add_argument("--no-limit-check", action="store_true")
    s.add_argument("--out")
    s.add_argument("--trace-out", help="JSON-lines per-step trace")
    s.set_defaults(func=cmd_scale)

    s = sub.add_parser("support", help="support, positive parts, K-diagonals, decompositions")
    s.add_argument("--input", required=True)
    s.add_argument("--k", default="full", help="'full' or a KSpec JSON file")
    s.add_argument("--decompose", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_support)

    s = sub.add_parser("drw", help="decentralized random walk")
    s.add_argument("--matrix", required=True)
    s.add_argument("--steps", type=_positive_int, required=True)
    s.add_argument("--seed", type=_u64, required=True)
    s.add_argument("--start", type=_positive_int, default=1)
    s.add_argument("--dump-counts")
    s.add_argument("--out")
    s.set_defaults(func=cmd_drw)

    o = sub.add_parser("ot", help="entropic optimal transport study")
    osub = o.add_subparsers(dest="ot_command", required=True, parser_class=_Parser)
    d = osub.add_parser("densities", help="mixture pdf/cdf table and quantile grids")
    d.add_argument("--out", required=True)
    d.add_argument("--quantiles-out")
    d.add_argument("--points", type=_positive_int, default=1001)
    d.add_argument("--n", type=_positive_int, default=1000)
    w = osub.add_parser("sweep", help="support loss of the Gibbs kernel along an epsilon grid")
    w.add_argument("--n", type=_positive_int, default=1000)
    w.add_argument("--eps-grid", help="comma-separated descending values or log:HI:LO:COUNT")
    w.add_argument("--out", required=True)
    w.add_argument("--report", help="JSON summary with the bracket and per-epsilon rows")
    w.add_argument("--jobs", type=_positive_int, default=1)
    w.add_argument("--check-scaling", action="store_true",
                   help="also run cyclic scaling on every epsilon without support")
    w.add_argument("--scaling-steps", type=_positive_int, default=100_000)
    v = osub.add_parser("solve", help="Sinkhorn with uniform marginals")
    v.add_argument("--n", type=_positive_int, default=1000)
    v.add_argument("--epsilon", type=_positive_float, required=True)
    v.add_argument("--tol", type=_positive_float, default=1e-9)
    v.add_argument("--max-iter", type=_positive_int, default=100_000)
    v.add_argument("--full", action="store_true", help="include u, v and the coupling")
    v.add_argument("--out")
    o.set_defaults(func=cmd_ot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, ScheduleExhausted) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 1
    except (InvariantViolation, NumericError, Inconclusive) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
