"""Command-line front end.

    bci solve MATRIX [--alpha 0.8] [--stopping four-dp|inf-norm] [--eps E] [--out result.json]
    bci sweep MATRIX --alphas 0.9,0.8,... [--out sweep.csv]
    bci verify MATRIX [--alpha 0.8]
    bci simulate CONFIG [--out metrics.json]
    bci distributed MATRIX [--replication 1] [--schedule round-robin] [--delay 0]

Matrices ending in ``.json`` are read as sparse-json, anything else as
dense-csv (override with ``--format``). ``--plot`` renders a PNG next to
``--out``. Exit status: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

from . import _json
from .distributed import RandomOrder, RoundRobin, Synchronous, assign_managers, run_distributed, trace_csv
from .errors import BciError, InvalidAlpha
from .ledger import FORMATS, free_riders, is_balanced, load_ledger
from .simulation import fairness_report, load_config, run_simulation
from .solver import (
    DEFAULT_MAX_ITERATIONS,
    BciParams,
    FourDecimalEquality,
    InfNormTol,
    Uniformity,
    check_alpha,
    format4,
    min_bci,
    neutral_bci,
    phi_step,
    solve,
    sweep_alpha,
    verify_uniform_solution,
)


def _alpha(text: str) -> float:
    try:
        return check_alpha(text)
    except InvalidAlpha as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _alpha_list(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("at least one alpha is required")
    return [_alpha(p) for p in parts]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _nonnegative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _read_matrix(args):
    path = Path(args.matrix)
    fmt = args.format or ("sparse-json" if path.suffix.lower() == ".json" else "dense-csv")
    return load_ledger(path.read_bytes(), fmt)


def _stopping(args):
    if args.stopping == "inf-norm":
        return InfNormTol(args.eps)
    return FourDecimalEquality()


def _seed(default: int) -> int:
    env = os.environ.get("BCI_SEED")
    return int(env) if env not in (None, "") else default


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _table(history, out) -> None:
    n = len(history[0])
    out.write("k   " + " ".join(f"{'x' + str(i + 1):>7}" for i in range(n)) + "\n")
    for k, row in enumerate(history):
        out.write(f"{k:<3} " + " ".join(f"{format4(v):>7}" for v in row) + "\n")


# -- subcommands ----------------------------------------------------------

def cmd_solve(args, out) -> int:
    ledger = _read_matrix(args)
    result = solve(ledger, BciParams(args.alpha, _stopping(args), args.max_iter))
    _table(result.history, out)
    for w in sorted(w.value for w in result.warnings):
        out.write(f"warning: {w}\n")
    out.write(f"iterations: {result.iterations}\n")
    if args.out:
        _write(args.out, _json.dumps(result.to_dict()) + "\n")
        if args.plot:
            from .plots import plot_convergence
            plot_convergence(result, Path(args.out).with_suffix(".png"))
    return 0


def cmd_sweep(args, out) -> int:
    ledger = _read_matrix(args)
    rows = sweep_alpha(ledger, args.alphas, _stopping(args), args.max_iter)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "iterations"])
    for a, k, _ in rows:
        w.writerow([repr(a), k])
    if args.out:
        _write(args.out, buf.getvalue())
        if args.plot:
            from .plots import plot_sweep
            plot_sweep(rows, Path(args.out).with_suffix(".png"))
    out.write(buf.getvalue())
    return 0


def cmd_verify(args, out) -> int:
    ledger = _read_matrix(args)
    alpha = args.alpha
    result = solve(ledger, BciParams(alpha, InfNormTol(args.eps), args.max_iter))
    failed = False

    def line(name, status, detail=""):
        nonlocal failed
        failed = failed or status == "FAIL"
        out.write(f"{status:<15} {name}{': ' + detail if detail else ''}\n")

    for w in sorted(w.value for w in result.warnings):
        out.write(f"warning: {w}\n")
    lo = min_bci(alpha)
    inside = all(lo - 1e-12 <= v <= 1.0 + 1e-12 for v in result.x)
    line("bounds", "PASS" if inside else "FAIL",
         f"x in [{lo:.4f}, 1] (min {format4(min(result.x))}, max {format4(max(result.x))})")

    fp = max(abs(a - b) for a, b in zip(result.x, phi_step(ledger, result.x, alpha)))
    last = result.residuals[-1]
    line("fixed-point residual", "PASS" if fp <= 2 * last else "FAIL",
         f"|x - phi(x)| = {fp:.3e}, last step {last:.3e}")

    riders = sorted(free_riders(ledger))
    if riders:
        ok = all(result.x[i] == lo for i in riders)
        line("free-rider floor", "PASS" if ok else "FAIL", f"peers {riders} at 1 - alpha")
    else:
        line("free-rider floor", "NOT-APPLICABLE", "no free riders")

    check = verify_uniform_solution(ledger, alpha)
    if check.status is Uniformity.UNIFORM_AND_BALANCED:
        line("uniform => balanced", "PASS", "x = (1 - alpha/2) e and upload = download per peer")
    elif check.status is Uniformity.UNIFORM_ONLY:
        line("uniform => balanced", "FAIL", f"uniform index but imbalance {check.violation:.3e}")
    else:
        line("uniform => balanced", "NOT-APPLICABLE", f"NotUniform (max deviation {check.deviation:.4f})")

    total = ledger.total()
    if is_balanced(ledger, 1e-9 * total):
        neutral = neutral_bci(alpha)
        dev = max(abs(v - neutral) for v in result.x)
        line("balanced => uniform", "PASS" if dev < 1e-8 else "FAIL", f"max deviation {dev:.3e}")
    else:
        line("balanced => uniform", "NOT-APPLICABLE", "ledger not balanced")
    return 1 if failed else 0


def cmd_simulate(args, out) -> int:
    config = load_config(Path(args.config).read_text(encoding="utf-8"))
    config.rng_seed = _seed(config.rng_seed)
    metrics = run_simulation(config)
    fairness = fairness_report(metrics, metrics.ledger, config.alpha)
    doc = {"config": config.to_dict(), "metrics": metrics.to_dict(), "fairness": fairness.to_dict()}
    riders = metrics.free_riders()
    out.write(f"peers: {config.n}  attempts: {config.duration}  seed: {config.rng_seed}\n")
    out.write(f"mean imbalance: {metrics.mean_imbalance:.4f}\n")
    out.write(f"free-rider download fraction: {metrics.free_rider_download_fraction:.4f}\n")
    for i in riders:
        out.write(f"free rider {i}: committed {metrics.committed_downloads[i]}, "
                  f"after first recompute {metrics.downloads_after_first_recompute[i]}, "
                  f"denied {metrics.denied_downloads[i]}\n")
    out.write(f"bci dispersion: {format4(fairness.bci_dispersion)}\n")
    if args.out:
        base = Path(args.out)
        _write(base, _json.dumps(doc) + "\n")
        _write(base.with_suffix(".csv"), metrics.trajectory_csv())
        if args.plot:
            from .plots import plot_trajectories
            plot_trajectories(metrics, config.threshold, base.with_suffix(".png"))
    return 0


_SCHEDULES = ("round-robin", "random", "synchronous")


def cmd_distributed(args, out) -> int:
    ledger = _read_matrix(args)
    seed = _seed(args.seed)
    params = BciParams(args.alpha, InfNormTol(args.eps), args.max_iter)
    assignment = assign_managers(ledger.n, args.replication, seed)
    schedule = {"round-robin": RoundRobin(), "random": RandomOrder(seed),
                "synchronous": Synchronous()}[args.schedule]
    report = run_distributed(ledger, params, assignment, schedule, args.delay,
                             trace=bool(args.trace))
    out.write("x: " + " ".join(format4(v) for v in report.x) + "\n")
    out.write(f"rounds: {report.rounds}\n")
    out.write(f"messages: {report.messages_total}  "
              + " ".join(f"{k}={v}" for k, v in report.messages_by_kind.items()) + "\n")
    out.write(f"divergence from centralized: {report.divergence_from_centralized:.3e}\n")
    if not report.converged:
        out.write("warning: HitIterationCap\n")
    if args.out:
        doc = report.to_dict()
        doc["assignment"] = [list(m) for m in assignment.managers]
        _write(args.out, _json.dumps(doc) + "\n")
    if args.trace:
        _write(args.trace, trace_csv(report.trace))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bci", description="Biased contribution index toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    def matrix_args(p):
        p.add_argument("matrix", help="share matrix file")
        p.add_argument("--format", choices=FORMATS, default=None)
        p.add_argument("--max-iter", type=_positive_int, default=DEFAULT_MAX_ITERATIONS)

    def stopping_args(p, default="four-dp", eps=1e-10):
        p.add_argument("--stopping", choices=("four-dp", "inf-norm"), default=default)
        p.add_argument("--eps", type=_positive_float, default=eps)

    p = sub.add_parser("solve", help="solve for the index vector and print every iterate")
    matrix_args(p)
    p.add_argument("--alpha", type=_alpha, default=0.8)
    stopping_args(p)
    p.add_argument("--out", help="write the full-precision result JSON here")
    p.add_argument("--plot", action="store_true", help="also render <out>.png")
    p.set_defaults(func=cmd_solve, needs_out_for_plot=True)

    p = sub.add_parser("sweep", help="iterations to converge for several alphas")
    matrix_args(p)
    p.add_argument("--alphas", type=_alpha_list, required=True, help="comma-separated list")
    stopping_args(p)
    p.add_argument("--out", help="write the CSV here as well as to stdout")
    p.add_argument("--plot", action="store_true", help="also render <out>.png")
    p.set_defaults(func=cmd_sweep, needs_out_for_plot=True)

    p = sub.add_parser("verify", help="check the bounds and uniform/balance properties")
    matrix_args(p)
    p.add_argument("--alpha", type=_alpha, default=0.8)
    p.add_argument("--eps", type=_positive_float, default=1e-12)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run an admission-control scenario")
    p.add_argument("config", help="SimConfig JSON file")
    p.add_argument("--out", help="metrics JSON path; the trajectory CSV goes next to it")
    p.add_argument("--plot", action="store_true", help="also render <out>.png")
    p.set_defaults(func=cmd_simulate, needs_out_for_plot=True)

    p = sub.add_parser("distributed", help="run the index-manager simulation")
    matrix_args(p)
    p.add_argument("--alpha", type=_alpha, default=0.8)
    p.add_argument("--eps", type=_positive_float, default=1e-10)
    p.add_argument("--replication", type=_positive_int, default=1)
    p.add_argument("--schedule", choices=_SCHEDULES, default="round-robin")
    p.add_argument("--delay", type=_nonnegative_int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the run report JSON here")
    p.add_argument("--trace", help="write the message trace CSV here")
    p.set_defaults(func=cmd_distributed)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "needs_out_for_plot", False) and args.plot and not args.out:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: --plot requires --out", file=sys.stderr)
        return 2
    try:
        return args.func(args, out)
    except (BciError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
