"""
Command-line front end.

Every run emits one record: the subcommand, the full parameter echo, the
result payload and a runtime block (wall time, threads, version). Exit codes
are 0 on success, 1 when a ``check`` fails and 2 on argument or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import time
from typing import Any, Optional

import numpy as np

from . import __version__
from .analysis import halasz_F, halasz_L, moment_qnorm, ratio_checks
from .characters import ResidueSpec, ScanRecord, residue_count, residue_set, scan_primes
from .montecarlo import (
    SiegelConfig,
    estimate_conditional_lplus,
    estimate_cov_A_fd,
    estimate_deviation,
    estimate_event_A,
    estimate_negative_harmonic,
)
from .randmult import constant_model, elementary_decomposition, rough_decomposition, sample_model
from .smooth import (
    SmoothContext,
    alpha_asymptotic,
    buchstab_residuals,
    dickman_identity_residual,
    dickman_rho,
    dickman_table,
    psi,
    psi_star,
    solve_alpha,
)

U64 = 2**64
RESIDUE_LIST_CAP = 10**5


class UsageError(Exception):
    """Bad arguments detected after parsing."""


# -- serialization ----------------------------------------------------------------

def fmt_scalar(v: Any) -> str:
    """Text form of a scalar: integers exact, reals with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return "null"
        s = format(v, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if v is None:
        return "null"
    return json.dumps(str(v), ensure_ascii=False)


def to_json(v: Any) -> str:
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(x) for x in v) + "]"
    return fmt_scalar(v)


def _csv_cell(v: Any) -> str:
    s = fmt_scalar(v)
    return s[1:-1] if isinstance(v, str) else s


def to_csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(v) for v in r])
    return buf.getvalue()


def emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)


# -- helpers --------------------------------------------------------------------

def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("RMFLAB_THREADS")
    if env is None:
        return 1
    try:
        v = int(env)
    except ValueError:
        raise UsageError(f"RMFLAB_THREADS must be a positive integer, got {env!r}")
    if v < 1:
        raise UsageError(f"RMFLAB_THREADS must be a positive integer, got {env!r}")
    return v


def _need_seed(args, exhaustive: bool = False) -> None:
    if exhaustive:
        return
    if args.seed is None:
        raise UsageError("--seed is required for stochastic runs (or pass --exhaustive where supported)")
    if getattr(args, "trials", None) is None:
        raise UsageError("--trials is required for Monte Carlo runs")


def _model(args):
    if args.model == "random":
        if args.seed is None:
            raise UsageError("--seed is required with --model random")
        return sample_model(args.seed)
    return constant_model(-1 if args.model == "liouville" else 1)


def _estimate_rows(d: dict) -> tuple[list[str], list[list]]:
    keys = list(d)
    return keys, [[d[k] for k in keys]]


# -- subcommands ----------------------------------------------------------------
# Each handler returns (params, result, csv_table, ok).

def cmd_psi(args, threads):
    if args.y < 1:
        raise UsageError("y must be >= 1")
    # primes above x never matter, and a huge y would only inflate the sieve
    ctx = SmoothContext.for_bound(min(args.y, args.x))
    res = {"psi": psi(args.x, ctx)}
    if args.star:
        res["psi_star"] = psi_star(args.x, ctx)
    return {"x": args.x, "y": args.y, "star": args.star}, res, None, True


def cmd_alpha(args, threads):
    res = {"alpha": solve_alpha(args.x, args.y, tol=args.tol), "alpha_asymptotic": alpha_asymptotic(args.x, args.y)}
    return {"x": args.x, "y": args.y, "tol": args.tol}, res, None, True


def cmd_rho(args, threads):
    if args.u < 0:
        raise UsageError("u must be >= 0")
    res = {"rho": dickman_rho(args.u, u_max=max(50.0, math.ceil(args.u)))}
    return {"u": args.u}, res, None, True


def cmd_simulate(args, threads):
    kind = args.kind
    ex = bool(getattr(args, "exhaustive", False))
    _need_seed(args, ex)
    seed = None if ex else args.seed
    trials = None if ex else args.trials
    common = {"trials": trials, "seed": seed, "exhaustive": ex}
    if kind == "lplus":
        params = {"x": args.x, "y": args.y, **common}
        est = estimate_conditional_lplus(args.x, args.y, trials, seed, exhaustive=ex, threads=threads)
    elif kind == "harmonic-negative":
        params = {"x": args.x, **common}
        est = estimate_negative_harmonic(args.x, trials, seed, exhaustive=ex, threads=threads)
    elif kind == "event-a":
        params = {"cutoff": args.cutoff, **common}
        est = estimate_event_A(args.cutoff, trials, seed, exhaustive=ex, threads=threads)
    elif kind == "covariance":
        siegel = SiegelConfig(args.e0, args.beta1)
        params = {"d": args.d, "cutoff": args.cutoff, "e0": args.e0, "beta1": args.beta1,
                  "siegel_x": args.siegel_x, **common}
        est = estimate_cov_A_fd(args.d, args.cutoff, trials, seed, exhaustive=ex, threads=threads,
                                siegel=siegel, x=args.siegel_x)
    else:
        params = {"x": args.x, "y": args.y, "delta": args.delta, **common}
        est = estimate_deviation(args.x, args.y, args.delta, trials, seed, exhaustive=ex, threads=threads)
    res = est.as_dict()
    return params, res, _estimate_rows(res), True


def cmd_scan(args, threads):
    sr = scan_primes(args.x, y0_cap=args.y0_cap, threads=threads)
    records = [r.as_dict() for r in sr.records]
    res = {
        "count": sr.count,
        "p_tilde": sr.p_tilde,
        "lplus_fraction": sr.lplus_fraction,
        "certified_fraction": sr.certified_fraction,
        "records": records,
    }
    table = (list(ScanRecord.FIELDS), [[r[k] for k in ScanRecord.FIELDS] for r in records])
    return {"x": args.x, "y0_cap": args.y0_cap}, res, table, True


def _parse_signs(text: str) -> dict:
    signs = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        key, _, val = part.partition(":")
        if val not in ("+", "-", "+1", "-1", "1"):
            raise UsageError(f"bad sign entry {part!r}; use KEY:+ or KEY:-")
        signs[int(key)] = -1 if val.startswith("-") else 1
    return signs


def cmd_residues(args, threads):
    if args.signs is None:
        # default: every prescribed symbol is +1
        from .arith import prime_table

        keys = [-1] + [int(q) for q in prime_table(args.N).primes_upto(args.N)]
        signs = {k: 1 for k in keys}
    else:
        signs = _parse_signs(args.signs)
    spec = ResidueSpec(args.N, signs)
    count = residue_count(spec)
    res: dict = {"N": args.N, "k": spec.k, "count": count}
    table = None
    if count <= RESIDUE_LIST_CAP:
        rs = [int(v) for v in residue_set(spec)]
        res["residues"] = rs
        table = (["residue"], [[v] for v in rs])
    params = {"N": args.N, "signs": {str(k): v for k, v in sorted(signs.items())}}
    return params, res, table, True


def cmd_moments(args, threads):
    if args.mode == "monte_carlo":
        _need_seed(args)
    m = moment_qnorm(args.x, args.q, args.mode, args.trials, args.seed, threads=threads)
    res = m._asdict()
    params = {"x": args.x, "q": args.q, "mode": args.mode, "trials": args.trials, "seed": args.seed}
    return params, res, _estimate_rows(res), True


def cmd_halasz(args, threads):
    model = _model(args)
    L = halasz_L(model, args.x, args.resolution)
    F1 = halasz_F(model, args.x, 0.0)
    res = {"L_grid_lower_bound": L.value, "n_max": L.n_max, "sup_abs_F_near_0": L.sup_at_zero, "F_at_1": F1.real}
    params = {"x": args.x, "model": args.model, "seed": args.seed, "resolution": args.resolution}
    return params, res, _estimate_rows(res), True


def cmd_ratios(args, threads):
    model = _model(args)
    r = ratio_checks(model, args.x, args.eps)
    res = r._asdict()
    return {"x": args.x, "eps": args.eps, "model": args.model, "seed": args.seed}, res, _estimate_rows(res), True


def identity_checks(seed: int) -> list[dict]:
    """The identity suite: each entry has name, passed and the worst residual."""
    out = []

    def add(name, worst, tol):
        out.append({"name": name, "worst": worst, "tolerance": tol, "passed": bool(worst <= tol)})

    models = [sample_model(seed + i) for i in range(5)]
    add("elementary_decomposition", max(abs(elementary_decomposition(m, 10**4).residual) for m in models), 1e-9)
    ctx = SmoothContext.for_bound(10)
    forced = [sample_model(seed + i, forced_prefix_y=10) for i in range(5)]
    rough = [rough_decomposition(m, 10**4, ctx) for m in forced]
    add("rough_decomposition", max(abs(r.lhs - r.rhs) for r in rough), 0)
    worst = 0.0
    for x, y in ((10**4, 20), (10**5, 50)):
        c = SmoothContext.for_bound(y)
        b = buchstab_residuals(x, c, models[0])
        worst = max(worst, b.unsigned_residual / b.scale, b.signed_residual / b.scale)
    add("buchstab_residuals", worst, 1e-9)
    table = dickman_table()
    grid = np.arange(1.0, 10.0 + 1e-12, 1 / 64)
    add("dickman_identity_residual", max(dickman_identity_residual(u, table) for u in grid), 1e-7)
    bad = 0
    from .arith import prime_table

    for N in (3, 5, 7):
        keys = [-1] + [int(q) for q in prime_table(N).primes_upto(N)]
        for sg in itertools.product((1, -1), repeat=len(keys)):
            spec = ResidueSpec(N, dict(zip(keys, sg)))
            if len(residue_set(spec)) != residue_count(spec):
                bad += 1
    add("residue_set_counts", bad, 0)
    return out


def cmd_check(args, threads):
    seed = 0 if args.seed is None else args.seed
    checks = identity_checks(seed)
    ok = all(c["passed"] for c in checks)
    table = (["name", "worst", "tolerance", "passed"], [[c[k] for k in ("name", "worst", "tolerance", "passed")] for c in checks])
    return {"suite": args.suite, "seed": seed}, {"passed": ok, "checks": checks}, table, ok


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json", help="output format (default json)")
    common.add_argument("--out", help="write to this file instead of stdout")
    common.add_argument("--threads", type=_pos_int, help="worker threads (default $RMFLAB_THREADS or 1)")
    common.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")

    p = argparse.ArgumentParser(prog="rmflab", description="Random multiplicative functions lab.")
    p.add_argument("--version", action="version", version=f"rmflab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("psi", parents=[common], help="count y-smooth n <= x")
    s.add_argument("--x", type=_pos_int, required=True)
    s.add_argument("--y", type=int, required=True)
    s.add_argument("--star", action="store_true", help="also report the rough-cofactor variant")
    s.set_defaults(func=cmd_psi)

    s = sub.add_parser("alpha", parents=[common], help="saddle-point exponent alpha(x, y)")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--y", type=float, required=True)
    s.add_argument("--tol", type=float, default=1e-12, help="relative tolerance (default 1e-12)")
    s.set_defaults(func=cmd_alpha)

    s = sub.add_parser("rho", parents=[common], help="Dickman rho(u)")
    s.add_argument("--u", type=float, required=True)
    s.set_defaults(func=cmd_rho)

    s = sub.add_parser("simulate", help="probability estimators")
    sim = s.add_subparsers(dest="kind", required=True, metavar="KIND")

    def sim_parser(name, help_):
        q = sim.add_parser(name, parents=[common], help=help_)
        q.add_argument("--trials", type=_pos_int)
        q.add_argument("--exhaustive", action="store_true", help="enumerate every sign pattern")
        q.set_defaults(func=cmd_simulate)
        return q

    q = sim_parser("lplus", "P(partial sums >= 0 up to x | f(p) = 1 for p <= y)")
    q.add_argument("--x", type=int, required=True)
    q.add_argument("--y", type=int, required=True)
    q = sim_parser("harmonic-negative", "P(sum_{n<=x} f(n)/n < 0)")
    q.add_argument("--x", type=int, required=True)
    q = sim_parser("event-a", "P(all harmonic partial sums up to cutoff are positive)")
    q.add_argument("--cutoff", type=int, required=True)
    q = sim_parser("covariance", "Cov(1_A, f(d)) with A truncated at cutoff")
    q.add_argument("--d", type=_pos_int, required=True)
    q.add_argument("--cutoff", type=int, required=True)
    q.add_argument("--e0", type=int, choices=(0, 1), default=0, help="Siegel switch (default 0)")
    q.add_argument("--beta1", type=float, help="exceptional zero, only with --e0 1")
    q.add_argument("--siegel-x", type=float, help="x at which the Siegel factor is evaluated")
    q = sim_parser("deviation", "P(|weighted rough sum| > delta Psi*(x, y))")
    q.add_argument("--x", type=int, required=True)
    q.add_argument("--y", type=int, required=True)
    q.add_argument("--delta", type=float, required=True)

    s = sub.add_parser("scan", parents=[common], help="character scan over primes in (x, 2x]")
    s.add_argument("--x", type=_pos_int, required=True)
    s.add_argument("--y0-cap", type=_pos_int, default=10**8, help="largest certificate cutoff (default 1e8)")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("residues", parents=[common], help="reciprocity residue classes mod k")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--signs", help="comma list KEY:+/- over -1 and primes <= N (default all +)")
    s.set_defaults(func=cmd_residues)

    s = sub.add_parser("moments", parents=[common], help="q-norm of sum_{n<=x} f(n)")
    s.add_argument("--x", type=_pos_int, required=True)
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--mode", choices=("exact", "monte_carlo"), default="exact")
    s.add_argument("--trials", type=_pos_int)
    s.set_defaults(func=cmd_moments)

    model_help = "random (needs --seed), liouville (f = -1 at primes) or one (f = 1)"
    s = sub.add_parser("halasz", parents=[common], help="grid lower bound for L(x)")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--model", choices=("random", "liouville", "one"), default="random", help=model_help)
    s.add_argument("--resolution", type=float, default=1 / 64, help="t-grid step, 1/k with k >= 16 (default 1/64)")
    s.set_defaults(func=cmd_halasz)

    s = sub.add_parser("ratios", parents=[common], help="smooth-supported sum ratios")
    s.add_argument("--x", type=int, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--model", choices=("random", "liouville", "one"), default="random", help=model_help)
    s.set_defaults(func=cmd_ratios)

    s = sub.add_parser("check", parents=[common], help="run a verification suite")
    s.add_argument("--suite", choices=("identities",), default="identities")
    s.set_defaults(func=cmd_check)
    return p


def run(argv: Optional[list[str]] = None) -> tuple[int, dict]:
    """Parse, dispatch and emit. Returns (exit code, record)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0), {}
    try:
        threads = _threads(args)
        t0 = time.perf_counter()
        params, result, table, ok = args.func(args, threads)
        wall = time.perf_counter() - t0
    except (UsageError, ValueError, OverflowError) as e:
        print(f"rmflab: error: {e}", file=sys.stderr)
        return 2, {}
    name = args.command if args.command != "simulate" else f"simulate {args.kind}"
    record = {
        "subcommand": name,
        "params": params,
        "result": result,
        "runtime": {"wall_time": wall, "threads": threads, "version": __version__},
    }
    if args.format == "csv":
        header, rows = table if table is not None else _estimate_rows(
            {k: v for k, v in result.items() if not isinstance(v, (list, dict))}
        )
        text = to_csv(header, rows)
    else:
        text = to_json(record) + "\n"
    try:
        emit(text, args.out)
    except OSError as e:
        print(f"rmflab: error: cannot write output: {e}", file=sys.stderr)
        return 2, record
    return (0 if ok else 1), record


def main(argv: Optional[list[str]] = None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
