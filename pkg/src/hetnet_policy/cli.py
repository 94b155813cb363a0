"""Command-line entry point ``hetnet-policy``.

Exit status: 0 success, 1 structure verification found hard violations,
2 invalid input, 3 solver/evaluation failure, 4 infeasible blocking bound.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .config import ModelConfig, load_config
from .experiment import ExperimentSpec, SweepError, emit_outputs, run_sweep
from .model import ValidationError, data_threshold
from .oracle import EvaluationError, erlang_b, evaluate_policy_exact
from .policy import read_policy_csv
from .simulator import SimConfig, SimulationError, policy_algorithm1, policy_algorithm2, policy_on_the_spot, simulate
from .solver import (InfeasibleConstraintError, SolverConfig, SolverError, solve_at_beta, solve_cmdp)
from .structure import ThresholdExtractionError, extract_thresholds, verify_structure
from .wifi import CurveError, FixedPointError, compute_W

EXIT_OK, EXIT_VERIFY, EXIT_VALIDATION, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 1, 2, 3, 4
log = logging.getLogger("hetnet_policy")


def _model_config(args) -> ModelConfig:
    return load_config(args.config) if args.config else ModelConfig()


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=repr) + "\n"


def _values_csv(value) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "k", "v"])
    for i, j, k, v in value.rows():
        w.writerow([i, j, k, repr(v)])
    return buf.getvalue()


def _solver_config(args) -> SolverConfig:
    kw = {}
    if getattr(args, "tol", None) is not None:
        kw["via_tolerance"] = args.tol
    if getattr(args, "tie_break", None):
        kw["tie_break"] = args.tie_break
    return SolverConfig(**kw)


def cmd_throughput(args) -> int:
    cfg = _model_config(args)
    full = cfg.wifi.curve(args.k_max)
    curve = full.truncated(args.k_max) if args.k_max else full
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "per_user_mbps", "total_mbps", "increment_mbps"])
    for k, per, tot, inc in curve.rows():
        w.writerow([k, repr(per), repr(tot), repr(inc)])
    _write(args.out, buf.getvalue())
    try:
        W = compute_W(full, cfg.min_wifi_throughput_mbps)
        print(f"W={W} at {cfg.min_wifi_throughput_mbps} Mbps per user", file=sys.stderr)
    except CurveError as exc:
        print(f"W undefined: {exc}", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    params = _model_config(args).build()
    res = solve_at_beta(params, args.beta, _solver_config(args))
    k_th, valid = data_threshold(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.policy.to_csv(out / "policy.csv")
    (out / "values.csv").write_text(_values_csv(res.value))
    ev = evaluate_policy_exact(res.policy, params)
    diag = {"g": res.g, "beta": args.beta, "iterations": res.iterations, "span_residual": res.value.span_residual,
            "throughput_mbps": ev.throughput, "blocking": ev.blocking, "k_th": k_th,
            "threshold_condition_valid": valid, "params": params.to_dict()}
    try:
        diag["thresholds"] = extract_thresholds(res.policy, params, k_th).to_dict()
    except ThresholdExtractionError as exc:
        diag["thresholds"] = None
        diag["extraction_error"] = str(exc)
    (out / "diagnostics.json").write_text(_json(diag))
    print(f"g={res.g:.10g} Mbps after {res.iterations} iterations; outputs in {out}")
    return EXIT_OK


def _b_max(args, params) -> float:
    return args.b_max if args.b_max is not None else erlang_b(params.C, params.lambda_v / params.mu_v)


def cmd_solve_cmdp(args) -> int:
    params = _model_config(args).build()
    B_max = _b_max(args, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = solve_cmdp(params, B_max, _solver_config(args))
    except InfeasibleConstraintError as exc:
        (out / "diagnostics.json").write_text(_json({"status": "infeasible", "B_max": B_max, "B_min": exc.B_min,
                                                   "beta_trace": exc.beta_trace}))
        print(str(exc), file=sys.stderr)
        return EXIT_INFEASIBLE
    res.policy.low.to_csv(out / "policy_low.csv")
    res.policy.high.to_csv(out / "policy_high.csv")
    (out / "diagnostics.json").write_text(_json(res.diagnostics()))
    print(f"{res.status}: beta*={res.beta_star:.6g} p={res.p:.6g} blocking={res.blocking:.6g} "
          f"throughput={res.throughput:.6g} Mbps")
    return EXIT_OK


def cmd_verify(args) -> int:
    params = _model_config(args).build()
    cfg = _solver_config(args)
    res = solve_at_beta(params, args.beta, cfg)
    report = verify_structure(res.policy, res.value, params)
    text = report.summary()
    if report.extraction_error:
        # diagnostic only: does the opposite tie-break give a threshold policy?
        alt = solve_at_beta(params, args.beta, cfg.replace(tie_break="highest" if cfg.tie_break == "lowest"
                                                           else "lowest"))
        try:
            extract_thresholds(alt.policy, params)
            text += "\n  opposite tie-break yields a threshold policy"
        except ThresholdExtractionError as exc:
            text += f"\n  opposite tie-break also fails: {exc}"
    print(text)
    if args.out:
        _write(args.out, _json(report.to_dict()))
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_evaluate(args) -> int:
    params = _model_config(args).build()
    pol = read_policy_csv(args.policy, params, allow_data_blocking=args.allow_data_blocking)
    ev = evaluate_policy_exact(pol, params)
    _write(args.out, _json(ev.to_dict()))
    return EXIT_OK


def _builtin_impl(name: str, params, args):
    if name == "on_the_spot":
        return policy_on_the_spot(params)
    if name == "algorithm1":
        res = solve_at_beta(params, 0.0, _solver_config(args))
        return policy_algorithm1(extract_thresholds(res.policy, params))
    if name == "algorithm2":
        rp = solve_cmdp(params, _b_max(args, params), _solver_config(args)).policy
        return policy_algorithm2(rp)
    raise ValidationError(f"unknown policy {name!r}")


def cmd_simulate(args) -> int:
    params = _model_config(args).build()
    if args.policy_csv:
        impl = read_policy_csv(args.policy_csv, params, allow_data_blocking=args.allow_data_blocking)
    else:
        impl = _builtin_impl(args.policy, params, args)
    cfg = SimConfig(horizon_events=args.events, warmup_events=args.warmup, replications=args.replications,
                    base_seed=args.seed)
    metrics = simulate(impl, params, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "replications.csv").write_text(metrics.replications_csv())
    (out / "aggregate.json").write_text(_json(metrics.to_dict()))
    m = metrics.to_dict()
    print(f"blocking={m['blocking_fraction']:.6g} (se {m['blocking_stderr']:.2g}), "
          f"throughput={m['mean_throughput_mbps']:.6g} Mbps (se {m['throughput_stderr']:.2g})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = ExperimentSpec.load(args.spec) if args.spec else ExperimentSpec()
    if args.mode:
        spec = spec.replace(mode=args.mode)
    if args.seed is not None:
        spec = spec.replace(sim=spec.sim.replace(base_seed=args.seed))
    result = run_sweep(spec, workers=args.workers)
    files = emit_outputs(result, args.out)
    print(f"wrote {len(files)} files to {args.out} (config {result.config_hash})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hetnet-policy", description="LTE/WiFi association policies: "
                                 "solve, verify, evaluate and simulate.")
    ap.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="model configuration JSON (defaults if omitted)")
        return p

    def with_solver(p):
        p.add_argument("--tol", type=float, help="value-iteration span tolerance (relative to g)")
        p.add_argument("--tie-break", choices=("lowest", "highest"), help="greedy tie-break order")
        return p

    p = with_config(sub.add_parser("throughput", help="WiFi per-user throughput curve as CSV"))
    p.add_argument("--k-max", type=int, default=None, help="largest WiFi population to tabulate")
    p.add_argument("--out", default="-", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_throughput)

    p = with_solver(with_config(sub.add_parser("solve", help="unconstrained (fixed beta) optimal policy")))
    p.add_argument("--beta", type=float, default=0.0, help="blocking penalty (default 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_solve)

    p = with_solver(with_config(sub.add_parser("solve-cmdp", help="blocking-constrained randomized policy")))
    p.add_argument("--b-max", type=float, default=None, help="blocking bound (default: Erlang-B baseline)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_solve_cmdp)

    p = with_solver(with_config(sub.add_parser("verify", help="check threshold structure of the optimal policy")))
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_verify, tol=1e-11)

    p = with_config(sub.add_parser("evaluate", help="exact throughput and blocking of a policy CSV"))
    p.add_argument("--policy", required=True, help="policy CSV (i,j,k,event,action)")
    p.add_argument("--allow-data-blocking", action="store_true",
                   help="accept A1 on data arrivals while LTE has room (on-the-spot style)")
    p.add_argument("--out", default="-", help="output JSON (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = with_solver(with_config(sub.add_parser("simulate", help="discrete-event simulation of a policy")))
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--policy", choices=("algorithm1", "algorithm2", "on_the_spot"))
    g.add_argument("--policy-csv", help="simulate a policy CSV instead of a built-in")
    p.add_argument("--allow-data-blocking", action="store_true")
    p.add_argument("--b-max", type=float, default=None, help="bound for algorithm2 (default: Erlang-B)")
    p.add_argument("--events", type=int, default=10**6, help="events per replication incl. warm-up")
    p.add_argument("--warmup", type=int, default=10**5)
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="lambda_v / lambda_d sweep comparing the three policies")
    p.add_argument("--spec", help="experiment spec JSON (defaults: lambda_v sweep)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("exact", "sim", "both"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1, help="worker processes for grid points (default 1)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleConstraintError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, EvaluationError, FixedPointError, SimulationError, SweepError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValidationError, CurveError, ThresholdExtractionError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
