"""Parameter sweeps comparing the unconstrained algorithm, the constrained
algorithm and on-the-spot offloading."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .config import ConfigError, ModelConfig, parse_number
from .model import ModelParams, data_threshold
from .oracle import erlang_b, evaluate_policy_exact
from .policy import RandomizedPolicy
from .simulator import SimConfig, policy_algorithm1, policy_algorithm2, policy_on_the_spot, simulate
from .solver import InfeasibleConstraintError, SolverConfig, SolverError, solve_cmdp, solve_unconstrained
from .structure import ThresholdExtractionError, extract_thresholds

log = logging.getLogger(__name__)

__all__ = ["ExperimentSpec", "PointResult", "SweepResult", "SweepError", "run_sweep", "emit_outputs",
           "LAMBDA_V_GRID", "LAMBDA_D_GRID"]

POLICIES = ("algorithm1", "algorithm2", "on_the_spot")
LAMBDA_V_GRID = tuple(round(0.01 + 0.03 * n, 10) for n in range(9))   # 0.01 .. 0.25
LAMBDA_D_GRID = tuple(round(0.1 * n, 10) for n in range(1, 7))        # 0.1 .. 0.6


class SweepError(RuntimeError):
    def __init__(self, index: int, x: float, cause: Exception):
        super().__init__(f"sweep failed at grid point {index} (x={x}): {cause}")
        self.index = index
        self.x = x
        self.cause = cause


@dataclass(frozen=True)
class ExperimentSpec:
    """``B_max=None`` means: use the on-the-spot (Erlang-B) blocking at each point."""

    base: ModelConfig = field(default_factory=ModelConfig)
    sweep_variable: str = "lambda_v"
    grid: tuple = LAMBDA_V_GRID
    B_max: float | None = None
    policies: tuple = POLICIES
    mode: str = "exact"
    sim: SimConfig = field(default_factory=SimConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.sweep_variable not in ("lambda_v", "lambda_d"):
            raise ConfigError("sweep_variable must be 'lambda_v' or 'lambda_d'")
        grid = tuple(float(x) for x in self.grid)
        if not grid:
            raise ConfigError("sweep grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("sweep grid must be strictly increasing")
        if any(x <= 0 for x in grid):
            raise ConfigError("sweep grid values must be positive")
        object.__setattr__(self, "grid", grid)
        if self.B_max is not None and not 0.0 < self.B_max < 1.0:
            raise ConfigError("B_max must lie in (0, 1)")
        unknown = set(self.policies) - set(POLICIES)
        if unknown or not self.policies:
            raise ConfigError(f"policies must be a non-empty subset of {POLICIES}")
        if self.mode not in ("exact", "sim", "both"):
            raise ConfigError("mode must be 'exact', 'sim' or 'both'")

    def replace(self, **changes) -> "ExperimentSpec":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "sweep_variable": self.sweep_variable,
            "grid": list(self.grid),
            "B_max": self.B_max if self.B_max is not None else "erlang_b",
            "policies": list(self.policies),
            "mode": self.mode,
            "sim": {f.name: getattr(self.sim, f.name) for f in fields(self.sim)},
            "solver": {f.name: getattr(self.solver, f.name) for f in fields(self.solver)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        known = {"base", "sweep_variable", "grid", "B_max", "policies", "mode", "sim", "solver"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
        kw = {}
        if "base" in d:
            kw["base"] = ModelConfig.from_dict(d["base"])
        var = d.get("sweep_variable", "lambda_v")
        kw["sweep_variable"] = var
        if "grid" in d:
            kw["grid"] = tuple(parse_number(x, "grid") for x in d["grid"])
        else:
            kw["grid"] = LAMBDA_V_GRID if var == "lambda_v" else LAMBDA_D_GRID
        bm = d.get("B_max")
        kw["B_max"] = None if bm in (None, "erlang_b") else parse_number(bm, "B_max")
        if "policies" in d:
            kw["policies"] = tuple(d["policies"])
        if "mode" in d:
            kw["mode"] = d["mode"]
        try:
            if "sim" in d:
                kw["sim"] = SimConfig(**d["sim"])
            if "solver" in d:
                kw["solver"] = SolverConfig(**d["solver"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class PointResult:
    index: int
    x: float
    params: ModelParams
    diagnostics: dict
    exact: dict = field(default_factory=dict)   # policy -> {"blocking", "throughput_mbps"}
    sim: dict = field(default_factory=dict)     # policy -> SimMetrics.to_dict()


@dataclass
class SweepResult:
    spec: ExperimentSpec
    points: list
    config_hash: str

    def series(self, policy: str, metric: str, mode: str = "exact") -> np.ndarray:
        key = {"blocking": ("blocking", "blocking_fraction"),
               "throughput_mbps": ("throughput_mbps", "mean_throughput_mbps")}[metric]
        if mode == "exact":
            return np.array([pt.exact[policy][key[0]] for pt in self.points])
        return np.array([pt.sim[policy][key[1]] for pt in self.points])

    def rows(self) -> list[list]:
        out = []
        for pt in self.points:
            ref = pt.exact.get("on_the_spot", {}).get("throughput_mbps")
            for pol in self.spec.policies:
                if pol in pt.exact:
                    ex = pt.exact[pol]
                    out.append([self.config_hash, self.spec.sweep_variable, pt.x, pol, "exact", "blocking",
                                ex["blocking"], "", ""])
                    out.append([self.config_hash, self.spec.sweep_variable, pt.x, pol, "exact", "throughput_mbps",
                                ex["throughput_mbps"], "", ""])
                    if ref:
                        out.append([self.config_hash, self.spec.sweep_variable, pt.x, pol, "exact",
                                    "throughput_gain_pct", 100.0 * (ex["throughput_mbps"] / ref - 1.0), "", ""])
                if pol in pt.sim:
                    sm = pt.sim[pol]
                    out.append([self.config_hash, self.spec.sweep_variable, pt.x, pol, "sim", "blocking",
                                sm["blocking_fraction"], *sm["blocking_ci95"]])
                    out.append([self.config_hash, self.spec.sweep_variable, pt.x, pol, "sim", "throughput_mbps",
                                sm["mean_throughput_mbps"], *sm["throughput_ci95"]])
        return out


def _point_params(spec: ExperimentSpec, x: float) -> ModelParams:
    return spec.base.replace(**{spec.sweep_variable: x}).build()


def _guarded_point(spec: ExperimentSpec, idx: int, x: float) -> PointResult:
    try:
        return _run_point(spec, idx, x)
    except (SolverError, ThresholdExtractionError, ArithmeticError) as exc:
        raise SweepError(idx, x, exc) from exc


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> SweepResult:
    """Evaluate every grid point.  With ``workers > 1`` points run in worker
    processes; results are still assembled in grid order, so outputs do not
    depend on the worker count."""
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    args = list(enumerate(spec.grid))
    if workers == 1 or len(args) == 1:
        points = [_guarded_point(spec, idx, x) for idx, x in args]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
            futures = [pool.submit(_guarded_point, spec, idx, x) for idx, x in args]
            points = [f.result() for f in futures]
    return SweepResult(spec, points, spec.config_hash())


def _run_point(spec: ExperimentSpec, idx: int, x: float) -> PointResult:
    params = _point_params(spec, x)
    k_th, valid = data_threshold(params)
    B_erlang = erlang_b(params.C, params.lambda_v / params.mu_v)
    B_max = spec.B_max if spec.B_max is not None else B_erlang
    diag = {"x": x, "W": params.W, "k_th": k_th, "threshold_condition_valid": valid, "B_max": B_max,
            "erlang_b": B_erlang}
    impls = {}
    if "algorithm1" in spec.policies:
        res = solve_unconstrained(params, spec.solver)
        diag["g_unconstrained"] = res.g
        diag["via_iterations"] = res.iterations
        try:
            tables = extract_thresholds(res.policy, params, k_th)
            impls["algorithm1"] = policy_algorithm1(tables)
            diag["thresholds"] = tables.to_dict()
        except ThresholdExtractionError as exc:
            log.warning("point %d: %s; simulating the solved policy directly", idx, exc)
            diag["thresholds"] = None
            diag["extraction_error"] = str(exc)
            from .simulator import PolicyImpl
            impls["algorithm1"] = PolicyImpl("algorithm1", res.policy, res.policy, 1.0)
    if "algorithm2" in spec.policies:
        try:
            cm = solve_cmdp(params, B_max, spec.solver)
            rp = cm.policy
            diag["cmdp"] = {k: v for k, v in cm.diagnostics().items() if k != "beta_trace"}
        except InfeasibleConstraintError as exc:
            # keep going with the least-blocking policy and record the bound
            log.info("point %d: constraint infeasible, B_min=%.6g", idx, exc.B_min)
            rp = RandomizedPolicy.pure(exc.policy)
            diag["cmdp"] = {"status": "infeasible", "B_max": B_max, "B_min": exc.B_min}
        impls["algorithm2"] = policy_algorithm2(rp)
    if "on_the_spot" in spec.policies:
        impls["on_the_spot"] = policy_on_the_spot(params)

    pt = PointResult(idx, x, params, diag)
    for name in spec.policies:
        impl = impls[name]
        if spec.mode in ("exact", "both"):
            ev = evaluate_policy_exact(RandomizedPolicy(impl.low, impl.high, impl.p), params)
            pt.exact[name] = {"blocking": ev.blocking, "throughput_mbps": ev.throughput}
        if spec.mode in ("sim", "both"):
            pt.sim[name] = simulate(impl, params, spec.sim).to_dict()
    return pt


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit_outputs(result: SweepResult, out_dir) -> list[Path]:
    """Write sweep.csv, config.json, diagnostics.json and one plot-data CSV per metric."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "sweep_variable", "x", "policy", "mode", "metric", "value", "ci_low", "ci_high"])
    for row in result.rows():
        w.writerow([_fmt(v) for v in row])
    p = out / "sweep.csv"
    p.write_text(buf.getvalue())
    written.append(p)

    p = out / "config.json"
    p.write_text(json.dumps({"config_hash": result.config_hash, "spec": result.spec.to_dict()},
                            indent=2, sort_keys=True, default=repr) + "\n")
    written.append(p)

    p = out / "diagnostics.json"
    p.write_text(json.dumps({"config_hash": result.config_hash,
                             "points": [pt.diagnostics for pt in result.points]},
                            indent=2, sort_keys=True, default=repr) + "\n")
    written.append(p)

    var = result.spec.sweep_variable
    mode = "exact" if result.spec.mode in ("exact", "both") else "sim"
    for metric, stem in (("blocking", "blocking"), ("throughput_mbps", "throughput")):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([var, *result.spec.policies])
        cols = [result.series(pol, metric, mode) for pol in result.spec.policies]
        for n, pt in enumerate(result.points):
            w.writerow([repr(pt.x), *(repr(float(c[n])) for c in cols)])
        p = out / f"{stem}_vs_{var}.csv"
        p.write_text(buf.getvalue())
        written.append(p)
    return written
