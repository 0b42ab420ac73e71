"""Benchmark utilities: ground-truth functions, simulated preference oracles,
simple-regret evaluation, and the multi-seed experiment runner.

Utilities are negated standard minimization test functions so that higher is
better, matching the latent-utility convention of the elicitation loops.
Inputs are unit-cube coordinates; each function maps them to its canonical
native box internally.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .acquisition import AcquisitionConfig, Recommendation
from .domain import Configuration, ParameterSpace, ParameterSpec
from .errors import ConfigError, ContractViolation
from .loops import (
    LoopConfig,
    LoopState,
    Seeds,
    default_model_config,
    run,
)

logger = logging.getLogger(__name__)

REGRET_CLIP = 1e-12
LOG10_FLOOR = -12.0


# ---------------------------------------------------------------------------
# Ground-truth functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkFunction:
    """A ground-truth latent utility with its canonical native domain."""

    name: str
    dimension: int
    native_lower: tuple[float, ...]
    native_upper: tuple[float, ...]
    minimize_fn: Callable[[np.ndarray], float] = field(repr=False)
    known_max: float | None = None
    known_max_provenance: str = ""

    def to_native(self, x: Configuration) -> np.ndarray:
        lo = np.array(self.native_lower)
        hi = np.array(self.native_upper)
        return lo + x.array * (hi - lo)

    def evaluate(self, x: Configuration) -> float:
        """Utility (negated test-function value) at unit-cube coordinates."""
        if x.dimension != self.dimension:
            raise ContractViolation(
                f"{self.name} expects dimension {self.dimension}, got {x.dimension}"
            )
        return -float(self.minimize_fn(self.to_native(x)))

    def space(self, mode: str = "continuous", points_per_dim: int | None = None) -> ParameterSpace:
        specs = tuple(
            ParameterSpec(name=f"x{j + 1}", lower=self.native_lower[j], upper=self.native_upper[j])
            for j in range(self.dimension)
        )
        return ParameterSpace(specs=specs, mode=mode, points_per_dim=points_per_dim)


def _branin(x: np.ndarray) -> float:
    x1, x2 = x
    a, b, c = 1.0, 5.1 / (4.0 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8.0 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1.0 - t) * math.cos(x1) + s


def _ackley(x: np.ndarray) -> float:
    a, b, c = 20.0, 0.2, 2.0 * math.pi
    n = x.size
    # grouped so both terms cancel exactly at the origin
    return float(
        a * (1.0 - np.exp(-b * np.sqrt(np.sum(x**2) / n)))
        + (np.exp(1.0) - np.exp(np.sum(np.cos(c * x)) / n))
    )


def _alpine1(x: np.ndarray) -> float:
    return float(np.sum(np.abs(x * np.sin(x) + 0.1 * x)))


_HARTMANN4_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN4_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5],
        [0.05, 10.0, 17.0, 0.1],
        [3.0, 3.5, 1.7, 10.0],
        [17.0, 8.0, 0.05, 10.0],
    ]
)
_HARTMANN4_P = 1e-4 * np.array(
    [
        [1312.0, 1696.0, 5569.0, 124.0],
        [2329.0, 4135.0, 8307.0, 3736.0],
        [2348.0, 1451.0, 3522.0, 2883.0],
        [4047.0, 8828.0, 8732.0, 5743.0],
    ]
)


def _hartmann4(x: np.ndarray) -> float:
    inner = np.sum(_HARTMANN4_A * (x[None, :] - _HARTMANN4_P) ** 2, axis=1)
    return float((1.1 - np.sum(_HARTMANN4_ALPHA * np.exp(-inner))) / 0.839)


_BRANIN_MINIMIZERS = (
    (-math.pi, 12.275),
    (math.pi, 2.275),
    (9.42478, 2.475),
)


def _polish_max(fn: BenchmarkFunction, starts_unit: np.ndarray) -> float:
    """Best utility over local L-BFGS-B polishes from the given unit-cube starts."""
    best = -np.inf
    for s in np.atleast_2d(starts_unit):
        res = minimize(
            lambda u: -fn.evaluate(Configuration.from_array(np.clip(u, 0.0, 1.0))),
            np.clip(s, 0.0, 1.0),
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * fn.dimension,
            options={"maxiter": 200, "ftol": 1e-15, "gtol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return best


def resolve_branin_max(fn: BenchmarkFunction) -> float:
    """Utility at the published minimizers, each polished locally."""
    lo, hi = np.array(fn.native_lower), np.array(fn.native_upper)
    starts = np.array([(np.array(m) - lo) / (hi - lo) for m in _BRANIN_MINIMIZERS])
    return _polish_max(fn, starts)


def resolve_hartmann4_max(fn: BenchmarkFunction, seed: int = 20240601, n_sobol: int = 10_000) -> float:
    """Multi-start local optimization seeded from a Sobol scan."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        pts = qmc.Sobol(d=fn.dimension, scramble=True, seed=seed).random(n_sobol)
    vals = np.array([fn.evaluate(Configuration.from_array(p)) for p in pts])
    top = pts[np.argsort(-vals)[:24]]
    return _polish_max(fn, top)


_BASE_FUNCTIONS: dict[str, BenchmarkFunction] = {
    "branin2": BenchmarkFunction(
        "branin2", 2, (-5.0, 0.0), (10.0, 15.0), _branin
    ),
    "ackley4": BenchmarkFunction(
        "ackley4", 4, (-32.768,) * 4, (32.768,) * 4, _ackley,
        known_max=0.0, known_max_provenance="analytic: vanishes at the origin",
    ),
    "alpine1_4": BenchmarkFunction(
        "alpine1_4", 4, (0.0,) * 4, (10.0,) * 4, _alpine1,
        known_max=0.0, known_max_provenance="analytic: vanishes at the origin",
    ),
    "hartmann4": BenchmarkFunction(
        "hartmann4", 4, (0.0,) * 4, (1.0,) * 4, _hartmann4
    ),
}

_RESOLVED: dict[str, BenchmarkFunction] = {}


def function_names() -> tuple[str, ...]:
    return tuple(_BASE_FUNCTIONS)


def get_function(name: str) -> BenchmarkFunction:
    """Registry lookup; optima without analytic values are resolved once."""
    if name not in _BASE_FUNCTIONS:
        raise ConfigError(f"unknown benchmark function {name!r}; known: {function_names()}")
    if name in _RESOLVED:
        return _RESOLVED[name]
    fn = _BASE_FUNCTIONS[name]
    if fn.known_max is None:
        if name == "branin2":
            value, prov = resolve_branin_max(fn), "derived: polished published minimizers"
        else:
            value, prov = resolve_hartmann4_max(fn), "derived: multi-start from 10^4 Sobol points"
        fn = replace(fn, known_max=value, known_max_provenance=prov)
    _RESOLVED[name] = fn
    return fn


# ---------------------------------------------------------------------------
# Oracle and regret
# ---------------------------------------------------------------------------


class SimulatedOracle:
    """Noiseless oracle: the higher ground-truth utility always wins."""

    def __init__(self, fn: BenchmarkFunction):
        self.fn = fn
        self.ties = 0

    def answer(self, first: Configuration, second: Configuration) -> str:
        ua, ub = self.fn.evaluate(first), self.fn.evaluate(second)
        if ua > ub:
            return "first"
        if ub > ua:
            return "second"
        self.ties += 1
        logger.warning("exact utility tie on %s; reporting 'first'", self.fn.name)
        return "first"


def simulated_oracle(fn: BenchmarkFunction) -> SimulatedOracle:
    return SimulatedOracle(fn)


def simple_regret(fn: BenchmarkFunction, rec: Recommendation) -> float:
    """Gap between the known maximum utility and the recommendation's utility."""
    if fn.known_max is None:
        raise ConfigError(f"{fn.name}: known_max not resolved; use get_function()")
    gap = fn.known_max - fn.evaluate(rec.point)
    if gap < -1e-9:
        raise ContractViolation(f"negative regret {gap}; registry optimum is stale")
    return max(gap, 0.0)


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegretRecord:
    run_id: int
    function: str
    algorithm: str
    iteration: int
    regret: float
    recommendation: Configuration
    wall_ms: int


@dataclass(frozen=True)
class ExperimentPlan:
    functions: tuple[str, ...]
    algorithms: tuple[str, ...]
    n_runs: int = 11
    budget: int = 50
    base_seed: int = 0
    output_path: str | None = None
    grid_points_per_dim: int = 51
    acquisition: AcquisitionConfig | None = None
    workers: int = 1
    timing: bool = True  # False zeroes wall_ms so CSV bytes are reproducible

    def __post_init__(self):
        for f in self.functions:
            if f not in _BASE_FUNCTIONS:
                raise ConfigError(f"unknown function {f!r} in plan")
        from .loops import ALGORITHMS

        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r} in plan")
        if self.n_runs < 1 or self.budget < 1:
            raise ConfigError("n_runs and budget must be >= 1")


@dataclass
class CellResult:
    run_id: int
    function: str
    algorithm: str
    n_comparisons: int
    stop_reason: str
    wall_ms_total: int
    final_state: LoopState | None = None


@dataclass
class ExperimentResult:
    records: list[RegretRecord]
    cells: list[CellResult]
    errors: list[dict]


def _plan_acq(plan: ExperimentPlan) -> AcquisitionConfig:
    # q=2 batches for simulation benchmarks; the leading candidate always wins
    return plan.acquisition or AcquisitionConfig(q=2, mc_samples=256, restarts=4, raw_candidates=128)


def _run_cell(
    plan_dict: dict, function: str, algorithm: str, run_id: int
) -> tuple[list[dict], dict]:
    plan = ExperimentPlan(**{**plan_dict, "workers": 1})
    fn = get_function(function)
    seed = plan.base_seed + run_id
    if algorithm == "eubo_linecospar":
        space = fn.space(mode="grid", points_per_dim=plan.grid_points_per_dim)
    else:
        space = fn.space()
    cfg = LoopConfig(
        algorithm=algorithm,
        n_init_pairs=2 * fn.dimension + 1,
        budget=plan.budget,
        n_stop=plan.budget,
        seeds=Seeds(sobol_seed=seed, mc_seed=seed, line_seed=seed),
    )
    model_cfg = default_model_config(algorithm, fn.dimension)
    acq = _plan_acq(plan)
    oracle = simulated_oracle(fn)

    rows: list[dict] = []
    clock = time.perf_counter
    t_start = clock()
    last_time = [t_start]

    def hook(state: LoopState):
        now = clock()
        rec = state.recommendation_history[-1]
        wall = int(round((now - last_time[0]) * 1000.0)) if plan.timing else 0
        rows.append(
            {
                "run_id": run_id,
                "function": function,
                "algorithm": algorithm,
                "iteration": rec.iteration,
                "regret": simple_regret(fn, rec),
                "coords": list(rec.point.coords),
                "wall_ms": wall,
            }
        )
        last_time[0] = now

    final = run(space, cfg, model_cfg, acq, oracle, iteration_hook=hook)
    summary = {
        "run_id": run_id,
        "function": function,
        "algorithm": algorithm,
        "n_comparisons": len(final.dataset.records),
        "stop_reason": final.stop_reason,
        "wall_ms_total": int(round((clock() - t_start) * 1000.0)),
        "state": final,
    }
    return rows, summary


def run_experiment(plan: ExperimentPlan, keep_states: bool = True) -> ExperimentResult:
    """Execute every (function, algorithm, run) cell with matched seeds.

    Streams one row per optimization iteration to ``plan.output_path`` (CSV),
    writes ``.runs.json`` / ``.errors.json`` sidecars, and returns everything
    in memory as well.
    """
    cells = [
        (f, a, r)
        for f in plan.functions
        for a in plan.algorithms
        for r in range(plan.n_runs)
    ]
    plan_dict = {
        "functions": plan.functions,
        "algorithms": plan.algorithms,
        "n_runs": plan.n_runs,
        "budget": plan.budget,
        "base_seed": plan.base_seed,
        "grid_points_per_dim": plan.grid_points_per_dim,
        "acquisition": plan.acquisition,
        "timing": plan.timing,
    }
    all_rows: list[dict] = []
    summaries: list[dict] = []
    errors: list[dict] = []

    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            futures = {
                pool.submit(_run_cell, plan_dict, f, a, r): (f, a, r) for f, a, r in cells
            }
            for fut, (f, a, r) in futures.items():
                try:
                    rows, summary = fut.result()
                    all_rows.extend(rows)
                    summaries.append(summary)
                except Exception as exc:  # cell failures must not sink the plan
                    errors.append(
                        {"function": f, "algorithm": a, "run_id": r, "error": repr(exc)}
                    )
    else:
        for f, a, r in cells:
            try:
                rows, summary = _run_cell(plan_dict, f, a, r)
                all_rows.extend(rows)
                summaries.append(summary)
            except Exception as exc:
                errors.append(
                    {"function": f, "algorithm": a, "run_id": r, "error": repr(exc)}
                )

    all_rows.sort(key=lambda d: (d["function"], d["algorithm"], d["run_id"], d["iteration"]))
    summaries.sort(key=lambda d: (d["function"], d["algorithm"], d["run_id"]))

    if plan.output_path:
        write_records_csv(plan.output_path, all_rows, plan)
        runs_path = Path(plan.output_path).with_suffix(".runs.json")
        runs_path.write_text(
            json.dumps([{k: v for k, v in s.items() if k != "state"} for s in summaries], indent=1)
        )
        if errors:
            Path(plan.output_path).with_suffix(".errors.json").write_text(
                json.dumps(errors, indent=1)
            )

    records = [
        RegretRecord(
            run_id=d["run_id"],
            function=d["function"],
            algorithm=d["algorithm"],
            iteration=d["iteration"],
            regret=d["regret"],
            recommendation=Configuration(tuple(d["coords"])),
            wall_ms=d["wall_ms"],
        )
        for d in all_rows
    ]
    cell_results = [
        CellResult(
            run_id=s["run_id"],
            function=s["function"],
            algorithm=s["algorithm"],
            n_comparisons=s["n_comparisons"],
            stop_reason=s["stop_reason"],
            wall_ms_total=s["wall_ms_total"],
            final_state=s["state"] if keep_states else None,
        )
        for s in summaries
    ]
    return ExperimentResult(records=records, cells=cell_results, errors=errors)


def write_records_csv(path: str, rows: Sequence[dict], plan: ExperimentPlan) -> None:
    """Lossless CSV: coordinates at 17 significant digits in the unit cube."""
    max_d = max(get_function(f).dimension for f in plan.functions)
    header = ["run_id", "function", "algorithm", "iteration", "regret", "wall_ms"] + [
        f"x_{j + 1}" for j in range(max_d)
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for d in rows:
            coords = [format(c, ".17g") for c in d["coords"]]
            coords += [""] * (max_d - len(coords))
            writer.writerow(
                [
                    d["run_id"],
                    d["function"],
                    d["algorithm"],
                    d["iteration"],
                    format(d["regret"], ".17g"),
                    d["wall_ms"],
                ]
                + coords
            )


def summarize(csv_path: str) -> list[dict]:
    """Per (function, algorithm, iteration): mean and standard error of
    log10 regret, with regret clipped at 1e-12 before the transform."""
    groups: dict[tuple[str, str, int], list[float]] = {}
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "regret" not in reader.fieldnames:
            raise ConfigError(f"{csv_path}: missing header or regret column")
        for i, row in enumerate(reader, start=2):
            try:
                key = (row["function"], row["algorithm"], int(row["iteration"]))
                regret = float(row["regret"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{csv_path}: malformed row {i}: {exc}") from exc
            groups.setdefault(key, []).append(math.log10(max(regret, REGRET_CLIP)))
    out = []
    for (function, algorithm, iteration), vals in sorted(groups.items()):
        arr = np.array(vals)
        stderr = float(np.std(arr, ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        out.append(
            {
                "function": function,
                "algorithm": algorithm,
                "iteration": iteration,
                "mean_log10_regret": float(np.mean(arr)),
                "stderr_log10_regret": stderr,
                "n_runs": len(arr),
            }
        )
    return out


def write_summary_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["function", "algorithm", "iteration", "mean_log10_regret", "stderr_log10_regret", "n_runs"]
        )
        for r in rows:
            writer.writerow(
                [
                    r["function"],
                    r["algorithm"],
                    r["iteration"],
                    format(r["mean_log10_regret"], ".17g"),
                    format(r["stderr_log10_regret"], ".17g"),
                    r["n_runs"],
                ]
            )
