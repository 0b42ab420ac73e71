"""Elicitation loops: line-restricted discrete search, continuous batch
search with a no-preference fallback chain, and the random-pair baseline.

The engine is an explicit state machine: :func:`advance` computes the next
pending query (running acquisition when needed) and :func:`respond` folds an
answer back in. Synchronous oracles are driven by :func:`run`; a human
session driver (the HTTP service) calls advance/respond directly and may
serialize the state between calls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from .acquisition import (
    AcquisitionConfig,
    Recommendation,
    maximize_qeubo_continuous,
    maximize_qeubo_discrete,
    recommend,
)
from .domain import (
    Configuration,
    ParameterSpace,
    same_point,
    snap_to_grid,
    sobol_engine,
)
from .errors import ContractViolation, NumericalError, StalledUserError
from .model import (
    ComparisonDataset,
    ComparisonRecord,
    KernelConfig,
    LikelihoodConfig,
    LaplacePosterior,
    default_kernel,
    fit_hyperparameters,
    fit_laplace,
    logistic_likelihood,
    probit_likelihood,
)

ALGORITHMS = ("eubo_linecospar", "bpe4prost", "random_pairs")
LINE_NODE_CAP = 200
MAX_RANDOM_FALLBACKS = 10


@dataclass(frozen=True)
class Seeds:
    sobol_seed: int = 0
    mc_seed: int = 0
    line_seed: int = 0


@dataclass(frozen=True)
class LoopConfig:
    algorithm: str
    n_init_pairs: int
    budget: int
    n_stop: int
    stability_fraction: float = 0.10
    refit_every_n: int = 1
    seeds: Seeds = Seeds()

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ContractViolation(f"unknown algorithm {self.algorithm!r}")
        if self.n_init_pairs < 1:
            raise ContractViolation("n_init_pairs must be >= 1")
        if self.budget < 0:
            raise ContractViolation("budget must be >= 0")
        if self.n_stop < 1 or (self.budget >= 1 and self.n_stop > self.budget):
            raise ContractViolation("need 1 <= n_stop <= budget")
        if not 0.0 < self.stability_fraction <= 1.0:
            raise ContractViolation("stability_fraction must be in (0, 1]")
        if self.refit_every_n < 1:
            raise ContractViolation("refit_every_n must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    kernel: KernelConfig
    likelihood: LikelihoodConfig


def default_model_config(algorithm: str, dimension: int) -> ModelConfig:
    """Per-algorithm defaults: probit + exponential kernel for the discrete
    line search, logistic + Matern 5/2 for the continuous methods."""
    if algorithm == "eubo_linecospar":
        return ModelConfig(default_kernel("exponential", dimension), probit_likelihood())
    return ModelConfig(default_kernel("matern52", dimension), logistic_likelihood())


class PreferenceOracle(Protocol):
    def answer(self, first: Configuration, second: Configuration) -> str:
        """Return 'first', 'second', or 'no_preference' for the shown pair."""
        ...


@dataclass(frozen=True)
class LineSet:
    """Grid nodes along a random direction through the incumbent."""

    origin: Configuration
    direction: tuple[float, ...]
    nodes: tuple[Configuration, ...]


@dataclass(frozen=True)
class PendingQuery:
    """A query awaiting an answer; first/second are in algorithm order."""

    first: Configuration
    second: Configuration
    presentation_order: str  # "as_is" | "swapped"
    kind: str  # "init" | "duel" | "fallback_third" | "fallback_random"
    iteration: int

    @property
    def shown(self) -> tuple[Configuration, Configuration]:
        if self.presentation_order == "swapped":
            return self.second, self.first
        return self.first, self.second

    def winner_from_shown(self, shown_answer: str) -> str:
        """Map an answer about the shown order back to algorithm order."""
        if shown_answer == "no_preference":
            return shown_answer
        if shown_answer not in ("first", "second"):
            raise ContractViolation(f"bad answer {shown_answer!r}")
        if self.presentation_order == "swapped":
            return "second" if shown_answer == "first" else "first"
        return shown_answer


@dataclass(eq=False)
class LoopState:
    """Complete, serializable state of one elicitation run."""

    config: LoopConfig
    dataset: ComparisonDataset = field(default_factory=ComparisonDataset.empty)
    iteration: int = 0
    current_pref: Configuration | None = None
    recommendation_history: tuple[Recommendation, ...] = ()
    stop_reason: str = "none_yet"  # "none_yet" | "budget_exhausted" | "stability"
    rng_state: dict = field(default_factory=dict)
    phase: str = "init"  # "init" | "optimize" | "done"
    init_pairs_done: int = 0
    kernel: KernelConfig | None = None
    stability_count: int = 0
    stability_streak: tuple[tuple[float, ...], ...] = ()
    pending: PendingQuery | None = None
    pending_batch: tuple[Configuration, ...] | None = None
    random_fallbacks: int = 0
    no_pref_retentions: int = 0
    last_line: LineSet | None = None
    final_choice: Configuration | None = None
    _posterior: LaplacePosterior | None = field(default=None, repr=False)

    @property
    def done(self) -> bool:
        return self.phase == "done"

    @property
    def posterior(self) -> LaplacePosterior | None:
        return self._posterior


def _evolve(state: LoopState, **changes) -> LoopState:
    """replace() that drops the cached posterior when the dataset moves."""
    if "dataset" in changes and "_posterior" not in changes:
        changes["_posterior"] = None
    return replace(state, **changes)


# ---------------------------------------------------------------------------
# RNG plumbing
# ---------------------------------------------------------------------------


class _RngBundle:
    """Sobol stream + auxiliary generators, restorable from a state dict."""

    def __init__(self, space: ParameterSpace, cfg: LoopConfig, snapshot: dict | None):
        seeds = cfg.seeds
        self.space = space
        self.sobol_count = snapshot.get("sobol_count", 0) if snapshot else 0
        self.engine = sobol_engine(space, seeds.sobol_seed)
        if self.sobol_count:
            self.engine.fast_forward(self.sobol_count)
        self.line = np.random.default_rng([seeds.line_seed, 0x11])
        self.presentation = np.random.default_rng([seeds.line_seed, 0x22])
        if snapshot:
            if snapshot.get("line"):
                self.line.bit_generator.state = snapshot["line"]
            if snapshot.get("presentation"):
                self.presentation.bit_generator.state = snapshot["presentation"]

    def draw_sobol(self) -> Configuration:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            row = self.engine.random(1)[0]
        self.sobol_count += 1
        point = Configuration.from_array(row)
        if self.space.mode == "grid":
            point = snap_to_grid(self.space, point)
        return point

    def draw_presentation(self) -> str:
        return "swapped" if self.presentation.random() < 0.5 else "as_is"

    def draw_uniform(self) -> Configuration:
        return Configuration.from_array(self.line.random(self.space.dimension))

    def to_dict(self) -> dict:
        return {
            "sobol_count": self.sobol_count,
            "line": self.line.bit_generator.state,
            "presentation": self.presentation.bit_generator.state,
        }


# ---------------------------------------------------------------------------
# State construction and posterior upkeep
# ---------------------------------------------------------------------------


def new_state(space: ParameterSpace, cfg: LoopConfig) -> LoopState:
    if cfg.algorithm == "eubo_linecospar" and space.mode != "grid":
        raise ContractViolation("eubo_linecospar requires a grid-mode space")
    if cfg.algorithm in ("bpe4prost", "random_pairs") and space.mode != "continuous":
        raise ContractViolation(f"{cfg.algorithm} requires a continuous space")
    rngs = _RngBundle(space, cfg, None)
    return LoopState(config=cfg, rng_state=rngs.to_dict())


def _ensure_posterior(
    state: LoopState, space: ParameterSpace, model_cfg: ModelConfig
) -> LoopState:
    if state._posterior is not None:
        return state
    kernel = state.kernel
    if kernel is None:
        kernel = fit_hyperparameters(state.dataset, model_cfg.kernel, model_cfg.likelihood)
    post = fit_laplace(state.dataset, kernel, model_cfg.likelihood)
    return _evolve(state, kernel=kernel, _posterior=post)


def _build_line(
    space: ParameterSpace, origin: Configuration, rng: np.random.Generator
) -> LineSet:
    d = space.dimension
    direction = rng.standard_normal(d)
    while float(np.linalg.norm(direction)) < 1e-12:
        direction = rng.standard_normal(d)
    direction = direction / np.linalg.norm(direction)
    h = 1.0 / (space.points_per_dim - 1)
    origin_arr = origin.array

    def walk(sign: int):
        out = []
        t = 1
        while True:
            p = origin_arr + sign * t * h * direction
            if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
                break
            out.append(snap_to_grid(space, Configuration.from_array(np.clip(p, 0.0, 1.0))))
            t += 1
        return out

    pos, neg = walk(+1), walk(-1)
    ordered = [origin]
    for i in range(max(len(pos), len(neg))):
        if i < len(pos):
            ordered.append(pos[i])
        if i < len(neg):
            ordered.append(neg[i])
    seen, nodes = set(), []
    for node in ordered:
        if node.coords not in seen:
            seen.add(node.coords)
            nodes.append(node)
        if len(nodes) >= LINE_NODE_CAP:
            break
    return LineSet(origin=origin, direction=tuple(direction), nodes=tuple(nodes))


# ---------------------------------------------------------------------------
# advance / respond
# ---------------------------------------------------------------------------


def advance(
    state: LoopState,
    space: ParameterSpace,
    model_cfg: ModelConfig | None,
    acq_cfg: AcquisitionConfig | None,
) -> tuple[LoopState, PendingQuery | None]:
    """Produce the next pending query, or (state, None) once the run stopped."""
    cfg = state.config
    if state.phase == "done":
        return state, None
    if state.pending is not None:
        return state, state.pending
    rngs = _RngBundle(space, cfg, state.rng_state or None)

    if state.phase == "init":
        first = rngs.draw_sobol()
        second = rngs.draw_sobol()
        guard = 0
        while same_point(first, second):
            second = rngs.draw_sobol()
            guard += 1
            if guard > 50:
                raise NumericalError("could not draw two distinct initial points")
        pq = PendingQuery(first, second, rngs.draw_presentation(), "init", 0)
        return _evolve(state, pending=pq, rng_state=rngs.to_dict()), pq

    if model_cfg is None or acq_cfg is None:
        raise ContractViolation("optimization phase requires model and acquisition configs")
    n = state.iteration + 1
    state = _ensure_posterior(state, space, model_cfg)
    post = state._posterior
    acq = replace(acq_cfg, seed=cfg.seeds.mc_seed + n)

    if cfg.algorithm == "eubo_linecospar":
        line = _build_line(space, state.current_pref, rngs.line)
        line_keys = {node.coords for node in line.nodes}
        candidates = list(line.nodes) + [
            w for w in state.dataset.visited if w.coords not in line_keys
        ]
        challenger = maximize_qeubo_discrete(
            post, candidates, acq, fixed_first=state.current_pref
        )
        pq = PendingQuery(state.current_pref, challenger, rngs.draw_presentation(), "duel", n)
        return _evolve(state, pending=pq, last_line=line, rng_state=rngs.to_dict()), pq

    if cfg.algorithm == "bpe4prost":
        batch = maximize_qeubo_continuous(post, space, acq)
        fixed = [batch[0]]
        for b in batch[1:]:
            guard = 0
            while same_point(b, batch[0]):  # degenerate batch: substitute a random point
                b = rngs.draw_uniform()
                guard += 1
                if guard > 50:
                    raise NumericalError("could not build a distinct batch")
            fixed.append(b)
        pq = PendingQuery(fixed[0], fixed[1], rngs.draw_presentation(), "duel", n)
        new = _evolve(
            state, pending=pq, pending_batch=tuple(fixed), rng_state=rngs.to_dict()
        )
        return new, pq

    # random_pairs
    p1 = rngs.draw_sobol()
    p2 = rngs.draw_sobol()
    pq = PendingQuery(p1, p2, rngs.draw_presentation(), "duel", n)
    return _evolve(state, pending=pq, rng_state=rngs.to_dict()), pq


def _refit_and_recommend(
    state: LoopState,
    space: ParameterSpace,
    model_cfg: ModelConfig,
    scope: str,
    n: int,
    dataset_changed: bool,
) -> LoopState:
    cfg = state.config
    if dataset_changed or state._posterior is None:
        kernel = state.kernel
        if dataset_changed and (kernel is None or n % cfg.refit_every_n == 0):
            base = kernel if kernel is not None else model_cfg.kernel
            kernel = fit_hyperparameters(state.dataset, base, model_cfg.likelihood)
        if kernel is None:
            kernel = fit_hyperparameters(state.dataset, model_cfg.kernel, model_cfg.likelihood)
        post = fit_laplace(state.dataset, kernel, model_cfg.likelihood)
        state = _evolve(state, kernel=kernel, _posterior=post)
    rec = replace(recommend(state._posterior, space, scope), iteration=n)
    return _evolve(state, recommendation_history=state.recommendation_history + (rec,))


def _within_streak(
    streak: tuple[tuple[float, ...], ...], point: tuple[float, ...], fraction: float
) -> bool:
    return all(
        all(abs(a - b) <= fraction + 1e-12 for a, b in zip(member, point))
        for member in streak
    )


def respond(
    state: LoopState,
    space: ParameterSpace,
    model_cfg: ModelConfig | None,
    acq_cfg: AcquisitionConfig | None,
    winner: str,
) -> LoopState:
    """Fold an algorithm-order answer ('first'/'second'/'no_preference') in."""
    cfg = state.config
    pq = state.pending
    if pq is None:
        raise ContractViolation("no pending query to respond to")

    if pq.kind == "init":
        if winner == "no_preference":
            # discarded pair; the next advance() draws a fresh one
            return _evolve(state, pending=None)
        record = ComparisonRecord(pq.first, pq.second, winner)
        new = _evolve(
            state,
            dataset=state.dataset.with_record(record),
            pending=None,
            init_pairs_done=state.init_pairs_done + 1,
        )
        if new.init_pairs_done == cfg.n_init_pairs:
            changes: dict = {"phase": "optimize"}
            if cfg.algorithm == "eubo_linecospar":
                changes["current_pref"] = record.winning
            if cfg.budget == 0:
                changes["phase"] = "done"
                changes["stop_reason"] = "budget_exhausted"
            new = _evolve(new, **changes)
        return new

    if model_cfg is None:
        raise ContractViolation("optimization phase requires a model config")
    n = pq.iteration

    if cfg.algorithm == "eubo_linecospar":
        if winner == "no_preference":
            dataset_changed = False
            pref = state.current_pref
            changed = False
            new = _evolve(
                state,
                pending=None,
                no_pref_retentions=state.no_pref_retentions + 1,
            )
        else:
            record = ComparisonRecord(pq.first, pq.second, winner)
            pref = record.winning
            changed = not same_point(pref, state.current_pref)
            dataset_changed = True
            new = _evolve(state, dataset=state.dataset.with_record(record), pending=None)
        new = _evolve(
            new,
            iteration=n,
            current_pref=pref,
            stability_count=0 if changed else state.stability_count + 1,
        )
        new = _refit_and_recommend(new, space, model_cfg, "visited_only", n, dataset_changed)
        new = _evolve(new, final_choice=new.current_pref)
        if new.stability_count >= cfg.n_stop:
            return _evolve(new, phase="done", stop_reason="stability")
        if n >= cfg.budget:
            return _evolve(new, phase="done", stop_reason="budget_exhausted")
        return new

    if cfg.algorithm == "bpe4prost":
        if winner == "no_preference":
            batch = state.pending_batch
            rngs = _RngBundle(space, cfg, state.rng_state or None)
            if pq.kind == "duel" and len(batch) >= 3:
                nxt = PendingQuery(
                    batch[0], batch[2], rngs.draw_presentation(), "fallback_third", n
                )
                return _evolve(state, pending=nxt, rng_state=rngs.to_dict())
            if state.random_fallbacks >= MAX_RANDOM_FALLBACKS:
                raise StalledUserError(
                    f"{MAX_RANDOM_FALLBACKS} consecutive no-preference fallbacks"
                )
            x_rand = rngs.draw_uniform()
            guard = 0
            while same_point(x_rand, batch[0]):
                x_rand = rngs.draw_uniform()
                guard += 1
                if guard > 50:
                    raise NumericalError("could not draw a distinct fallback point")
            nxt = PendingQuery(
                batch[0], x_rand, rngs.draw_presentation(), "fallback_random", n
            )
            return _evolve(
                state,
                pending=nxt,
                random_fallbacks=state.random_fallbacks + 1,
                rng_state=rngs.to_dict(),
            )
        record = ComparisonRecord(pq.first, pq.second, winner)
        new = _evolve(
            state,
            dataset=state.dataset.with_record(record),
            pending=None,
            pending_batch=None,
            random_fallbacks=0,
            iteration=n,
        )
        new = _refit_and_recommend(new, space, model_cfg, "continuous", n, True)
        rec = new.recommendation_history[-1]
        point = rec.point.coords
        if state.stability_streak and _within_streak(
            state.stability_streak, point, cfg.stability_fraction
        ):
            streak = state.stability_streak + (point,)
        else:
            streak = (point,)
        new = _evolve(new, stability_streak=streak, final_choice=rec.point)
        if len(streak) >= cfg.n_stop:
            return _evolve(new, phase="done", stop_reason="stability")
        if n >= cfg.budget:
            return _evolve(new, phase="done", stop_reason="budget_exhausted")
        return new

    # random_pairs
    if winner == "no_preference":
        return _evolve(state, pending=None)
    record = ComparisonRecord(pq.first, pq.second, winner)
    new = _evolve(
        state,
        dataset=state.dataset.with_record(record),
        pending=None,
        iteration=n,
    )
    new = _refit_and_recommend(new, space, model_cfg, "continuous", n, True)
    new = _evolve(new, final_choice=new.recommendation_history[-1].point)
    if n >= cfg.budget:
        return _evolve(new, phase="done", stop_reason="budget_exhausted")
    return new


# ---------------------------------------------------------------------------
# Oracle-driven wrappers
# ---------------------------------------------------------------------------


def _ask(pq: PendingQuery, oracle: PreferenceOracle) -> str:
    shown_first, shown_second = pq.shown
    return pq.winner_from_shown(oracle.answer(shown_first, shown_second))


def init_phase(
    space: ParameterSpace, cfg: LoopConfig, oracle: PreferenceOracle
) -> LoopState:
    """Run the random-pair initialization to completion."""
    state = new_state(space, cfg)
    while state.phase == "init":
        state, pq = advance(state, space, None, None)
        state = respond(state, space, None, None, _ask(pq, oracle))
    return state


def _step(
    state: LoopState,
    space: ParameterSpace,
    model_cfg: ModelConfig,
    acq_cfg: AcquisitionConfig,
    oracle: PreferenceOracle,
) -> LoopState:
    if state.phase != "optimize":
        raise ContractViolation(f"cannot step a loop in phase {state.phase!r}")
    target = state.iteration + 1
    while state.phase == "optimize" and state.iteration < target:
        state, pq = advance(state, space, model_cfg, acq_cfg)
        if pq is None:
            break
        state = respond(state, space, model_cfg, acq_cfg, _ask(pq, oracle))
    return state


def step_linecospar(state, space, model_cfg, acq_cfg, oracle) -> LoopState:
    """One iteration of the discrete line-restricted loop."""
    if state.config.algorithm != "eubo_linecospar":
        raise ContractViolation("state was built for a different algorithm")
    return _step(state, space, model_cfg, acq_cfg, oracle)


def step_bpe4prost(state, space, model_cfg, acq_cfg, oracle) -> LoopState:
    """One iteration of the continuous loop, including its fallback chain."""
    if state.config.algorithm != "bpe4prost":
        raise ContractViolation("state was built for a different algorithm")
    return _step(state, space, model_cfg, acq_cfg, oracle)


def step_random(state, space, model_cfg, oracle, acq_cfg=None) -> LoopState:
    """One iteration of the random-pair baseline."""
    if state.config.algorithm != "random_pairs":
        raise ContractViolation("state was built for a different algorithm")
    return _step(state, space, model_cfg, acq_cfg or AcquisitionConfig(q=2), oracle)


def run(
    space: ParameterSpace,
    cfg: LoopConfig,
    model_cfg: ModelConfig,
    acq_cfg: AcquisitionConfig,
    oracle: PreferenceOracle,
    iteration_hook: Callable[[LoopState], None] | None = None,
) -> LoopState:
    """Initialization plus optimization until budget or stability stop."""
    state = init_phase(space, cfg, oracle)
    return resume(state, space, cfg, model_cfg, acq_cfg, oracle, iteration_hook)


def resume(
    state: LoopState,
    space: ParameterSpace,
    cfg: LoopConfig,
    model_cfg: ModelConfig,
    acq_cfg: AcquisitionConfig,
    oracle: PreferenceOracle,
    iteration_hook: Callable[[LoopState], None] | None = None,
) -> LoopState:
    """Continue a (possibly deserialized) run to its stopping point."""
    if state.config != cfg:
        raise ContractViolation("state carries a different loop config")
    while not state.done:
        before = state.iteration
        if state.phase == "init":
            state, pq = advance(state, space, None, None)
            state = respond(state, space, None, None, _ask(pq, oracle))
            continue
        state, pq = advance(state, space, model_cfg, acq_cfg)
        if pq is None:
            break
        state = respond(state, space, model_cfg, acq_cfg, _ask(pq, oracle))
        if iteration_hook is not None and state.iteration > before:
            iteration_hook(state)
    return state


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _config_to_dict(cfg: LoopConfig) -> dict:
    return {
        "algorithm": cfg.algorithm,
        "n_init_pairs": cfg.n_init_pairs,
        "budget": cfg.budget,
        "n_stop": cfg.n_stop,
        "stability_fraction": cfg.stability_fraction,
        "refit_every_n": cfg.refit_every_n,
        "seeds": [cfg.seeds.sobol_seed, cfg.seeds.mc_seed, cfg.seeds.line_seed],
    }


def config_from_dict(data: dict) -> LoopConfig:
    return LoopConfig(
        algorithm=data["algorithm"],
        n_init_pairs=data["n_init_pairs"],
        budget=data["budget"],
        n_stop=data["n_stop"],
        stability_fraction=data.get("stability_fraction", 0.10),
        refit_every_n=data.get("refit_every_n", 1),
        seeds=Seeds(*data.get("seeds", [0, 0, 0])),
    )


def _kernel_to_dict(kernel: KernelConfig | None) -> dict | None:
    if kernel is None:
        return None
    return {
        "family": kernel.family,
        "lengthscales": list(kernel.lengthscales),
        "output_scale": kernel.output_scale,
        "prior_lengthscale": [list(p) for p in kernel.prior_lengthscale],
        "prior_outputscale": list(kernel.prior_outputscale),
        "fit_warning": kernel.fit_warning,
    }


def _kernel_from_dict(data: dict | None) -> KernelConfig | None:
    if data is None:
        return None
    return KernelConfig(
        family=data["family"],
        lengthscales=tuple(data["lengthscales"]),
        output_scale=data["output_scale"],
        prior_lengthscale=tuple(tuple(p) for p in data["prior_lengthscale"]),
        prior_outputscale=tuple(data["prior_outputscale"]),
        fit_warning=data.get("fit_warning", False),
    )


def _coords(cfg: Configuration | None):
    return None if cfg is None else list(cfg.coords)


def _config_point(data) -> Configuration | None:
    return None if data is None else Configuration(tuple(data))


def _pending_to_dict(pq: PendingQuery | None) -> dict | None:
    if pq is None:
        return None
    return {
        "first": list(pq.first.coords),
        "second": list(pq.second.coords),
        "presentation_order": pq.presentation_order,
        "kind": pq.kind,
        "iteration": pq.iteration,
    }


def _pending_from_dict(data: dict | None) -> PendingQuery | None:
    if data is None:
        return None
    return PendingQuery(
        first=Configuration(tuple(data["first"])),
        second=Configuration(tuple(data["second"])),
        presentation_order=data["presentation_order"],
        kind=data["kind"],
        iteration=data["iteration"],
    )


def serialize_state(state: LoopState) -> dict:
    return {
        "version": 1,
        "config": _config_to_dict(state.config),
        "dataset": state.dataset.to_dict(),
        "iteration": state.iteration,
        "current_pref": _coords(state.current_pref),
        "recommendations": [
            {"point": list(r.point.coords), "mean": r.posterior_mean, "iteration": r.iteration}
            for r in state.recommendation_history
        ],
        "stop_reason": state.stop_reason,
        "rng_state": state.rng_state,
        "phase": state.phase,
        "init_pairs_done": state.init_pairs_done,
        "kernel": _kernel_to_dict(state.kernel),
        "stability_count": state.stability_count,
        "stability_streak": [list(p) for p in state.stability_streak],
        "pending": _pending_to_dict(state.pending),
        "pending_batch": (
            None
            if state.pending_batch is None
            else [list(c.coords) for c in state.pending_batch]
        ),
        "random_fallbacks": state.random_fallbacks,
        "no_pref_retentions": state.no_pref_retentions,
        "final_choice": _coords(state.final_choice),
    }


def deserialize_state(data: dict) -> LoopState:
    if data.get("version") != 1:
        raise ContractViolation(f"unsupported state version {data.get('version')!r}")
    return LoopState(
        config=config_from_dict(data["config"]),
        dataset=ComparisonDataset.from_dict(data["dataset"]),
        iteration=data["iteration"],
        current_pref=_config_point(data["current_pref"]),
        recommendation_history=tuple(
            Recommendation(
                point=Configuration(tuple(r["point"])),
                posterior_mean=r["mean"],
                iteration=r["iteration"],
            )
            for r in data["recommendations"]
        ),
        stop_reason=data["stop_reason"],
        rng_state=data["rng_state"],
        phase=data["phase"],
        init_pairs_done=data["init_pairs_done"],
        kernel=_kernel_from_dict(data["kernel"]),
        stability_count=data["stability_count"],
        stability_streak=tuple(tuple(p) for p in data["stability_streak"]),
        pending=_pending_from_dict(data["pending"]),
        pending_batch=(
            None
            if data["pending_batch"] is None
            else tuple(Configuration(tuple(c)) for c in data["pending_batch"])
        ),
        random_fallbacks=data["random_fallbacks"],
        no_pref_retentions=data["no_pref_retentions"],
        final_choice=_config_point(data["final_choice"]),
    )
