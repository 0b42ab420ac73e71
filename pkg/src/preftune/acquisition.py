"""Expected-utility-of-best-option acquisition and posterior-mean recommendation.

The batch score is the posterior expectation of the maximum utility across
the batch. The Monte Carlo estimator is the reference implementation; it
uses randomly shifted quasi-random normals as common random numbers so that
scores are deterministic per seed, invariant to batch ordering, and directly
comparable across batches within one maximization.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri
from scipy.stats import norm, qmc

from .domain import (
    Configuration,
    ParameterSpace,
    configs_to_matrix,
    make_grid,
    same_point,
)
from .errors import ContractViolation
from .model import (
    LaplacePosterior,
    predict,
    predict_mean,
    predictive_mean_function,
)

_BATCH_JITTER = 1e-12
_GRID_CHUNK = 100_000


@dataclass(frozen=True)
class AcquisitionConfig:
    """Batch size and search-effort knobs for acquisition maximization."""

    q: int
    mc_samples: int = 512
    restarts: int = 8
    raw_candidates: int = 256
    seed: int = 0
    refine_steps: int = 30

    def __post_init__(self):
        if self.q not in (1, 2, 3):
            raise ContractViolation("batch size q must be 1, 2, or 3")
        if self.mc_samples < 64:
            raise ContractViolation("mc_samples must be >= 64")
        if self.restarts < 1 or self.raw_candidates < 1:
            raise ContractViolation("restarts and raw_candidates must be >= 1")


@dataclass(frozen=True)
class Recommendation:
    """Posterior-mean maximizer over some search scope."""

    point: Configuration
    posterior_mean: float
    iteration: int = 0


@lru_cache(maxsize=32)
def _crn_normals(q: int, mc_samples: int, seed: int) -> np.ndarray:
    """(q, mc_samples) standard normals from a seed-shifted Sobol sequence.

    Unscrambled Sobol dimensions nest, and the shift vector is drawn
    per-dimension, so row j is identical across calls with different q.
    That alignment makes batch-monotonicity comparisons exact under common
    random numbers. Cached because one acquisition maximization evaluates
    thousands of batches with the same seed.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = qmc.Sobol(d=q, scramble=False).random(mc_samples)
    shift = np.random.default_rng(seed).random(q)
    shifted = np.clip((u + shift[None, :]) % 1.0, 1e-15, 1.0 - 1e-15)
    z = ndtri(shifted).T
    # per-row moment matching keeps linear functionals exact (q=1 reduces to
    # the predictive mean) without disturbing the row-nesting property
    z = (z - z.mean(axis=1, keepdims=True)) / z.std(axis=1, keepdims=True)
    z.setflags(write=False)
    return z


def _canonical_order(batch: Sequence[Configuration]) -> list[Configuration]:
    return sorted(batch, key=lambda c: c.coords)


def expected_max_bivariate(mean: np.ndarray, cov: np.ndarray) -> float:
    """Closed-form E[max(X, Y)] for a bivariate Gaussian."""
    mu1, mu2 = float(mean[0]), float(mean[1])
    theta_sq = float(cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1])
    if theta_sq <= 1e-24:
        return max(mu1, mu2)
    theta = math.sqrt(theta_sq)
    alpha = (mu1 - mu2) / theta
    return mu1 * norm.cdf(alpha) + mu2 * norm.cdf(-alpha) + theta * norm.pdf(alpha)


def qeubo_mc_samples(
    post: LaplacePosterior, batch: Sequence[Configuration], cfg: AcquisitionConfig
) -> np.ndarray:
    """Per-sample maxima whose average is the Monte Carlo batch score."""
    ordered = _canonical_order(batch)
    mean, cov = predict(post, ordered)
    q = len(ordered)
    factor = np.linalg.cholesky(cov + _BATCH_JITTER * np.eye(q))
    z = _crn_normals(q, cfg.mc_samples, cfg.seed)
    u = mean[:, None] + factor @ z
    return np.max(u, axis=0)


def qeubo_value(
    post: LaplacePosterior,
    batch: Sequence[Configuration],
    cfg: AcquisitionConfig,
    method: str = "mc",
) -> float:
    """Expected maximum utility of the batch under the current posterior."""
    if len(batch) != cfg.q:
        raise ContractViolation(f"batch has {len(batch)} points, config expects q={cfg.q}")
    if method == "analytic":
        ordered = _canonical_order(batch)
        mean, cov = predict(post, ordered)
        if cfg.q == 1:
            return float(mean[0])
        if cfg.q == 2:
            return expected_max_bivariate(mean, cov)
        raise ContractViolation("analytic path supports q=1 and q=2 only")
    if method != "mc":
        raise ContractViolation(f"unknown method {method!r}")
    return float(np.mean(qeubo_mc_samples(post, batch, cfg)))


def maximize_qeubo_discrete(
    post: LaplacePosterior,
    candidates: Sequence[Configuration],
    cfg: AcquisitionConfig,
    fixed_first: Configuration | None = None,
) -> Configuration:
    """Exhaustive argmax over the candidate set.

    With ``fixed_first`` each candidate is scored as the pair
    (fixed_first, candidate), skipping candidates equal to the incumbent;
    without it candidates are scored alone. Ties go to the lowest index.
    """
    if not candidates:
        raise ContractViolation("candidate set is empty")
    if fixed_first is None:
        pair_cfg = replace(cfg, q=1)
        best_i, best_v = -1, -np.inf
        for i, c in enumerate(candidates):
            v = qeubo_value(post, [c], pair_cfg)
            if v > best_v:
                best_i, best_v = i, v
        return candidates[best_i]
    pair_cfg = replace(cfg, q=2)
    best_i, best_v = -1, -np.inf
    for i, c in enumerate(candidates):
        if same_point(c, fixed_first):
            continue
        v = qeubo_value(post, [fixed_first, c], pair_cfg)
        if v > best_v:
            best_i, best_v = i, v
    if best_i < 0:
        raise ContractViolation("no candidate distinct from fixed_first")
    return candidates[best_i]


def _structured_batches(post: LaplacePosterior, cfg: AcquisitionConfig, d: int) -> np.ndarray:
    """Exploitation-oriented candidate batches around the best visited points.

    Uniform raw batches almost never place every batch point inside a small
    high-utility basin, so without these seeds the search cannot propose the
    refinement duels that resolve near-optimal points against each other.
    """
    visited = post.dataset_snapshot.visited
    order = np.argsort(-post.mode, kind="stable")[: min(4, len(visited))]
    tops = [visited[i].array for i in order]
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    batches = []
    for anchor in tops:
        for scale in (0.02, 0.06, 0.15):
            flat = [anchor]
            for _ in range(cfg.q - 1):
                flat.append(anchor + scale * rng.standard_normal(d))
            batches.append(np.clip(np.concatenate(flat), 0.0, 1.0))
    for i in range(len(tops)):
        for j in range(i + 1, len(tops)):
            flat = [tops[i], tops[j]]
            while len(flat) < cfg.q:
                flat.append(np.clip(tops[i] + 0.05 * rng.standard_normal(d), 0.0, 1.0))
            batches.append(np.clip(np.concatenate(flat), 0.0, 1.0))
    return np.array(batches).reshape(len(batches), cfg.q * d)


def _central_diff_grad(fun, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        grad[j] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return grad


def maximize_qeubo_continuous(
    post: LaplacePosterior, space: ParameterSpace, cfg: AcquisitionConfig
) -> list[Configuration]:
    """Joint batch maximization over the continuous unit cube.

    Scores quasi-random raw batches, refines the best few with bounded
    L-BFGS-B on central-difference gradients, and returns the best batch
    found (never worse than any raw candidate). The returned batch is
    ordered by descending predictive mean.
    """
    if space.mode != "continuous":
        raise ContractViolation("continuous maximization requires a continuous space")
    d = space.dimension
    qd = cfg.q * d

    def batch_of(flat: np.ndarray) -> list[Configuration]:
        pts = np.clip(flat, 0.0, 1.0).reshape(cfg.q, d)
        return [Configuration.from_array(row) for row in pts]

    def score(flat: np.ndarray) -> float:
        return qeubo_value(post, batch_of(flat), cfg)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        raw = qmc.Sobol(d=qd, scramble=True, seed=cfg.seed + 101).random(cfg.raw_candidates)
    raw = np.vstack([raw, _structured_batches(post, cfg, d)])
    raw_scores = np.array([score(x) for x in raw])
    order = np.argsort(-raw_scores, kind="stable")

    best_flat = raw[order[0]]
    best_score = raw_scores[order[0]]
    for idx in order[: cfg.restarts]:
        res = minimize(
            lambda x: -score(x),
            raw[idx],
            jac=lambda x: -_central_diff_grad(score, x),
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * qd,
            options={"maxiter": cfg.refine_steps, "maxfun": 4 * cfg.refine_steps},
        )
        cand_score = score(res.x)
        if cand_score > best_score:
            best_flat, best_score = np.clip(res.x, 0.0, 1.0), cand_score
    batch = batch_of(best_flat)
    means = predict_mean(post, configs_to_matrix(batch))
    ranked = sorted(zip(batch, means), key=lambda bm: (-bm[1], bm[0].coords))
    return [b for b, _ in ranked]


def _recommend_at(post: LaplacePosterior, point: Configuration) -> Recommendation:
    mean, _ = predict(post, [point])
    return Recommendation(point=point, posterior_mean=float(mean[0]))


def recommend(post: LaplacePosterior, space: ParameterSpace, scope: str) -> Recommendation:
    """Posterior-mean maximizer over the grid, the cube, or the visited set."""
    if scope == "visited_only":
        idx = int(np.argmax(post.mode))
        return _recommend_at(post, post.dataset_snapshot.visited[idx])

    if scope == "grid":
        nodes = make_grid(space)
        best_i, best_v = 0, -np.inf
        for start in range(0, len(nodes), _GRID_CHUNK):
            chunk = nodes[start : start + _GRID_CHUNK]
            means = predict_mean(post, configs_to_matrix(chunk))
            i = int(np.argmax(means))
            if means[i] > best_v:
                best_i, best_v = start + i, float(means[i])
        return _recommend_at(post, nodes[best_i])

    if scope == "continuous":
        mean_grad = predictive_mean_function(post)

        def neg(x: np.ndarray):
            v, g = mean_grad(np.clip(x, 0.0, 1.0))
            return -v, -g

        visited = post.dataset_snapshot.visited
        by_mode = np.argsort(-post.mode, kind="stable")[:5]
        starts = [visited[i].array for i in by_mode]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            sobol = qmc.Sobol(d=space.dimension, scramble=True, seed=7).random(8)
        starts.extend(sobol)
        starts.append(np.full(space.dimension, 0.5))
        best_x, best_v = None, -np.inf
        for s in starts:
            res = minimize(
                neg,
                np.clip(s, 0.0, 1.0),
                jac=True,
                method="L-BFGS-B",
                bounds=[(0.0, 1.0)] * space.dimension,
                options={"maxiter": 60},
            )
            v = -res.fun
            if v > best_v:
                best_x, best_v = np.clip(res.x, 0.0, 1.0), float(v)
        return _recommend_at(post, Configuration.from_array(best_x))

    raise ContractViolation(f"unknown recommendation scope {scope!r}")
