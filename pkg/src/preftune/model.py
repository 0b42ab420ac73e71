"""Latent-utility Gaussian process over pairwise comparisons.

The posterior over utilities at visited points is a Laplace (Gaussian)
approximation around the MAP utility vector under a Bradley-Terry logistic
or probit preference likelihood and a zero-mean GP prior. Prediction at new
points conditions the joint prior on that Gaussian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.special import expit, log_expit, log_ndtr, ndtr

from .domain import Configuration, configs_to_matrix, same_point
from .errors import ContractViolation, NumericalError

DEDUP_TOL = 1e-10
SQRT5 = math.sqrt(5.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# MAP bounds for hyperparameters, in unit-cube input scale
LENGTHSCALE_BOUNDS = (0.05, 10.0)
OUTPUTSCALE_BOUNDS = (0.05, 20.0)


@dataclass(frozen=True)
class KernelConfig:
    """Stationary kernel with per-dimension lengthscales.

    Priors are Gaussian over the log of each hyperparameter (i.e. log-normal
    on the raw scale), so the prior mode of a lengthscale is
    ``exp(location)``.
    """

    family: str  # "matern52" | "exponential"
    lengthscales: tuple[float, ...]
    output_scale: float = 1.0
    prior_lengthscale: tuple[tuple[float, float], ...] = ()
    prior_outputscale: tuple[float, float] = (0.0, 0.5)
    fit_warning: bool = False

    def __post_init__(self):
        if self.family not in ("matern52", "exponential"):
            raise ContractViolation(f"unknown kernel family {self.family!r}")
        if any(ls <= 0 for ls in self.lengthscales) or self.output_scale <= 0:
            raise ContractViolation("lengthscales and output_scale must be positive")
        if not self.prior_lengthscale:
            object.__setattr__(
                self,
                "prior_lengthscale",
                tuple((math.log(0.25), 0.5) for _ in self.lengthscales),
            )
        if len(self.prior_lengthscale) != len(self.lengthscales):
            raise ContractViolation("one lengthscale prior per dimension required")

    @property
    def dimension(self) -> int:
        return len(self.lengthscales)


def default_kernel(family: str, dimension: int) -> KernelConfig:
    """Kernel at the prior-mode hyperparameters (lengthscale 0.25, scale 1)."""
    return KernelConfig(family=family, lengthscales=(0.25,) * dimension, output_scale=1.0)


@dataclass(frozen=True)
class LikelihoodConfig:
    """Preference noise model mapping utility differences to probabilities."""

    family: str  # "logistic" | "probit"
    scale: float  # lambda for logistic, sigma for probit

    def __post_init__(self):
        if self.family not in ("logistic", "probit"):
            raise ContractViolation(f"unknown likelihood family {self.family!r}")
        if self.scale <= 0:
            raise ContractViolation("likelihood scale must be positive")


# Default noise scales: sharp enough that one output-scale of utility gap is
# a ~95% preference, yet unsaturated enough that decisive answers still carry
# likelihood curvature. Fully saturated likelihoods (e.g. scale 0.1 with unit
# output scale) leave losers' variances untouched, and the acquisition then
# re-queries known-bad regions forever.
def logistic_likelihood(lambda_: float = 0.3) -> LikelihoodConfig:
    return LikelihoodConfig("logistic", lambda_)


def probit_likelihood(sigma: float = 0.3) -> LikelihoodConfig:
    return LikelihoodConfig("probit", sigma)


@dataclass(frozen=True)
class ComparisonRecord:
    """One answered duel, stored in algorithm order with its winner."""

    first: Configuration
    second: Configuration
    winner: str  # "first" | "second"

    def __post_init__(self):
        if self.winner not in ("first", "second"):
            raise ContractViolation(f"winner must be 'first' or 'second', got {self.winner!r}")
        if same_point(self.first, self.second, DEDUP_TOL):
            raise ContractViolation("a comparison needs two distinct configurations")

    @property
    def winning(self) -> Configuration:
        return self.first if self.winner == "first" else self.second

    @property
    def losing(self) -> Configuration:
        return self.second if self.winner == "first" else self.first


@dataclass(frozen=True)
class ComparisonDataset:
    """All recorded duels plus the deduplicated visited set."""

    records: tuple[ComparisonRecord, ...] = ()
    visited: tuple[Configuration, ...] = ()

    @classmethod
    def empty(cls) -> "ComparisonDataset":
        return cls()

    def index_of(self, config: Configuration) -> int:
        for i, v in enumerate(self.visited):
            if same_point(v, config, DEDUP_TOL):
                return i
        raise ContractViolation("configuration not in visited set")

    def _merged(self, config: Configuration) -> tuple[Configuration, ...]:
        for v in self.visited:
            if same_point(v, config, DEDUP_TOL):
                return self.visited
        return self.visited + (config,)

    def register(self, config: Configuration) -> "ComparisonDataset":
        return replace(self, visited=self._merged(config))

    def with_record(self, record: ComparisonRecord) -> "ComparisonDataset":
        visited = self._merged(record.first)
        ds = replace(self, visited=visited)
        visited = ds._merged(record.second)
        return replace(self, records=self.records + (record,), visited=visited)

    def winner_loser_indices(self) -> np.ndarray:
        """(n, 2) array of (winner, loser) indices into the visited set.

        Cached per instance: the dataset is immutable and model fits look
        these up repeatedly.
        """
        cached = self.__dict__.get("_wl_indices")
        if cached is None:
            cached = np.array(
                [[self.index_of(r.winning), self.index_of(r.losing)] for r in self.records],
                dtype=int,
            ).reshape(len(self.records), 2)
            cached.setflags(write=False)
            object.__setattr__(self, "_wl_indices", cached)
        return cached

    def to_dict(self) -> dict:
        return {
            "records": [
                {"first": list(r.first.coords), "second": list(r.second.coords), "winner": r.winner}
                for r in self.records
            ],
            "visited": [list(v.coords) for v in self.visited],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonDataset":
        return cls(
            records=tuple(
                ComparisonRecord(
                    Configuration(tuple(r["first"])),
                    Configuration(tuple(r["second"])),
                    r["winner"],
                )
                for r in data["records"]
            ),
            visited=tuple(Configuration(tuple(v)) for v in data["visited"]),
        )


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def kernel_matrix(cfg: KernelConfig, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Kernel matrix between rows of ``a`` and ``b`` (unit-cube coordinates)."""
    a = np.atleast_2d(a)
    if a.shape[1] != cfg.dimension:
        raise ContractViolation(
            f"points have dimension {a.shape[1]}, kernel has {cfg.dimension}"
        )
    ls = np.asarray(cfg.lengthscales)
    sa = a / ls
    sb = sa if b is None else np.atleast_2d(b) / ls
    if b is not None and np.atleast_2d(b).shape[1] != cfg.dimension:
        raise ContractViolation("kernel_matrix: dimension mismatch between inputs")
    d2 = np.sum((sa[:, None, :] - sb[None, :, :]) ** 2, axis=-1)
    r = np.sqrt(np.maximum(d2, 0.0))
    if cfg.family == "matern52":
        k = cfg.output_scale * (1.0 + SQRT5 * r + 5.0 * d2 / 3.0) * np.exp(-SQRT5 * r)
    else:
        k = cfg.output_scale * np.exp(-r)
    if b is None:
        k = 0.5 * (k + k.T)
    return k


def kernel_eval(cfg: KernelConfig, a: Configuration, b: Configuration) -> float:
    """Kernel value between two configurations; k(a, a) = output_scale."""
    if a.dimension != cfg.dimension or b.dimension != cfg.dimension:
        raise ContractViolation("kernel_eval: configuration dimension mismatch")
    return float(kernel_matrix(cfg, a.array[None, :], b.array[None, :])[0, 0])


def _kernel_grad(cfg: KernelConfig, x: np.ndarray, points: np.ndarray) -> np.ndarray:
    """d k(x, points_i) / d x, shape (n, d). Used by gradient-based recommenders."""
    ls = np.asarray(cfg.lengthscales)
    diff = (x[None, :] - points) / ls  # (n, d) scaled
    d2 = np.sum(diff**2, axis=-1)
    r = np.sqrt(np.maximum(d2, 1e-300))
    if cfg.family == "matern52":
        # dk/dr2 expressed through r: k = s(1+sqrt5 r + 5r^2/3)e^{-sqrt5 r}
        dk_dr = cfg.output_scale * (-5.0 / 3.0) * r * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
    else:
        dk_dr = -cfg.output_scale * np.exp(-r)
    # dr/dx = diff / (r * ls)
    return dk_dr[:, None] * diff / (r[:, None] * ls[None, :])


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


def pref_likelihood(cfg: LikelihoodConfig, u_winner: float, u_loser: float) -> float:
    """Probability that the winner is preferred given the two utilities."""
    delta = u_winner - u_loser
    if cfg.family == "logistic":
        return float(expit(delta / cfg.scale))
    return float(ndtr(delta / (cfg.scale * math.sqrt(2.0))))


def _likelihood_terms(cfg: LikelihoodConfig, delta: np.ndarray):
    """Per-record log-probability, gradient, and curvature in the difference.

    Returns (logp, g, w) where g = d logp / d delta and w = -d2 logp / d delta2
    (w >= 0 since both likelihoods are log-concave).
    """
    if cfg.family == "logistic":
        z = delta / cfg.scale
        logp = log_expit(z)
        g = expit(-z) / cfg.scale
        w = expit(z) * expit(-z) / cfg.scale**2
        return logp, g, w
    s = cfg.scale * math.sqrt(2.0)
    t = delta / s
    logp = log_ndtr(t)
    log_pdf = -0.5 * t * t - _LOG_SQRT_2PI
    ratio = np.exp(log_pdf - logp)  # phi(t) / Phi(t), stable for t << 0
    g = ratio / s
    w = ratio * (t + ratio) / s**2
    return logp, np.asarray(g), np.maximum(np.asarray(w), 0.0)


# ---------------------------------------------------------------------------
# Laplace approximation
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class LaplacePosterior:
    """Gaussian approximation of the utility posterior at visited points."""

    mode: np.ndarray
    covariance: np.ndarray
    kernel: KernelConfig
    likelihood: LikelihoodConfig
    dataset_snapshot: ComparisonDataset
    _chol_k: np.ndarray = field(repr=False, default=None)
    _chol_b: np.ndarray = field(repr=False, default=None)
    _white_mode: np.ndarray = field(repr=False, default=None)
    _visited_matrix: np.ndarray = field(repr=False, default=None)


def _chol_with_jitter(mat: np.ndarray, jitters=(1e-10, 1e-8, 1e-6)):
    """Cholesky with escalating jitter.

    Escalates not only on outright failure but also when the factor is
    effectively singular (near-duplicate visited points), which would push
    the achievable Newton gradient norm above the convergence contract.
    """
    last = None
    for i, jit in enumerate(jitters):
        try:
            factor = cholesky(mat + jit * np.eye(mat.shape[0]), lower=True), jit
        except np.linalg.LinAlgError:
            continue
        last = factor
        diag = np.diag(factor[0])
        if (diag.min() / diag.max()) ** 2 > 1e-9 or i == len(jitters) - 1:
            return factor
    if last is not None:
        return last
    raise NumericalError("kernel matrix not positive definite after jitter escalation")


def _incidence(dataset: ComparisonDataset) -> np.ndarray:
    """Signed (n_records, m) matrix mapping utilities to winner-loser differences."""
    m = len(dataset.visited)
    pairs = dataset.winner_loser_indices()
    v = np.zeros((len(pairs), m))
    rows = np.arange(len(pairs))
    v[rows, pairs[:, 0]] = 1.0
    v[rows, pairs[:, 1]] = -1.0
    return v


def _laplace_core(
    dataset: ComparisonDataset,
    kernel: KernelConfig,
    likelihood: LikelihoodConfig,
    u0: np.ndarray | None = None,
    grad_tol: float = 1e-6,
    max_iter: int = 100,
):
    """Damped Newton ascent of the unnormalized log posterior.

    Returns (mode, chol_k, chol_b, log_posterior_at_mode, logdet_b).
    """
    if not dataset.records:
        raise ContractViolation("fit requires a nonempty dataset")
    m = len(dataset.visited)
    if m < 2:
        raise ContractViolation("fit requires at least two visited configurations")
    w_mat = configs_to_matrix(dataset.visited)
    k_mat = kernel_matrix(kernel, w_mat)
    chol_k, _ = _chol_with_jitter(k_mat)
    v = _incidence(dataset)

    u = np.zeros(m) if u0 is None else np.array(u0, dtype=float)

    def objective(uu):
        logp, _, _ = _likelihood_terms(likelihood, v @ uu)
        alpha = cho_solve((chol_k, True), uu)
        return float(np.sum(logp)) - 0.5 * float(uu @ alpha), alpha

    psi, alpha = objective(u)
    chol_b = None
    last_grad_norm = np.inf
    for _ in range(max_iter):
        delta = v @ u
        _, g, w = _likelihood_terms(likelihood, delta)
        grad = v.T @ g - alpha
        last_grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
        h = v.T @ (w[:, None] * v)
        lt_h_l = chol_k.T @ h @ chol_k
        b = np.eye(m) + 0.5 * (lt_h_l + lt_h_l.T)
        chol_b = cholesky(b, lower=True)
        if last_grad_norm < grad_tol:
            break
        step_dir = chol_k @ cho_solve((chol_b, True), chol_k.T @ grad)
        step = 1.0
        improved = False
        for _ in range(21):
            u_try = u + step * step_dir
            psi_try, alpha_try = objective(u_try)
            if psi_try > psi - 1e-12:
                u, psi, alpha = u_try, psi_try, alpha_try
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    else:
        raise NumericalError(
            f"Laplace mode search did not converge in {max_iter} iterations "
            f"(gradient max-norm {last_grad_norm:.3e})"
        )
    if last_grad_norm >= grad_tol:
        # loop exited via damping failure; re-check the stationarity contract
        raise NumericalError(
            f"Laplace mode search stalled (gradient max-norm {last_grad_norm:.3e})"
        )
    logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_b))))
    return u, chol_k, chol_b, psi, logdet_b


def fit_laplace(
    dataset: ComparisonDataset,
    kernel: KernelConfig,
    likelihood: LikelihoodConfig,
) -> LaplacePosterior:
    """MAP utilities and curvature-matched covariance at the visited points."""
    mode, chol_k, chol_b, _, _ = _laplace_core(dataset, kernel, likelihood)
    m = mode.shape[0]
    b_inv = cho_solve((chol_b, True), np.eye(m))
    cov = chol_k @ b_inv @ chol_k.T
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if np.min(eigvals) < -1e-8:
        raise NumericalError(f"posterior covariance has eigenvalue {np.min(eigvals):.3e}")
    cov = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T
    cov = 0.5 * (cov + cov.T)
    return LaplacePosterior(
        mode=mode,
        covariance=cov,
        kernel=kernel,
        likelihood=likelihood,
        dataset_snapshot=dataset,
        _chol_k=chol_k,
        _chol_b=chol_b,
        _white_mode=solve_triangular(chol_k, mode, lower=True),
        _visited_matrix=configs_to_matrix(dataset.visited),
    )


def predict(
    post: LaplacePosterior, queries: Sequence[Configuration]
) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and covariance of the latent utility at new points."""
    q_mat = configs_to_matrix(list(queries))
    if q_mat.shape[1] != post.kernel.dimension:
        raise ContractViolation("predict: query dimension mismatch")
    k_wq = kernel_matrix(post.kernel, post._visited_matrix, q_mat)
    k_qq = kernel_matrix(post.kernel, q_mat)
    v = solve_triangular(post._chol_k, k_wq, lower=True)
    mean = v.T @ post._white_mode
    cov = k_qq - v.T @ v + v.T @ cho_solve((post._chol_b, True), v)
    cov = 0.5 * (cov + cov.T)
    d = np.diag(cov).copy()
    np.fill_diagonal(cov, np.maximum(d, 0.0))
    return mean, cov


def predict_mean(post: LaplacePosterior, q_mat: np.ndarray) -> np.ndarray:
    """Predictive mean only, vectorized over rows of ``q_mat``; no covariance."""
    alpha = solve_triangular(post._chol_k.T, post._white_mode, lower=False)
    return kernel_matrix(post.kernel, np.atleast_2d(q_mat), post._visited_matrix) @ alpha


def gaussian_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular-ish factor F with F F^T = cov, robust to rank deficiency."""
    n = cov.shape[0]
    for jit in (1e-12, 1e-10, 1e-8):
        try:
            return cholesky(cov + jit * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
    eigvals, eigvecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return eigvecs * np.sqrt(np.maximum(eigvals, 0.0))


def sample_utility(
    post: LaplacePosterior,
    queries: Sequence[Configuration],
    n_samples: int,
    seed: int,
) -> np.ndarray:
    """I.i.d. draws from the predictive Gaussian, (n_samples, len(queries))."""
    if n_samples < 1:
        raise ContractViolation("n_samples must be >= 1")
    mean, cov = predict(post, queries)
    factor = gaussian_factor(cov)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, len(mean)))
    return mean[None, :] + z @ factor.T


def predictive_mean_function(post: LaplacePosterior):
    """Callable (x_array) -> (mean, grad) for continuous optimizers.

    The mean is k(x, W) @ alpha with alpha fixed by the fitted mode, so its
    gradient is available analytically through the kernel.
    """
    alpha = solve_triangular(post._chol_k.T, post._white_mode, lower=False)
    w_mat = post._visited_matrix

    def mean_and_grad(x: np.ndarray):
        k_xw = kernel_matrix(post.kernel, x[None, :], w_mat)[0]
        grad = _kernel_grad(post.kernel, x, w_mat).T @ alpha
        return float(k_xw @ alpha), grad

    return mean_and_grad


# ---------------------------------------------------------------------------
# Hyperparameter estimation
# ---------------------------------------------------------------------------


def log_marginal_laplace(
    dataset: ComparisonDataset,
    kernel: KernelConfig,
    likelihood: LikelihoodConfig,
    u0: np.ndarray | None = None,
) -> float:
    """Laplace approximation of the log marginal likelihood of the comparisons."""
    _, _, _, psi, logdet_b = _laplace_core(dataset, kernel, likelihood, u0=u0)
    return psi - 0.5 * logdet_b


def _log_prior(kernel: KernelConfig, log_ls: np.ndarray, log_os: float) -> float:
    total = 0.0
    for (loc, scale), value in zip(kernel.prior_lengthscale, log_ls):
        total += -0.5 * ((value - loc) / scale) ** 2 - math.log(scale) - _LOG_SQRT_2PI
    loc, scale = kernel.prior_outputscale
    total += -0.5 * ((log_os - loc) / scale) ** 2 - math.log(scale) - _LOG_SQRT_2PI
    return total


def prior_mode_kernel(kernel: KernelConfig) -> KernelConfig:
    """Kernel at the log-space maximum of the hyperparameter priors."""
    return replace(
        kernel,
        lengthscales=tuple(math.exp(loc) for loc, _ in kernel.prior_lengthscale),
        output_scale=math.exp(kernel.prior_outputscale[0]),
        fit_warning=False,
    )


def fit_hyperparameters(
    dataset: ComparisonDataset,
    kernel: KernelConfig,
    likelihood: LikelihoodConfig,
    n_starts: int = 4,
    max_evals: int = 60,
) -> KernelConfig:
    """MAP hyperparameters under the Laplace evidence plus log-normal priors.

    Multi-start L-BFGS-B in log-hyperparameter space. If every start fails
    the prior-mode kernel is returned with ``fit_warning`` set instead of
    aborting the calling loop.
    """
    if not dataset.records:
        raise ContractViolation("fit_hyperparameters requires a nonempty dataset")
    d = kernel.dimension
    lb = np.array([math.log(LENGTHSCALE_BOUNDS[0])] * d + [math.log(OUTPUTSCALE_BOUNDS[0])])
    ub = np.array([math.log(LENGTHSCALE_BOUNDS[1])] * d + [math.log(OUTPUTSCALE_BOUNDS[1])])
    warm = {"u0": None}

    def negative_objective(theta: np.ndarray) -> float:
        theta = np.clip(theta, lb, ub)
        cand = replace(
            kernel,
            lengthscales=tuple(np.exp(theta[:d])),
            output_scale=float(np.exp(theta[d])),
        )
        try:
            mode, _, _, psi, logdet_b = _laplace_core(
                dataset, cand, likelihood, u0=warm["u0"]
            )
        except NumericalError:
            return 1e12
        warm["u0"] = mode
        evidence = psi - 0.5 * logdet_b
        return -(evidence + _log_prior(kernel, theta[:d], float(theta[d])))

    prior_center = np.array(
        [loc for loc, _ in kernel.prior_lengthscale] + [kernel.prior_outputscale[0]]
    )
    current = np.log(np.array(list(kernel.lengthscales) + [kernel.output_scale]))
    starts = [current, prior_center]
    for offset in (0.7, -0.7, 1.4, -1.4, 2.1, -2.1):
        starts.append(prior_center + offset)
    seen, unique_starts = set(), []
    for s in starts:
        key = tuple(np.round(np.clip(s, lb, ub), 12))
        if key not in seen:
            seen.add(key)
            unique_starts.append(np.clip(s, lb, ub))
        if len(unique_starts) >= max(n_starts, 4):
            break

    best_val, best_theta = np.inf, None
    for s in unique_starts:
        try:
            res = minimize(
                negative_objective,
                s,
                method="L-BFGS-B",
                bounds=list(zip(lb, ub)),
                # eps well above the inner Newton solve's noise floor
                options={"maxfun": max_evals, "maxiter": max_evals, "ftol": 1e-9, "eps": 1e-4},
            )
        except (NumericalError, np.linalg.LinAlgError):
            continue
        if np.isfinite(res.fun) and res.fun < best_val and res.fun < 1e11:
            best_val, best_theta = float(res.fun), np.clip(res.x, lb, ub)
    if best_theta is None:
        return replace(prior_mode_kernel(kernel), fit_warning=True)
    return replace(
        kernel,
        lengthscales=tuple(np.exp(best_theta[:d])),
        output_scale=float(np.exp(best_theta[d])),
        fit_warning=False,
    )
