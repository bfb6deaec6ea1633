"""Gaussian-process regression with an ARD squared-exponential kernel.

Inputs are assumed to live in the unit cube (the optimizer maps physical
bounds before modeling). Targets are standardized per fit, so hyperparameter
bounds are dimension-free. Hyperparameters are chosen by maximizing the log
marginal likelihood with a bounded quasi-Newton method from multiple starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import ndtr

from . import numkit
from .numkit import NotPositiveDefinite, SpdFactorization

__all__ = [
    "GPHyperparams",
    "GPModel",
    "PosteriorSlice",
    "DegenerateTargets",
    "kernel_eval",
    "log_marginal_likelihood",
    "fit",
    "build_model",
    "posterior",
    "sample_posterior",
    "expected_improvement",
    "expected_feasible_improvement",
    "LENGTHSCALE_BOUNDS",
    "SIGNAL_VARIANCE_BOUNDS",
    "NOISE_JITTER_BOUNDS",
]

# Bounds used during hyperparameter fitting (unit-cube inputs, standardized
# targets). Lengthscale bounds follow the usual trust-region BO setup.
LENGTHSCALE_BOUNDS = (5e-3, 2.0)
SIGNAL_VARIANCE_BOUNDS = (0.05, 20.0)
NOISE_JITTER_BOUNDS = (1e-8, 1e-2)

N_RESTARTS = 8
MAX_OPT_ITER = 200

_LOG_2PI = math.log(2.0 * math.pi)


class DegenerateTargets(Exception):
    """Raised internally when targets have zero variance; fit() handles it."""


@dataclass(frozen=True)
class GPHyperparams:
    """ARD kernel hyperparameters: per-dimension lengthscales, signal
    variance and a small noise jitter (both in standardized-output units)."""

    lengthscales: np.ndarray
    signal_variance: float
    noise_jitter: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if not np.all(ls > 0) or self.signal_variance <= 0 or self.noise_jitter <= 0:
            raise ValueError("hyperparameters must be strictly positive")


@dataclass(frozen=True)
class GPModel:
    """A conditioned GP: hyperparameters plus cached training factorization.

    ``train_targets`` are standardized; ``target_mean``/``target_std`` undo
    the standardization on prediction. Immutable after construction.
    """

    hyperparams: GPHyperparams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    factorization: SpdFactorization
    alpha: np.ndarray
    target_mean: float
    target_std: float

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]


@dataclass(frozen=True)
class PosteriorSlice:
    """Posterior mean and (co)variance at a batch of query points.

    ``covariance`` is the full M x M matrix when requested, else None;
    ``variance`` is always the clamped-nonnegative diagonal.
    """

    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray | None = None


def _scaled_sqdist(x1: np.ndarray, x2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """Sum over dims of ((x1_i - x2_i) / l_i)^2, shape (n1, n2)."""
    n1, n2 = x1.shape[0], x2.shape[0]
    out = np.zeros((n1, n2))
    for d in range(x1.shape[1]):
        diff = (x1[:, d, None] - x2[None, :, d]) / lengthscales[d]
        out += diff * diff
    return out


def kernel_eval(h: GPHyperparams, x: np.ndarray, x_other: np.ndarray) -> float:
    """Squared-exponential covariance s^2 exp(-1/2 sum ((x_i-x'_i)/l_i)^2)."""
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    z = (x - x_other) / h.lengthscales
    return float(h.signal_variance * np.exp(-0.5 * np.dot(z, z)))


def _kernel_matrix(h: GPHyperparams, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return h.signal_variance * np.exp(-0.5 * _scaled_sqdist(x1, x2, h.lengthscales))


class _LmlObjective:
    """Negative log marginal likelihood and gradient in log-parameter space.

    Precomputes per-dimension squared differences once per dataset so each
    evaluation costs one Cholesky plus a few matrix products.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = x
        self.y = y
        self.n, self.d = x.shape
        diff = x[:, None, :] - x[None, :, :]
        self._sqdiff_flat = np.ascontiguousarray((diff * diff).reshape(self.n * self.n, self.d))

    def value_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        d, n = self.d, self.n
        inv_l2 = np.exp(-2.0 * theta[:d])
        s2 = math.exp(theta[d])
        jitter = math.exp(theta[d + 1])

        m = (self._sqdiff_flat @ inv_l2).reshape(n, n)
        k_signal = s2 * np.exp(-0.5 * m)
        k = k_signal + jitter * np.eye(n)
        try:
            fact = numkit.cholesky(k)
        except NotPositiveDefinite:
            return -1e25, np.zeros(d + 2)
        alpha = fact.solve(self.y)
        value = -0.5 * float(self.y @ alpha) - 0.5 * fact.log_det() - 0.5 * n * _LOG_2PI

        w = np.outer(alpha, alpha) - fact.inverse()
        wk = w * k_signal
        grad = np.empty(d + 2)
        grad[:d] = 0.5 * (wk.reshape(n * n) @ self._sqdiff_flat) * inv_l2
        grad[d] = 0.5 * float(np.sum(wk))
        grad[d + 1] = 0.5 * jitter * float(np.trace(w))
        return value, grad


def _theta(h: GPHyperparams) -> np.ndarray:
    return np.log(np.concatenate([h.lengthscales, [h.signal_variance, h.noise_jitter]]))


def _hyperparams(theta: np.ndarray, d: int) -> GPHyperparams:
    return GPHyperparams(
        lengthscales=np.exp(theta[:d]),
        signal_variance=math.exp(theta[d]),
        noise_jitter=math.exp(theta[d + 1]),
    )


def log_marginal_likelihood(
    h: GPHyperparams, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Log evidence of the data under the kernel, with its analytic gradient.

    The gradient is taken with respect to the log-hyperparameters, ordered
    (log l_1 .. log l_D, log s^2, log jitter).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise ValueError("input/target row counts differ")
    obj = _LmlObjective(x, y)
    value, grad = obj.value_and_grad(_theta(h))
    if value == -1e25:
        raise NotPositiveDefinite("kernel matrix not positive definite")
    return value, grad


def build_model(h: GPHyperparams, x: np.ndarray, y: np.ndarray) -> GPModel:
    """Condition a GP with fixed hyperparameters on (x, y).

    Targets are standardized internally; a zero-variance target vector is
    conditioned as all-zeros (constant model).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    mean = float(np.mean(y))
    std = float(np.std(y))
    if std <= 1e-12 * max(1.0, abs(mean)):
        std = 1.0
        ys = np.zeros_like(y)
    else:
        ys = (y - mean) / std
    k = _kernel_matrix(h, x, x) + h.noise_jitter * np.eye(x.shape[0])
    fact = numkit.cholesky(k)
    return GPModel(
        hyperparams=h,
        train_inputs=x,
        train_targets=ys,
        factorization=fact,
        alpha=fact.solve(ys),
        target_mean=mean,
        target_std=std,
    )


def fit(x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> GPModel:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    Multi-start L-BFGS-B in log space: one start at the prior default
    (l_i = 0.5, s^2 = 1) and the rest drawn log-uniformly within bounds.
    Zero-variance targets short-circuit to a constant model with the signal
    variance at its lower bound.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = x.shape
    if n < 1:
        raise ValueError("need at least one observation")

    mean = float(np.mean(y))
    std = float(np.std(y))
    if std <= 1e-12 * max(1.0, abs(mean)):
        h = GPHyperparams(
            lengthscales=np.full(d, 0.5),
            signal_variance=SIGNAL_VARIANCE_BOUNDS[0],
            noise_jitter=NOISE_JITTER_BOUNDS[0],
        )
        return build_model(h, x, y)

    ys = (y - mean) / std
    obj = _LmlObjective(x, ys)

    lo = np.log(np.array([LENGTHSCALE_BOUNDS[0]] * d + [SIGNAL_VARIANCE_BOUNDS[0], NOISE_JITTER_BOUNDS[0]]))
    hi = np.log(np.array([LENGTHSCALE_BOUNDS[1]] * d + [SIGNAL_VARIANCE_BOUNDS[1], NOISE_JITTER_BOUNDS[1]]))
    bounds = list(zip(lo, hi))

    starts = [np.log(np.array([0.5] * d + [1.0, 1e-6]))]
    for _ in range(N_RESTARTS - 1):
        starts.append(lo + rng.uniform(size=d + 2) * (hi - lo))

    def negative(theta: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = obj.value_and_grad(theta)
        return -value, -grad

    best_theta, best_value = None, np.inf
    for theta0 in starts:
        res = scipy.optimize.minimize(
            negative,
            np.clip(theta0, lo, hi),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": MAX_OPT_ITER, "ftol": 1e-8, "gtol": 1e-5},
        )
        if res.fun < best_value:
            best_value, best_theta = res.fun, res.x

    h = _hyperparams(best_theta, d)
    return build_model(h, x, y)


def posterior(m: GPModel, xq: np.ndarray, full_cov: bool = False) -> PosteriorSlice:
    """Posterior mean and (co)variance at query points, de-standardized."""
    xq = np.atleast_2d(np.asarray(xq, dtype=float))
    h = m.hyperparams
    k_cross = _kernel_matrix(h, m.train_inputs, xq)  # (N, M)
    mean = m.target_mean + m.target_std * (k_cross.T @ m.alpha)
    v = scipy.linalg.solve_triangular(
        m.factorization.lower, k_cross, lower=True, check_finite=False
    )
    scale = m.target_std**2
    if full_cov:
        kqq = _kernel_matrix(h, xq, xq)
        cov = scale * (kqq - v.T @ v)
        cov = 0.5 * (cov + cov.T)
        variance = np.maximum(np.diag(cov), 0.0)
        return PosteriorSlice(mean=mean, variance=variance, covariance=cov)
    var = h.signal_variance - np.sum(v * v, axis=0)
    return PosteriorSlice(mean=mean, variance=np.maximum(scale * var, 0.0))


def sample_posterior(m: GPModel, xq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One joint draw from the posterior over the query points."""
    post = posterior(m, xq, full_cov=True)
    mean, cov_factor = joint_draw_factor(post)
    z = numkit.standard_normal(rng, mean.size)
    return mean + cov_factor @ z


def joint_draw_factor(post: PosteriorSlice) -> tuple[np.ndarray, np.ndarray]:
    """Mean and Cholesky factor of (covariance + 1e-8 I) for repeated draws."""
    if post.covariance is None:
        raise ValueError("joint draws need a full-covariance posterior")
    n = post.mean.size
    fact = numkit.cholesky(post.covariance + 1e-8 * np.eye(n))
    return post.mean, fact.lower


def expected_improvement(m: GPModel, xq: np.ndarray, f_min: float) -> np.ndarray:
    """Expected improvement below f_min; exactly zero where the posterior
    standard deviation vanishes."""
    if not math.isfinite(f_min):
        raise ValueError("f_min must be finite")
    post = posterior(m, xq)
    sigma = np.sqrt(post.variance)
    improve = f_min - post.mean
    out = np.zeros_like(sigma)
    pos = sigma > 0
    z = improve[pos] / sigma[pos]
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out[pos] = improve[pos] * ndtr(z) + sigma[pos] * pdf
    return np.maximum(out, 0.0)


def expected_feasible_improvement(
    ei: np.ndarray, constraint_models: list[GPModel], xq: np.ndarray
) -> np.ndarray:
    """EI weighted by each constraint's posterior probability of c <= 0."""
    prob = np.ones_like(np.asarray(ei, dtype=float))
    for cm in constraint_models:
        post = posterior(cm, xq)
        sigma = np.sqrt(post.variance)
        p = np.where(sigma > 0, ndtr(np.divide(-post.mean, sigma, where=sigma > 0,
                                               out=np.zeros_like(sigma))),
                     (post.mean <= 0).astype(float))
        prob *= p
    return ei * prob
