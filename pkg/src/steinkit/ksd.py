"""Kernelized Stein discrepancy machinery.

Score-based Stein kernel kappa_p, its gradient-free importance-weighted form
w(x) kappa_rho(x,y) w(y), alpha-weighted variant, U/V statistics, and
black-box importance-sampling weights via a simplex-constrained quadratic
program.

For the RBF kernel all derivative terms are analytic; the double-derivative
trace is k * (2 d / h - 4 ||x - y||^2 / h^2) and that single expression is the
source of truth everywhere in the package (no autodiff anywhere).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalFailure
from .gfsvgd import Surrogate
from .kernels import pairwise_sq_dists


@dataclass(frozen=True)
class SteinKernelMatrix:
    """Symmetric Gram matrix of a Stein kernel with its flavor tag."""

    values: np.ndarray
    flavor: str  # "score" | "gradient-free" | "alpha"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", 0.5 * (v + v.T))

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _scalar(value) -> float:
    """Accepts scalars or length-1 arrays from user-supplied log densities."""
    return float(np.asarray(value, dtype=float).reshape(-1)[0])


def _pair_terms(x, y, sx, sy, h):
    """The four analytic terms of the Stein kernel for one point pair."""
    sx = np.asarray(sx, dtype=float).reshape(-1)
    sy = np.asarray(sy, dtype=float).reshape(-1)
    d = x.size
    r2 = float(np.sum((x - y) ** 2))
    k = np.exp(-r2 / h)
    t1 = float(sx @ sy) * k
    t2 = (2.0 / h) * k * float(sx @ (x - y))
    t3 = (2.0 / h) * k * float(sy @ (y - x))
    t4 = k * (2.0 * d / h - 4.0 * r2 / h ** 2)
    return t1, t2, t3, t4


def stein_kernel(x: np.ndarray, y: np.ndarray, score_fn: Callable, kernel_h: float) -> float:
    """kappa_p(x, y) for the RBF kernel, all four terms analytic."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    t1, t2, t3, t4 = _pair_terms(x, y, np.asarray(score_fn(x), dtype=float), np.asarray(score_fn(y), dtype=float), kernel_h)
    return t1 + t2 + t3 + t4


def alpha_stein_kernel(
    x: np.ndarray,
    y: np.ndarray,
    log_p_fn: Callable,
    score_fn: Callable,
    alpha: float,
    kernel_h: float,
) -> float:
    """Density-power-weighted Stein kernel
    p(x)^a p(y)^a [ (a+1)^2 s's k + (a+1) s'grad_y k + (a+1) s'grad_x k + tr term ].

    ``p^a`` uses the unnormalized density, so the overall scale carries the
    (unknown) normalization constant to the 2a power; a = 0 recovers
    ``stein_kernel`` exactly.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    t1, t2, t3, t4 = _pair_terms(x, y, np.asarray(score_fn(x), dtype=float), np.asarray(score_fn(y), dtype=float), kernel_h)
    scale = np.exp(alpha * (_scalar(log_p_fn(x)) + _scalar(log_p_fn(y))))
    a1 = alpha + 1.0
    return scale * (a1 ** 2 * t1 + a1 * t2 + a1 * t3 + t4)


def gf_stein_kernel(
    x: np.ndarray,
    y: np.ndarray,
    surrogate: Surrogate,
    log_p_fn: Callable,
    kernel_h: float,
) -> float:
    """Gradient-free Stein kernel w(x) kappa_rho(x, y) w(y).

    The weight product is formed as exp(log w_x + log w_y); for large point
    sets prefer ``gf_stein_gram`` which centers the log-weights first.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    t1, t2, t3, t4 = _pair_terms(
        x, y, np.asarray(surrogate.score(x), dtype=float), np.asarray(surrogate.score(y), dtype=float), kernel_h
    )
    log_wx = _scalar(surrogate.log_density(x)) - _scalar(log_p_fn(x))
    log_wy = _scalar(surrogate.log_density(y)) - _scalar(log_p_fn(y))
    return float(np.exp(log_wx + log_wy)) * (t1 + t2 + t3 + t4)


def stein_gram(points: np.ndarray, scores: np.ndarray, h: float) -> np.ndarray:
    """kappa Gram matrix over one point set given precomputed scores."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    s = np.atleast_2d(np.asarray(scores, dtype=float))
    n, d = x.shape
    sq = pairwise_sq_dists(x, x)
    k = np.exp(-sq / h)
    a = np.einsum("nd,nd->n", s, x)
    b = s @ x.T
    g = (s @ s.T) * k
    g += (2.0 / h) * k * (a[:, None] - b)
    g += (2.0 / h) * k * (a[None, :] - b.T)
    g += k * (2.0 * d / h - 4.0 * sq / h ** 2)
    return g


def stein_gram_cross(x: np.ndarray, y: np.ndarray, score_fn: Callable, h: float) -> np.ndarray:
    """Rectangular kappa matrix between two point sets (used by identity checks)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    sx = np.atleast_2d(np.asarray(score_fn(x), dtype=float))
    sy = np.atleast_2d(np.asarray(score_fn(y), dtype=float))
    d = x.shape[1]
    sq = pairwise_sq_dists(x, y)
    k = np.exp(-sq / h)
    ax = np.einsum("nd,nd->n", sx, x)
    ay = np.einsum("md,md->m", sy, y)
    g = (sx @ sy.T) * k
    g += (2.0 / h) * k * (ax[:, None] - sx @ y.T)
    g += (2.0 / h) * k * (ay[None, :] - (sy @ x.T).T)
    g += k * (2.0 * d / h - 4.0 * sq / h ** 2)
    return g


def gf_stein_gram(
    points: np.ndarray,
    surrogate: Surrogate,
    log_p_fn: Callable,
    h: float,
    center_log_weights: bool = True,
) -> np.ndarray:
    """Gram matrix of the gradient-free Stein kernel, w_i kappa_rho(x_i, x_j) w_j.

    With ``center_log_weights`` the max log-weight is subtracted from every
    log-weight before exponentiating, i.e. the matrix is returned up to the
    positive factor exp(2 max log w).  Downstream uses (GF-SVGD directions,
    bootstrap p-values, BBIS weights and their comparisons) are invariant to
    that scale, which is what lets everything run on unnormalized densities.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    kr = stein_gram(x, surrogate.score(x), h)
    log_w = np.asarray(surrogate.log_density(x), dtype=float) - np.asarray(log_p_fn(x), dtype=float)
    if center_log_weights:
        log_w = log_w - np.max(log_w)
    w = np.exp(log_w)
    return w[:, None] * kr * w[None, :]


# ---------------------------------------------------------------------------
# U / V statistics
# ---------------------------------------------------------------------------

def _gram_from_pairs(points: np.ndarray, kernel_fn: Callable) -> np.ndarray:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = x.shape[0]
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            g[i, j] = kernel_fn(x[i], x[j])
    return g


def v_statistic_from_gram(gram: np.ndarray) -> float:
    return float(gram.mean())


def u_statistic_from_gram(gram: np.ndarray) -> float:
    n = gram.shape[0]
    if n < 2:
        raise ValueError("U-statistic needs at least two points")
    return float((gram.sum() - np.trace(gram)) / (n * (n - 1)))


def v_statistic(points: np.ndarray, kernel_fn: Callable) -> float:
    """Full double-sum estimator (1/n^2) sum_ij kappa(x_i, x_j)."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[0] < 1:
        raise ValueError("V-statistic needs at least one point")
    return v_statistic_from_gram(_gram_from_pairs(x, kernel_fn))


def u_statistic(points: np.ndarray, kernel_fn: Callable) -> float:
    """Off-diagonal-only estimator (1/(n(n-1))) sum_{i != j} kappa(x_i, x_j)."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    return u_statistic_from_gram(_gram_from_pairs(x, kernel_fn))


def ksd_v_statistic(points: np.ndarray, score_fn: Callable, h: float) -> float:
    """Fast V-statistic of kappa_p over one sample (vectorized Gram assembly)."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    return v_statistic_from_gram(stein_gram(x, score_fn(x), h))


# ---------------------------------------------------------------------------
# Black-box importance sampling
# ---------------------------------------------------------------------------

def simplex_project(v: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    positive = u - css / idx > 0
    rho = idx[positive][-1]
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def solve_simplex_qp(gram: np.ndarray, max_iter: int = 10000, tol: float = 1e-10) -> np.ndarray:
    """min u' K u over the probability simplex by accelerated projected gradient.

    Step size 1/L with L the Gershgorin bound max_i sum_j |K_ij|; on an
    objective increase the step is halved and momentum restarted, so the
    objective is nonincreasing across accepted iterates.  Warns and returns
    the best iterate if the relative-decrease tolerance is never met.
    """
    k = np.asarray(gram, dtype=float)
    n = k.shape[0]
    if n == 1:
        return np.ones(1)
    lipschitz = float(np.max(np.abs(k).sum(axis=1)))
    step = 1.0 / max(lipschitz, 1e-300)
    u = np.full(n, 1.0 / n)
    u = simplex_project(u)
    obj = float(u @ k @ u)
    y = u.copy()
    t = 1.0
    best_u, best_obj = u.copy(), obj
    converged = False
    for _ in range(max_iter):
        cand = simplex_project(y - step * (2.0 * (k @ y)))
        cand_obj = float(cand @ k @ cand)
        if cand_obj > obj:
            step *= 0.5
            y = u.copy()
            t = 1.0
            if step < 1e-18:
                break
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = cand + ((t - 1.0) / t_next) * (cand - u)
        t = t_next
        decrease = obj - cand_obj
        u, obj = cand, cand_obj
        if obj < best_obj:
            best_u, best_obj = u.copy(), obj
        if decrease <= tol * max(abs(obj), 1e-300):
            converged = True
            break
    if not converged:
        warnings.warn("simplex QP did not reach the relative-decrease tolerance; returning best iterate")
    return best_u


def bbis_weights(
    points: np.ndarray,
    surrogate: Surrogate,
    log_p_fn: Callable,
    kernel_h: float,
    max_iter: int = 10000,
    tol: float = 1e-10,
) -> np.ndarray:
    """Importance weights for arbitrary particles by minimizing the empirical
    gradient-free KSD u' K-tilde u subject to u on the probability simplex."""
    gram = gf_stein_gram(points, surrogate, log_p_fn, kernel_h)
    gram = 0.5 * (gram + gram.T)
    return solve_simplex_qp(gram, max_iter=max_iter, tol=tol)


def bbis_error_bound(weights: np.ndarray, points: np.ndarray, gf_kernel_fn: Callable) -> float:
    """sqrt(u' K-tilde u): the sample-dependent factor of the integration-error
    bound (the RKHS norm of the test function is reported separately by the
    caller as an unknown scale)."""
    u = np.asarray(weights, dtype=float)
    if abs(u.sum() - 1.0) > 1e-8 or u.min() < -1e-12:
        raise ValueError("weights must lie on the probability simplex")
    gram = _gram_from_pairs(points, gf_kernel_fn)
    quad = float(u @ gram @ u)
    if quad < -1e-10:
        raise NumericalFailure(f"quadratic form is negative beyond tolerance: {quad:.3e}")
    return float(np.sqrt(max(quad, 0.0)))
