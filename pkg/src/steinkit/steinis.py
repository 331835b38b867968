"""Stein variational adaptive importance sampling.

Leader particles build each iteration's transport map; follower particles are
pushed through it without ever influencing it, so conditional on the leader
trajectory the followers stay i.i.d. draws from the evolving proposal q_l.
Their log densities are tracked through the log-det Jacobian of each map,
turning the final follower set into a standard importance sample for the
target: self-normalized expectations and an unbiased estimate of the
normalization constant come for free.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor
from scipy.special import logsumexp

from .errors import (
    DegenerateWeightsError,
    DivergenceError,
    InvalidApproximationError,
    SingularTransformError,
)
from .kernels import KernelSpec, resolve_bandwidth
from .models import ContinuousTarget
from .svgd import DIVERGENCE_LIMIT, StepSchedule, stein_direction

PIVOT_FLOOR = 1e-14
FIRST_ORDER_EPS_MAX = 0.1
AUTO_DIAG_GUARD = 0.5
MAX_EPS_HALVINGS = 5


@dataclass(frozen=True)
class WeightedSample:
    """Positions with unnormalized log importance weights."""

    positions: np.ndarray
    log_weights: np.ndarray

    def normalized_weights(self) -> np.ndarray:
        top = np.max(self.log_weights)
        if not np.isfinite(top):
            raise DegenerateWeightsError("all importance weights vanished")
        w = np.exp(self.log_weights - top)
        return w / w.sum()

    @property
    def ess(self) -> float:
        return float(np.exp(2.0 * logsumexp(self.log_weights) - logsumexp(2.0 * self.log_weights)))


@dataclass(frozen=True)
class LeaderFollowerEnsemble:
    leaders: np.ndarray
    followers: np.ndarray
    follower_log_q: np.ndarray
    eps_history: tuple[float, ...]


@dataclass(frozen=True)
class SteinISResult:
    sample: WeightedSample
    z_hat: float
    ensemble: LeaderFollowerEnsemble


def leader_velocity_field(
    leaders: np.ndarray,
    target: ContinuousTarget,
    kernel: KernelSpec,
) -> Callable:
    """Velocity field phi built from the leader set, with analytic Jacobian.

    Returns ``field(x, with_jacobian=False)`` evaluating phi (m, d) and,
    on request, A(x) = grad phi (m, d, d) at arbitrary points; both are
    averages over the leaders only.
    """
    x_l = np.atleast_2d(np.asarray(leaders, dtype=float))
    if target.score is None:
        raise ValueError("SteinIS requires the target score")
    h = resolve_bandwidth(kernel, x_l)
    s_l = np.atleast_2d(np.asarray(target.score(x_l), dtype=float))
    n_l = x_l.shape[0]
    ones = np.ones(n_l)

    def field(points: np.ndarray, with_jacobian: bool = False):
        y = np.atleast_2d(np.asarray(points, dtype=float))
        phi = stein_direction(x_l, s_l, ones, float(n_l), h, eval_positions=y)
        if not with_jacobian:
            return phi
        d = y.shape[1]
        u = x_l[:, None, :] - y[None, :, :]
        k = np.exp(-np.einsum("lmd,lmd->lm", u, u) / h)
        jac = (2.0 / h) * np.einsum("lm,ld,lme->mde", k, s_l, u)
        jac -= (4.0 / h ** 2) * np.einsum("lm,lmd,lme->mde", k, u, u)
        jac += (2.0 / h) * np.einsum("lm->m", k)[:, None, None] * np.eye(d)[None, :, :]
        jac /= n_l
        return phi, jac

    return field


def logdet_exact(a: np.ndarray, eps: float) -> float:
    """log |det(I + eps A)| through a pivoted LU factorization.

    Raises SingularTransformError when a pivot falls below the floor.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m = np.eye(a.shape[0]) + eps * a
    with warnings.catch_warnings():
        # singularity is detected below and raised as a typed error
        warnings.simplefilter("ignore")
        lu, _ = lu_factor(m)
    diag = np.abs(np.diag(lu))
    if np.min(diag) < PIVOT_FLOOR:
        raise SingularTransformError(f"transform is numerically singular (pivot {np.min(diag):.2e})")
    return float(np.sum(np.log(diag)))


def logdet_firstorder(a: np.ndarray, eps: float) -> float:
    """First-order determinant approximation sum_k log(1 + eps a_kk).

    Valid when eps is below the reciprocal spectral radius of A; enforced
    conservatively through the max row-sum norm (which upper-bounds the
    spectral radius and needs no eigensolver).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if eps * float(np.max(np.abs(a).sum(axis=1))) >= 1.0:
        raise InvalidApproximationError("eps * ||A||_inf >= 1: first-order expansion invalid")
    factors = 1.0 + eps * np.diag(a)
    if np.any(factors <= 0.0):
        raise InvalidApproximationError("nonpositive diagonal factor in first-order determinant")
    return float(np.sum(np.log(factors)))


def _follower_log_dets(jacs: np.ndarray, eps: float, det_mode: str):
    """Batched log |det(I + eps A_i)|; returns None when the step must be
    rejected (a fold: some determinant factor <= 0)."""
    n, d, _ = jacs.shape
    diag_factors = 1.0 + eps * jacs[:, np.arange(d), np.arange(d)]
    mode = det_mode
    if det_mode == "auto":
        mode = "first-order" if eps <= FIRST_ORDER_EPS_MAX else "exact"
        if mode == "first-order" and np.any(np.abs(diag_factors) < AUTO_DIAG_GUARD):
            mode = "exact"
    if mode == "first-order":
        if det_mode == "first-order" and eps * float(np.max(np.abs(jacs).sum(axis=2))) >= 1.0:
            raise InvalidApproximationError("eps * ||A||_inf >= 1: first-order expansion invalid")
        if np.any(diag_factors <= 0.0):
            return None
        return np.sum(np.log(diag_factors), axis=1)
    signs, logabs = np.linalg.slogdet(np.eye(d)[None, :, :] + eps * jacs)
    if np.any(signs <= 0.0) or np.any(logabs < np.log(PIVOT_FLOOR)):
        return None
    return logabs


def run_steinis(
    target: ContinuousTarget,
    q0_sampler: Callable[[np.random.Generator, int], np.ndarray],
    q0_logpdf: Callable[[np.ndarray], np.ndarray],
    n_leaders: int,
    n_followers: int,
    iters: int,
    kernel: KernelSpec,
    schedule: StepSchedule,
    rng: np.random.Generator,
    det_mode: str = "auto",
) -> SteinISResult:
    """Evolve leaders and followers, tracking follower densities exactly.

    The initial proposal must supply an exact log pdf.  Each iteration builds
    the map from the leader snapshot, updates every particle by eps * phi, and
    subtracts each follower's log |det(I + eps A)| from its running log q.  A
    step whose determinant factor folds (<= 0) is retried with eps halved, up
    to five times, after which the transform is declared singular; halvings
    apply to the whole iteration and are recorded in the eps history.
    """
    if det_mode not in ("exact", "first-order", "auto"):
        raise ValueError(f"unknown det_mode: {det_mode!r}")
    if schedule.mode == "adam":
        raise ValueError("SteinIS needs a scalar step size (constant or decay schedule)")
    leaders = np.atleast_2d(q0_sampler(rng, n_leaders)).astype(float)
    followers = np.atleast_2d(q0_sampler(rng, n_followers)).astype(float)
    log_q = np.asarray(q0_logpdf(followers), dtype=float).copy()
    eps_history: list[float] = []
    for it in range(iters):
        field = leader_velocity_field(leaders, target, kernel)
        eps = schedule.scalar_eps(it)
        phi_f, jac_f = field(followers, with_jacobian=True)
        log_dets = _follower_log_dets(jac_f, eps, det_mode)
        halvings = 0
        while log_dets is None:
            halvings += 1
            if halvings > MAX_EPS_HALVINGS:
                raise SingularTransformError(f"transform stayed non-invertible after {MAX_EPS_HALVINGS} eps halvings at iteration {it}")
            eps *= 0.5
            log_dets = _follower_log_dets(jac_f, eps, det_mode)
        phi_l = field(leaders)
        leaders = leaders + eps * phi_l
        followers = followers + eps * phi_f
        log_q = log_q - log_dets
        eps_history.append(eps)
        if not (np.all(np.isfinite(leaders)) and np.all(np.isfinite(followers))):
            raise DivergenceError(f"non-finite particle positions at iteration {it}")
        if max(np.max(np.abs(leaders)), np.max(np.abs(followers))) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"particle positions exceeded {DIVERGENCE_LIMIT:g} at iteration {it}")
    log_w = np.asarray(target.log_density(followers), dtype=float) - log_q
    z_hat = float(np.exp(logsumexp(log_w) - np.log(n_followers)))
    sample = WeightedSample(positions=followers, log_weights=log_w)
    ensemble = LeaderFollowerEnsemble(
        leaders=leaders, followers=followers, follower_log_q=log_q, eps_history=tuple(eps_history)
    )
    return SteinISResult(sample=sample, z_hat=z_hat, ensemble=ensemble)


def self_normalized_expectation(sample: WeightedSample, f: Callable[[np.ndarray], np.ndarray]):
    """Importance-weighted average sum_i w-hat_i f(x_i) with normalized weights."""
    w = sample.normalized_weights()
    vals = np.asarray(f(sample.positions), dtype=float)
    if vals.ndim == 1:
        return float(w @ vals)
    return w @ vals


def path_integration_logZ(
    target: ContinuousTarget,
    q0_sampler: Callable[[np.random.Generator, int], np.ndarray],
    q0_logpdf: Callable[[np.ndarray], np.ndarray],
    n: int,
    iters: int,
    kernel: KernelSpec,
    schedule: StepSchedule,
    m0: int,
    rng: np.random.Generator,
) -> float:
    """log Z estimate by integrating squared KSD along an SVGD trajectory.

    Accumulates K-hat = sum_l eps_l * KSD^2(q_l || p) (V-statistic over the
    current particles) while running plain SVGD from q0, then returns
    K-hat - E_q0[log(q0 / p-bar)] with the expectation taken over m0 fresh
    q0 draws.  Requires a scalar step schedule so the accumulated eps matches
    the steps actually taken.
    """
    from .ksd import stein_gram, v_statistic_from_gram

    if schedule.mode == "adam":
        raise ValueError("path integration needs a scalar step size (constant or decay schedule)")
    if target.score is None:
        raise ValueError("path integration requires the target score")
    ref = q0_sampler(rng, m0)
    e0 = float(np.mean(np.asarray(q0_logpdf(ref), dtype=float) - np.asarray(target.log_density(ref), dtype=float)))
    x = np.atleast_2d(q0_sampler(rng, n)).astype(float)
    ones = np.ones(x.shape[0])
    k_hat = 0.0
    for it in range(iters):
        h = resolve_bandwidth(kernel, x)
        s = np.atleast_2d(np.asarray(target.score(x), dtype=float))
        eps = schedule.scalar_eps(it)
        k_hat += eps * v_statistic_from_gram(stein_gram(x, s, h))
        x = x + eps * stein_direction(x, s, ones, float(x.shape[0]), h)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite particle positions at iteration {it}")
    return k_hat - e0
