"""Gradient-free SVGD: surrogate-score updates with importance-weight correction.

The update direction replaces the target score with a surrogate score s_rho
and multiplies each particle's contribution by w = rho-bar / p-bar.  Weights
are handled in log space throughout; in self-normalized mode the direction is
invariant to rescaling either unnormalized density, so neither normalization
constant is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateWeightsError
from .kernels import KernelSpec, median_bandwidth, resolve_bandwidth
from .models import ContinuousTarget, _rowwise
from .svgd import (
    ParticleEnsemble,
    StepSchedule,
    annealed_targets,
    apply_direction,
    init_ensemble,
    stein_direction,
)


@dataclass(frozen=True)
class Surrogate:
    """Differentiable auxiliary density rho-bar with its score s_rho."""

    log_density: Callable[[np.ndarray], np.ndarray]
    score: Callable[[np.ndarray], np.ndarray]


def surrogate_from_target(target: ContinuousTarget) -> Surrogate:
    """Use the target itself as surrogate (w = 1; reduces to plain SVGD)."""
    if target.score is None:
        raise ValueError("target has no score to reuse as a surrogate")
    return Surrogate(log_density=target.log_density, score=target.score)


@dataclass(frozen=True)
class WeightTrack:
    """Per-particle log importance weights log(rho-bar / p-bar)."""

    log_w: np.ndarray

    def normalized(self) -> np.ndarray:
        w = np.exp(self.log_w - np.max(self.log_w))
        return w / w.sum()

    @property
    def ess(self) -> float:
        return float(np.exp(2.0 * logsumexp(self.log_w) - logsumexp(2.0 * self.log_w)))


def effective_sample_size(log_w: np.ndarray) -> float:
    """(sum w)^2 / sum w^2, computed in log space."""
    return float(np.exp(2.0 * logsumexp(log_w) - logsumexp(2.0 * log_w)))


def rank_normalized_weights(log_w: np.ndarray) -> np.ndarray:
    """gamma_j = n / #{k : w_k >= w_j} (ties counted inclusively).

    Depends only on the ranks of the weights, hence is invariant under any
    monotone transform of them; equal weights map to all-ones.
    """
    log_w = np.asarray(log_w, dtype=float)
    n = log_w.size
    order = np.sort(log_w)
    count_ge = n - np.searchsorted(order, log_w, side="left")
    return n / count_ge.astype(float)


def _direction_weights(log_w: np.ndarray, mode: str, ess_floor: float = 2.0) -> tuple[np.ndarray, float]:
    """Weights and normalizer Z for the chosen mode; raises on degeneracy.

    ``ess_floor`` is the effective-sample-size threshold below which the
    direction has collapsed onto (nearly) one particle; pass 0 to reproduce
    unguarded behavior for stress experiments with badly matched surrogates.
    """
    n = log_w.size
    if mode == "self-normalized":
        top = np.max(log_w)
        if not np.isfinite(top):
            raise DegenerateWeightsError(f"all importance weights vanished (max log-weight {top})")
        w = np.exp(log_w - top)
        z = float(w.sum())
    elif mode == "plain":
        w = np.exp(log_w)
        z = float(n)
        if not np.any(w > 0):
            raise DegenerateWeightsError(
                f"all importance weights underflowed to zero (max log-weight {np.max(log_w):.3g})"
            )
    elif mode == "rank":
        w = rank_normalized_weights(log_w)
        z = float(w.sum())
    else:
        raise ValueError(f"unknown weight mode: {mode!r}")
    if n >= 2 and ess_floor > 0:
        ess = float(w.sum() ** 2 / (w ** 2).sum()) if np.any(w > 0) else 0.0
        if ess < ess_floor:
            raise DegenerateWeightsError(
                f"effective sample size {ess:.3f} < {ess_floor:g} (max log-weight {np.max(log_w):.3g})"
            )
    return w, z


def gf_svgd_direction(
    particles: np.ndarray,
    target: ContinuousTarget,
    surrogate: Surrogate,
    kernel: KernelSpec,
    weight_mode: str = "self-normalized",
    ess_floor: float = 2.0,
) -> np.ndarray:
    """Gradient-free update direction: row i is
    (1/Z) sum_j w_j [ s_rho(x_j) k(x_j, x_i) + grad_{x_j} k(x_j, x_i) ]."""
    x = np.atleast_2d(np.asarray(particles, dtype=float))
    h = resolve_bandwidth(kernel, x)
    log_w = surrogate.log_density(x) - target.log_density(x)
    w, z = _direction_weights(log_w, weight_mode, ess_floor)
    return stein_direction(x, surrogate.score(x), w, z, h)


def kernel_curve_surrogate(
    anchor_points: np.ndarray,
    anchor_logp: np.ndarray,
    smoothing_h: float,
) -> Surrogate:
    """Smooth over-dispersed fit of a density from its values at anchor points:
    rho-bar(x) = sum_j p(x_j) exp(-||x_j - x||^2 / h), assembled in log space.

    The score is the analytic gradient of that mixture (responsibility-weighted
    average of 2 (x_j - x) / h).
    """
    anchors = np.atleast_2d(np.asarray(anchor_points, dtype=float))
    logp = np.asarray(anchor_logp, dtype=float)
    if anchors.shape[0] != logp.size:
        raise ValueError("anchor point and log-density counts differ")
    if not smoothing_h > 0:
        raise ValueError("smoothing_h must be > 0")

    def logits(x):
        d2 = ((anchors[None, :, :] - x[:, None, :]) ** 2).sum(axis=2)
        return logp[None, :] - d2 / smoothing_h

    def log_density(x):
        return logsumexp(logits(x), axis=1)

    def score(x):
        lg = logits(x)
        r = np.exp(lg - logsumexp(lg, axis=1, keepdims=True))
        return np.einsum("nm,nmd->nd", r, anchors[None, :, :] - x[:, None, :]) * (2.0 / smoothing_h)

    return Surrogate(log_density=_rowwise(log_density), score=_rowwise(score))


@dataclass(frozen=True)
class GFSVGDResult:
    ensemble: ParticleEnsemble
    ess_history: np.ndarray
    final_weights: WeightTrack


def run_gf_svgd(
    target: ContinuousTarget,
    surrogate: Surrogate,
    n: int,
    iters: int,
    kernel: KernelSpec,
    schedule: StepSchedule,
    weight_mode: str,
    rng: np.random.Generator,
    init_sampler: Callable[[np.random.Generator, int], np.ndarray],
    callback: Optional[Callable[[ParticleEnsemble], None]] = None,
    ess_floor: float = 2.0,
    weight_scaled_steps: bool = False,
) -> GFSVGDResult:
    """Run the gradient-free particle loop, recording the effective sample
    size of the importance weights at every iteration.

    ``weight_scaled_steps`` enables the variant where each particle's own
    (self-normalized, n-scaled) importance weight multiplies its step, in
    place of uniform step sizes; the default keeps steps uniform and leaves
    adaptivity to the schedule.
    """
    ensemble = init_ensemble(init_sampler(rng, n))
    if callback is not None:
        callback(ensemble)
    ess_history = np.empty(iters)
    for i in range(iters):
        x = ensemble.positions
        h = resolve_bandwidth(kernel, x)
        log_w = surrogate.log_density(x) - target.log_density(x)
        ess_history[i] = effective_sample_size(log_w)
        w, z = _direction_weights(log_w, weight_mode, ess_floor)
        direction = stein_direction(x, surrogate.score(x), w, z, h)
        if weight_scaled_steps:
            direction = direction * (n * w / w.sum())[:, None]
        ensemble = apply_direction(ensemble, direction, schedule)
        if callback is not None:
            callback(ensemble)
    log_w = surrogate.log_density(ensemble.positions) - target.log_density(ensemble.positions)
    return GFSVGDResult(ensemble=ensemble, ess_history=ess_history, final_weights=WeightTrack(log_w))


def run_agf_svgd(
    target: ContinuousTarget,
    p0: ContinuousTarget,
    betas: np.ndarray,
    n: int,
    kernel: KernelSpec,
    schedule: StepSchedule,
    rng: np.random.Generator,
    p0_sampler: Callable[[np.random.Generator, int], np.ndarray],
    smoothing_h: Optional[float] = None,
    callback: Optional[Callable[[ParticleEnsemble], None]] = None,
    ess_floor: float = 2.0,
) -> GFSVGDResult:
    """Annealed gradient-free SVGD.

    At temperature step l the surrogate is rebuilt on the fly by smoothing the
    next intermediate density's values at the current particles, so the weight
    ratio compares two nearby distributions.  One gradient-free step is taken
    per temperature; the smoothing bandwidth defaults to the median heuristic
    over the current particles.
    """
    path = annealed_targets(p0, target, betas)[1:]
    ensemble = init_ensemble(p0_sampler(rng, n))
    if callback is not None:
        callback(ensemble)
    ess_history = np.empty(len(path))
    surrogate = None
    for i, p_next in enumerate(path):
        x = ensemble.positions
        h_s = median_bandwidth(x) if smoothing_h is None else smoothing_h
        surrogate = kernel_curve_surrogate(x, p_next.log_density(x), h_s)
        h = resolve_bandwidth(kernel, x)
        log_w = surrogate.log_density(x) - p_next.log_density(x)
        ess_history[i] = effective_sample_size(log_w)
        w, z = _direction_weights(log_w, "self-normalized", ess_floor)
        direction = stein_direction(x, surrogate.score(x), w, z, h)
        ensemble = apply_direction(ensemble, direction, schedule)
        if callback is not None:
            callback(ensemble)
    log_w = surrogate.log_density(ensemble.positions) - target.log_density(ensemble.positions)
    return GFSVGDResult(ensemble=ensemble, ess_history=ess_history, final_weights=WeightTrack(log_w))
