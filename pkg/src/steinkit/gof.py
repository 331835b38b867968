"""Goodness-of-fit testing for discrete distributions via gradient-free KSD.

Discrete data are lifted to continuous points (one uniform draw per
coordinate inside the state's quantile bin), the gradient-free Stein kernel
matrix is assembled once against the continuized null, and a multinomial
bootstrap of its degenerate U-statistic calibrates the rejection threshold.
The continuization draw is part of the test, so the seed is recorded in the
report; bootstrap replicates reuse the same kernel matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .discrete import (
    ContinuousParameterization,
    base_surrogate,
    continuize_data,
    make_parameterization,
    pc_log_density,
    smooth_relaxation_surrogate,
)
from .gfsvgd import Surrogate
from .kernels import median_bandwidth, pairwise_sq_dists
from .ksd import gf_stein_gram, u_statistic_from_gram
from .models import DiscreteTarget
from .rngs import stream_rng
from .steinis import WeightedSample


@dataclass(frozen=True)
class TestReport:
    """Outcome of one bootstrap goodness-of-fit test.

    ``reject`` is p_value < alpha, and the reported critical value is the
    bootstrap order statistic chosen so that reject holds iff
    statistic > critical_value.
    """

    __test__ = False  # dataclass, not a pytest case

    statistic: float
    n_bootstrap: int
    critical_value: float
    p_value: float
    reject: bool
    alpha: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "n_bootstrap": self.n_bootstrap,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": bool(self.reject),
            "alpha": self.alpha,
            "seed": self.seed,
        }


def _resolve_surrogate(
    mode: Union[str, Surrogate],
    null_target: DiscreteTarget,
    param: ContinuousParameterization,
    temperature: float,
) -> Surrogate:
    if isinstance(mode, Surrogate):
        return mode
    if mode == "base":
        return base_surrogate(param)
    if mode == "relaxed":
        return smooth_relaxation_surrogate(null_target, param, temperature)
    raise ValueError(f"unknown surrogate mode: {mode!r}")


def gof_gram(
    z_data: np.ndarray,
    null_target: DiscreteTarget,
    param: ContinuousParameterization,
    rng: np.random.Generator,
    surrogate_mode: Union[str, Surrogate] = "base",
    kernel_h: Optional[float] = None,
    temperature: float = 10.0,
) -> np.ndarray:
    """The n x n gradient-free Stein kernel matrix of the continuized data
    against the null's continuous parameterization (log-weights centered, so
    the matrix carries an arbitrary positive scale)."""
    z = np.atleast_2d(np.asarray(z_data, dtype=float))
    if z.shape[0] < 2:
        raise ValueError("goodness-of-fit testing needs at least two data points")
    x = continuize_data(z, param, rng)
    surrogate = _resolve_surrogate(surrogate_mode, null_target, param, temperature)
    h = median_bandwidth(x) if kernel_h is None else float(kernel_h)
    gram = gf_stein_gram(x, surrogate, lambda pts: pc_log_density(pts, param), h)
    return 0.5 * (gram + gram.T)


def gof_statistic(
    z_data: np.ndarray,
    null_target: DiscreteTarget,
    param: ContinuousParameterization,
    rng: np.random.Generator,
    surrogate_mode: Union[str, Surrogate] = "base",
    kernel_h: Optional[float] = None,
) -> float:
    """Off-diagonal U-statistic of the gradient-free Stein kernel matrix."""
    return u_statistic_from_gram(gof_gram(z_data, null_target, param, rng, surrogate_mode, kernel_h))


def bootstrap_null(gram: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """m multinomial-bootstrap replicates of the degenerate U-statistic:
    sum_{i != j} (u_i - 1/n) K_ij (u_j - 1/n) with n u ~ Multinomial(n; 1/n)."""
    if m < 1:
        raise ValueError("need at least one bootstrap replicate")
    n = gram.shape[0]
    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=m)
    v = counts / n - 1.0 / n
    full = np.einsum("mi,mi->m", v @ gram, v)
    diag_part = v ** 2 @ np.diag(gram)
    return full - diag_part


def _critical_value(replicates: np.ndarray, statistic: float, alpha: float) -> float:
    """Largest replicate order statistic c with (reject <=> statistic > c)."""
    m = replicates.size
    a_thr = alpha * (m + 1) - 1.0
    ceil_a = math.ceil(a_thr)
    r_max = ceil_a - 1 if ceil_a > a_thr else int(a_thr) - 1
    if r_max < 0:
        return float("inf")
    if r_max >= m:
        return float("-inf")
    return float(np.sort(replicates)[::-1][r_max])


def gof_test(
    z_data: np.ndarray,
    null_target: DiscreteTarget,
    alpha: float = 0.05,
    m: int = 1000,
    seed: int = 0,
    surrogate_mode: Union[str, Surrogate] = "base",
    kernel_h: Optional[float] = None,
    param: Optional[ContinuousParameterization] = None,
) -> TestReport:
    """Bootstrap goodness-of-fit test of the data against ``null_target``.

    The p-value uses the finite-sample correction (r + 1) / (m + 1) where r
    counts replicates at or above the statistic.
    """
    if param is None:
        param = make_parameterization(null_target)
    gram = gof_gram(z_data, null_target, param, stream_rng(seed, 0), surrogate_mode, kernel_h)
    statistic = u_statistic_from_gram(gram)
    replicates = bootstrap_null(gram, m, stream_rng(seed, 1))
    r = int(np.sum(replicates >= statistic))
    p_value = (r + 1) / (m + 1)
    return TestReport(
        statistic=float(statistic),
        n_bootstrap=m,
        critical_value=_critical_value(replicates, statistic, alpha),
        p_value=float(p_value),
        reject=bool(p_value < alpha),
        alpha=float(alpha),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# MMD baselines
# ---------------------------------------------------------------------------

def _hamming_gram(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    d = z1.shape[1]
    mismatches = (z1[:, None, :] != z2[None, :, :]).sum(axis=2)
    return np.exp(-mismatches / d)


def mmd_hamming(z_samples_1: np.ndarray, z_samples_2: np.ndarray) -> float:
    """Biased (V-statistic) MMD^2 under the exponentiated normalized Hamming kernel."""
    z1 = np.atleast_2d(np.asarray(z_samples_1))
    z2 = np.atleast_2d(np.asarray(z_samples_2))
    if z1.shape[1] != z2.shape[1]:
        raise ValueError("sample sets have different dimensions")
    return float(
        _hamming_gram(z1, z1).mean() + _hamming_gram(z2, z2).mean() - 2.0 * _hamming_gram(z1, z2).mean()
    )


def mmd_rbf(x: np.ndarray, y: np.ndarray, kernel_h: float) -> float:
    """Biased MMD^2 between two plain samples under the RBF kernel."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    kxx = np.exp(-pairwise_sq_dists(x, x) / kernel_h)
    kyy = np.exp(-pairwise_sq_dists(y, y) / kernel_h)
    kxy = np.exp(-pairwise_sq_dists(x, y) / kernel_h)
    return float(kxx.mean() + kyy.mean() - 2.0 * kxy.mean())


def weighted_mmd(x_weighted: WeightedSample, y_exact: np.ndarray, kernel_h: float) -> float:
    """Importance-weighted MMD^2 between a weighted sample and an exact one:
    sum_ij w-hat_i k w-hat_j - (2/M) sum w-hat_i k(x_i, y_j) + (1/M^2) sum k(y, y')."""
    w = x_weighted.normalized_weights()
    x = np.atleast_2d(x_weighted.positions)
    y = np.atleast_2d(np.asarray(y_exact, dtype=float))
    kxx = np.exp(-pairwise_sq_dists(x, x) / kernel_h)
    kxy = np.exp(-pairwise_sq_dists(x, y) / kernel_h)
    kyy = np.exp(-pairwise_sq_dists(y, y) / kernel_h)
    m = y.shape[0]
    return float(w @ kxx @ w - (2.0 / m) * (w @ kxy).sum() + kyy.sum() / m ** 2)
