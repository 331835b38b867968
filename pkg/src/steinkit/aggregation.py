"""One-shot distributed model aggregation by bootstrapped KL-averaging.

Local machines ship fitted models (Gaussian or GMM); the fusion center draws
parametric-bootstrap samples from them and combines them with one of three
estimators: the naive pooled refit, a linear control-variates correction
driven by empirical Fisher matrices, or a multiplicatively weighted refit
whose weights are the density ratio between each local model and its
bootstrap re-estimate.  The naive estimator's bootstrap error decays like
1/(d n); both corrected estimators reach 1/(d n^2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp
from scipy.stats import wishart

from .rngs import stream_rng

RIDGE = 1e-8
LOG_RATIO_CLIP = 30.0


@dataclass(frozen=True)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray
    machine: int = 0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match the mean")

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GMMModel:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    machine: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cv = np.asarray(self.covs, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cv)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
            raise ValueError("mixture weights must lie on the simplex")
        if cv.shape != (w.size, mu.shape[1], mu.shape[1]):
            raise ValueError("component covariance shapes are inconsistent")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size


LocalModel = Union[GaussianModel, GMMModel]


@dataclass(frozen=True)
class AggregationResult:
    method: str
    model: LocalModel
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Density / sampling / MLE primitives
# ---------------------------------------------------------------------------

def _gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    p = mean.size
    chol = np.linalg.cholesky(cov)
    u = np.atleast_2d(x) - mean
    y = solve_triangular(chol, u.T, lower=True).T
    maha = np.einsum("np,np->n", y, y)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (maha + logdet + p * np.log(2.0 * np.pi))


def model_logpdf(model: LocalModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if isinstance(model, GaussianModel):
        return _gaussian_logpdf(x, model.mean, model.cov)
    comps = np.stack([_gaussian_logpdf(x, model.means[c], model.covs[c]) for c in range(model.n_components)], axis=1)
    return logsumexp(comps + np.log(np.maximum(model.weights, 1e-300)), axis=1)


def model_sample(model: LocalModel, rng: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(model, GaussianModel):
        chol = np.linalg.cholesky(model.cov)
        return model.mean + rng.standard_normal((n, model.dim)) @ chol.T
    idx = rng.choice(model.n_components, size=n, p=model.weights / model.weights.sum())
    out = np.empty((n, model.dim))
    for c in range(model.n_components):
        mask = idx == c
        if np.any(mask):
            chol = np.linalg.cholesky(model.covs[c])
            out[mask] = model.means[c] + rng.standard_normal((mask.sum(), model.dim)) @ chol.T
    return out


def _safe_cov(cov: np.ndarray) -> np.ndarray:
    try:
        np.linalg.cholesky(cov)
        return cov
    except np.linalg.LinAlgError:
        warnings.warn("singular covariance regularized with 1e-8 * I")
        return cov + RIDGE * np.eye(cov.shape[0])


def _gaussian_mle(x: np.ndarray, sample_weights: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Gaussian MLE; covariance uses the 1/n (biased) convention."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = np.ones(x.shape[0]) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    wsum = w.sum()
    mean = (w @ x) / wsum
    u = x - mean
    cov = (u.T * w) @ u / wsum
    return mean, _safe_cov(cov)


def _kmeans_style_init(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Responsibility init: nearest of m distinct seed points."""
    centers = x[rng.choice(x.shape[0], size=m, replace=False)]
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((x.shape[0], m))
    resp[np.arange(x.shape[0]), d2.argmin(axis=1)] = 1.0
    return resp


def _gmm_em(
    x: np.ndarray,
    m: int,
    rng: np.random.Generator,
    sample_weights: Optional[np.ndarray] = None,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> GMMModel:
    """(Weighted) EM for a full-covariance GMM; the weighted log-likelihood is
    checked to be nondecreasing at every iteration."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, p = x.shape
    sw = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    resp = _kmeans_style_init(x, m, rng)
    weights = np.empty(m)
    means = np.empty((m, p))
    covs = np.empty((m, p, p))

    def m_step(r):
        rw = r * sw[:, None]
        nc = np.maximum(rw.sum(axis=0), 1e-12)
        w = nc / nc.sum()
        for c in range(m):
            means[c] = rw[:, c] @ x / nc[c]
            u = x - means[c]
            covs[c] = _safe_cov((u.T * rw[:, c]) @ u / nc[c])
        return w

    weights = m_step(resp)
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_comp = np.stack([_gaussian_logpdf(x, means[c], covs[c]) for c in range(m)], axis=1)
        log_comp = log_comp + np.log(np.maximum(weights, 1e-300))
        log_norm = logsumexp(log_comp, axis=1)
        ll = float(sw @ log_norm) / sw.sum()
        if ll < prev_ll - 1e-8 * max(1.0, abs(prev_ll)):
            raise AssertionError(f"EM log-likelihood decreased: {prev_ll} -> {ll}")
        resp = np.exp(log_comp - log_norm[:, None])
        weights = m_step(resp)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            prev_ll = ll
            break
        prev_ll = ll
    return GMMModel(weights=weights.copy(), means=means.copy(), covs=covs.copy())


def local_mle(
    data: np.ndarray,
    family: str = "gaussian",
    n_components: int = 1,
    rng: Optional[np.random.Generator] = None,
    machine: int = 0,
) -> LocalModel:
    """Fit one machine's model: Gaussian closed form, or GMM by seeded EM."""
    x = np.atleast_2d(np.asarray(data, dtype=float))
    if family == "gaussian":
        if x.shape[0] <= x.shape[1]:
            raise ValueError("Gaussian MLE needs more samples than dimensions")
        mean, cov = _gaussian_mle(x)
        return GaussianModel(mean=mean, cov=cov, machine=machine)
    if family == "gmm":
        if n_components == 1:
            mean, cov = _gaussian_mle(x)
            return GMMModel(weights=np.ones(1), means=mean[None, :], covs=cov[None, :, :], machine=machine)
        if rng is None:
            raise ValueError("GMM fitting needs an rng for the seeded init")
        fit = _gmm_em(x, n_components, rng)
        return GMMModel(weights=fit.weights, means=fit.means, covs=fit.covs, machine=machine)
    raise ValueError(f"unknown family: {family!r}")


# ---------------------------------------------------------------------------
# Parameter vectorization (Gaussian) for the control-variates correction
# ---------------------------------------------------------------------------

def _vech_indices(p: int):
    return np.tril_indices(p)


def pack_gaussian(model: GaussianModel) -> np.ndarray:
    i, j = _vech_indices(model.dim)
    return np.concatenate([model.mean, model.cov[i, j]])


def unpack_gaussian(theta: np.ndarray, p: int) -> GaussianModel:
    mean = theta[:p]
    cov = np.zeros((p, p))
    i, j = _vech_indices(p)
    cov[i, j] = theta[p:]
    cov[j, i] = theta[p:]
    return GaussianModel(mean=mean, cov=cov)


def _gaussian_param_scores(model: GaussianModel, x: np.ndarray) -> np.ndarray:
    """Per-sample score d log N(x; mu, Sigma) / d theta in (mean, vech cov)
    coordinates; off-diagonal covariance entries appear once, so their score
    components carry the factor 2."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = model.dim
    prec = np.linalg.inv(model.cov)
    u = x - model.mean
    pu = u @ prec
    s_mean = pu
    g = 0.5 * (np.einsum("ni,nj->nij", pu, pu) - prec[None, :, :])
    i, j = _vech_indices(p)
    s_cov = g[:, i, j]
    s_cov[:, i != j] *= 2.0
    return np.concatenate([s_mean, s_cov], axis=1)


def empirical_fisher(model: GaussianModel, x: np.ndarray) -> np.ndarray:
    """(1/n) sum_j s s' over the bootstrap points, s the parameter score."""
    s = _gaussian_param_scores(model, x)
    return s.T @ s / s.shape[0]


def control_coefficients(fishers: Sequence[np.ndarray]) -> list[np.ndarray]:
    """B_k = -(sum_k I_k)^{-1} I_k, with a ridge fallback when the sum is singular."""
    total = np.sum(fishers, axis=0)
    try:
        solve = np.linalg.solve(total, np.stack(fishers, axis=0).transpose(1, 0, 2).reshape(total.shape[0], -1))
    except np.linalg.LinAlgError:
        warnings.warn("singular Fisher sum; adding 1e-8 ridge")
        total = total + RIDGE * np.eye(total.shape[0])
        solve = np.linalg.solve(total, np.stack(fishers, axis=0).transpose(1, 0, 2).reshape(total.shape[0], -1))
    q = total.shape[0]
    stacked = solve.reshape(q, len(fishers), q).transpose(1, 0, 2)
    return [-b for b in stacked]


# ---------------------------------------------------------------------------
# Aggregation estimators
# ---------------------------------------------------------------------------

def _draw_bootstrap(models: Sequence[LocalModel], n: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [model_sample(m, rng, n) for m in models]


def _refit(models: Sequence[LocalModel], boots: Sequence[np.ndarray], rng: Optional[np.random.Generator]) -> list[LocalModel]:
    out = []
    for m, b in zip(models, boots):
        if isinstance(m, GaussianModel):
            mean, cov = _gaussian_mle(b)
            out.append(GaussianModel(mean=mean, cov=cov, machine=m.machine))
        else:
            out.append(_gmm_em(b, m.n_components, rng))
    return out


def _pooled_fit(models: Sequence[LocalModel], boots: Sequence[np.ndarray], rng, sample_weights=None) -> LocalModel:
    pooled = np.vstack(boots)
    if isinstance(models[0], GaussianModel):
        mean, cov = _gaussian_mle(pooled, sample_weights)
        return GaussianModel(mean=mean, cov=cov)
    return _gmm_em(pooled, models[0].n_components, rng, sample_weights)


def kl_naive(local_models: Sequence[LocalModel], n_bootstrap: int, rng: np.random.Generator) -> AggregationResult:
    """Pooled MLE over n parametric-bootstrap draws from every local model."""
    if n_bootstrap < 1:
        raise ValueError("need at least one bootstrap draw per machine")
    boots = _draw_bootstrap(local_models, n_bootstrap, rng)
    model = _pooled_fit(local_models, boots, rng)
    return AggregationResult("kl-naive", model, {"n_bootstrap": n_bootstrap, "machines": len(local_models)})


def _kl_control_core(
    models: Sequence[LocalModel],
    boots: Sequence[np.ndarray],
    refits: Sequence[LocalModel],
    naive: GaussianModel,
) -> GaussianModel:
    fishers = [empirical_fisher(m, b) for m, b in zip(models, boots)]
    bs = control_coefficients(fishers)
    theta = pack_gaussian(naive)
    for b_k, m_hat, m_tilde in zip(bs, models, refits):
        theta = theta + b_k @ (pack_gaussian(m_tilde) - pack_gaussian(m_hat))
    return unpack_gaussian(theta, models[0].dim)


def kl_control(local_models: Sequence[LocalModel], n_bootstrap: int, rng: np.random.Generator) -> AggregationResult:
    """Linear control-variates correction of the naive estimator.

    Implemented for the Gaussian family, whose parameters are additive; GMM
    inputs must be component-matched and are not supported here.
    """
    if not all(isinstance(m, GaussianModel) for m in local_models):
        raise ValueError("kl_control supports the Gaussian family only; match and convert GMMs first")
    boots = _draw_bootstrap(local_models, n_bootstrap, rng)
    refits = _refit(local_models, boots, rng)
    naive = _pooled_fit(local_models, boots, rng)
    model = _kl_control_core(local_models, boots, refits, naive)
    return AggregationResult("kl-control", model, {"n_bootstrap": n_bootstrap, "machines": len(local_models)})


def _ratio_weights(models: Sequence[LocalModel], refits: Sequence[LocalModel], boots: Sequence[np.ndarray]) -> np.ndarray:
    logs = []
    for m_hat, m_tilde, b in zip(models, refits, boots):
        logs.append(model_logpdf(m_hat, b) - model_logpdf(m_tilde, b))
    log_ratio = np.concatenate(logs)
    clipped = np.clip(log_ratio, -LOG_RATIO_CLIP, LOG_RATIO_CLIP)
    if np.any(clipped != log_ratio):
        warnings.warn("importance ratios clipped at exp(+-30)")
    return np.exp(clipped)


def _kl_weighted_core(
    models: Sequence[LocalModel],
    boots: Sequence[np.ndarray],
    refits: Sequence[LocalModel],
    rng: Optional[np.random.Generator],
) -> LocalModel:
    weights = _ratio_weights(models, refits, boots)
    return _pooled_fit(models, boots, rng, sample_weights=weights)


def kl_weighted(local_models: Sequence[LocalModel], n_bootstrap: int, rng: np.random.Generator) -> AggregationResult:
    """Weighted pooled refit: each bootstrap point carries the density ratio
    p(x | theta-hat_k) / p(x | theta-tilde_k) as a multiplicative weight.

    With theta-tilde = theta-hat the ratios are identically 1 and the
    estimator reduces to the naive one exactly.
    """
    boots = _draw_bootstrap(local_models, n_bootstrap, rng)
    refits = _refit(local_models, boots, rng)
    model = _kl_weighted_core(local_models, boots, refits, rng)
    return AggregationResult("kl-weighted", model, {"n_bootstrap": n_bootstrap, "machines": len(local_models)})


def symmetric_kl_gaussians(m1: np.ndarray, c1: np.ndarray, m2: np.ndarray, c2: np.ndarray) -> float:
    """KL(P||Q) + KL(Q||P) between two Gaussians, in closed form."""

    def kl(ma, ca, mb, cb):
        p = ma.size
        prec_b = np.linalg.inv(cb)
        diff = mb - ma
        tr = float(np.trace(prec_b @ ca))
        maha = float(diff @ prec_b @ diff)
        logdet = float(np.linalg.slogdet(cb)[1] - np.linalg.slogdet(ca)[1])
        return 0.5 * (tr + maha - p + logdet)

    return kl(m1, c1, m2, c2) + kl(m2, c2, m1, c1)


def match_components(gmm_models: Sequence[GMMModel]) -> list[np.ndarray]:
    """Per-model component permutations aligning everything to the first model,
    by minimum-cost assignment on pairwise symmetric KL between components."""
    counts = {m.n_components for m in gmm_models}
    if len(counts) != 1:
        raise ValueError("component matching requires equal component counts")
    ref = gmm_models[0]
    perms = [np.arange(ref.n_components)]
    for model in gmm_models[1:]:
        cost = np.empty((ref.n_components, model.n_components))
        for a in range(ref.n_components):
            for b in range(model.n_components):
                cost[a, b] = symmetric_kl_gaussians(ref.means[a], ref.covs[a], model.means[b], model.covs[b])
        _, cols = linear_sum_assignment(cost)
        perms.append(cols)
    return perms


def linear_average(local_models: Sequence[LocalModel]) -> AggregationResult:
    """Parameter-wise mean; GMM components are matched to the first model first.

    Requires identical parameterizations across machines (same family and, for
    mixtures, the same component count) -- the structural weakness that
    KL-averaging avoids.
    """
    if all(isinstance(m, GaussianModel) for m in local_models):
        mean = np.mean([m.mean for m in local_models], axis=0)
        cov = np.mean([m.cov for m in local_models], axis=0)
        return AggregationResult("linear", GaussianModel(mean=mean, cov=cov), {"machines": len(local_models)})
    if all(isinstance(m, GMMModel) for m in local_models):
        perms = match_components(local_models)
        weights = np.mean([m.weights[p] for m, p in zip(local_models, perms)], axis=0)
        means = np.mean([m.means[p] for m, p in zip(local_models, perms)], axis=0)
        covs = np.mean([m.covs[p] for m, p in zip(local_models, perms)], axis=0)
        model = GMMModel(weights=weights / weights.sum(), means=means, covs=covs)
        return AggregationResult("linear", model, {"machines": len(local_models)})
    raise ValueError("linear averaging needs identically parameterized models")


def exact_kl_average_gaussian(local_models: Sequence[GaussianModel]) -> GaussianModel:
    """Exact KL-average for Gaussians sharing a known covariance: the mean of
    the local means (moment matching of the full exponential family)."""
    cov = local_models[0].cov
    for m in local_models[1:]:
        if not np.allclose(m.cov, cov):
            raise ValueError("exact KL averaging here assumes one shared covariance")
    mean = np.mean([m.mean for m in local_models], axis=0)
    return GaussianModel(mean=mean, cov=cov.copy())


# ---------------------------------------------------------------------------
# Rate experiment (desk-scale simulation in the asymptotic-local-MLE regime)
# ---------------------------------------------------------------------------

def exact_kl_optimum_gaussian(models: Sequence[GaussianModel]) -> GaussianModel:
    """Closed-form argmax of sum_k E_{p_k}[log N(x; theta)]: moment matching
    against the equal-weight mixture of the local models."""
    mean = np.mean([m.mean for m in models], axis=0)
    second = np.mean([m.cov + np.outer(m.mean, m.mean) for m in models], axis=0)
    return GaussianModel(mean=mean, cov=second - np.outer(mean, mean))


def _draw_asymptotic_local_models(
    rng: np.random.Generator, n_machines: int, dim: int, big_n: float, known_covariance: bool = False
) -> list[GaussianModel]:
    """Local MLEs drawn from their asymptotic sampling distribution around the
    truth (standard Gaussian), standing in for fits to N/d raw points."""
    m_per = big_n / n_machines
    models = []
    for k in range(n_machines):
        mean = rng.standard_normal(dim) / np.sqrt(m_per)
        if known_covariance:
            cov = np.eye(dim)
        else:
            cov = wishart.rvs(df=int(m_per) - 1, scale=np.eye(dim) / m_per, random_state=rng)
        models.append(GaussianModel(mean=mean, cov=cov, machine=k))
    return models


def gaussian_mse(model: GaussianModel, reference: GaussianModel) -> float:
    return float(np.sum((model.mean - reference.mean) ** 2) + np.sum((model.cov - reference.cov) ** 2))


def _known_cov_fits(models: Sequence[GaussianModel], boots: Sequence[np.ndarray], methods) -> dict:
    """Estimators in the known-covariance regime: only the mean is unknown.

    The shared covariance enters the ratio weights and the Fisher blocks but
    is never re-estimated, so every estimator is a (weighted or corrected)
    mean and the covariance block contributes no error.
    """
    cov = models[0].cov
    prec = np.linalg.inv(cov)
    pooled = np.vstack(boots)
    naive_mean = pooled.mean(axis=0)
    mean_hats = [m.mean for m in models]
    mean_tildes = [b.mean(axis=0) for b in boots]
    fits = {}
    if "kl-naive" in methods:
        fits["kl-naive"] = naive_mean
    if "kl-control" in methods:
        fishers = []
        for m, b in zip(models, boots):
            s = (b - m.mean) @ prec
            fishers.append(s.T @ s / b.shape[0])
        bs = control_coefficients(fishers)
        theta = naive_mean.copy()
        for b_k, hat, tilde in zip(bs, mean_hats, mean_tildes):
            theta = theta + b_k @ (tilde - hat)
        fits["kl-control"] = theta
    if "kl-weighted" in methods:
        logs = []
        for m, b, tilde in zip(models, boots, mean_tildes):
            logs.append(_gaussian_logpdf(b, m.mean, cov) - _gaussian_logpdf(b, tilde, cov))
        w = np.exp(np.clip(np.concatenate(logs), -LOG_RATIO_CLIP, LOG_RATIO_CLIP))
        fits["kl-weighted"] = (w @ pooled) / w.sum()
    if "linear" in methods:
        fits["linear"] = np.mean(mean_hats, axis=0)
    return {k: GaussianModel(mean=v, cov=cov.copy()) for k, v in fits.items()}


def gaussian_rate_experiment(
    n_machines: int,
    dim: int,
    n_grid: Sequence[int],
    n_trials: int,
    seed: int,
    big_n: float = 6e7,
    methods: Sequence[str] = ("kl-naive", "kl-control", "kl-weighted"),
    trial_indices: Optional[Sequence[int]] = None,
    known_covariance: bool = False,
) -> list[dict]:
    """MSE-vs-bootstrap-size grid for the three estimators, paired per trial.

    Within a trial all methods share the same local models and the same
    bootstrap draw, which makes per-n comparisons nearly noise-free.  Returns
    rows (method, d, n, trial, mse) with the MSE measured against the exact
    KL optimum of that trial's local models.  ``trial_indices`` restricts the
    run to a subset of trials (each trial has its own seed stream, so subsets
    computed in parallel reproduce the serial results exactly).

    With ``known_covariance`` the locals share one fixed covariance and only
    the mean is estimated; the asymptotic ordering between the estimators then
    shows already at small n, because no covariance block amplifies the
    ratio-weight variance.
    """
    rows = []
    for trial in (range(n_trials) if trial_indices is None else trial_indices):
        models = _draw_asymptotic_local_models(
            stream_rng(seed, trial, 0), n_machines, dim, big_n, known_covariance=known_covariance
        )
        reference = exact_kl_optimum_gaussian(models)
        for i_n, n in enumerate(n_grid):
            rng = stream_rng(seed, trial, 1 + i_n)
            boots = _draw_bootstrap(models, n, rng)
            if known_covariance:
                fits = _known_cov_fits(models, boots, methods)
            else:
                refits = _refit(models, boots, rng)
                naive = _pooled_fit(models, boots, rng)
                fits = {}
                if "kl-naive" in methods:
                    fits["kl-naive"] = naive
                if "kl-control" in methods:
                    fits["kl-control"] = _kl_control_core(models, boots, refits, naive)
                if "kl-weighted" in methods:
                    fits["kl-weighted"] = _kl_weighted_core(models, boots, refits, rng)
                if "linear" in methods:
                    fits["linear"] = linear_average(models).model
            for method, fit in fits.items():
                rows.append({
                    "method": method,
                    "d": n_machines,
                    "n": int(n),
                    "trial": trial,
                    "mse": gaussian_mse(fit, reference),
                })
    return rows


def fit_loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)[0])
