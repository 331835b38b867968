"""Target distributions: continuous and discrete unnormalized models.

Continuous targets expose ``log_density`` (the unnormalized log p-bar) and,
when available analytically, ``score`` (gradient of log density, independent
of the normalization constant).  Discrete targets expose ``log_mass`` on a
product alphabet.  All callables accept either a single point ``(d,)`` or a
batch ``(n, d)`` and vectorize over rows.

Also houses the exhaustive-enumeration and finite-difference oracles used by
the test suite and the ``oracle`` CLI subcommand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .errors import StateSpaceTooLargeError

BRUTE_FORCE_CAP = 2 ** 20


def _rowwise(fn):
    """Lift a batch function ((n,d) -> (n,...)) to accept single vectors."""

    def wrapped(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return fn(x[None, :])[0]
        return fn(x)

    return wrapped


@dataclass(frozen=True)
class ContinuousTarget:
    """Unnormalized continuous density log p-bar with optional analytic score."""

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    score: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class DiscreteTarget:
    """Unnormalized mass on a product space with K states per coordinate.

    ``relaxed_log_mass``/``relaxed_score`` evaluate the same energy on real
    vectors when the model's algebra extends off the lattice (Ising, RBM);
    they power the smooth surrogate constructions.
    """

    dims: int
    alphabet: tuple[float, ...]
    log_mass: Callable[[np.ndarray], np.ndarray]
    relaxed_log_mass: Optional[Callable[[np.ndarray], np.ndarray]] = None
    relaxed_score: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if len(self.alphabet) < 2:
            raise ValueError("alphabet needs at least two states per coordinate")


@dataclass(frozen=True)
class GaussBernoulliRBMParams:
    """Coupling B (d x d'), visible bias b (d,), hidden bias c (d',)."""

    B: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        B, b, c = (np.asarray(a, dtype=float) for a in (self.B, self.b, self.c))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if B.ndim != 2 or b.shape != (B.shape[0],) or c.shape != (B.shape[1],):
            raise ValueError("inconsistent RBM parameter shapes")
        if not all(np.all(np.isfinite(a)) for a in (B, b, c)):
            raise ValueError("RBM parameters must be finite")


@dataclass(frozen=True)
class IsingParams:
    """Pairwise couplings on edges (i, j, theta_ij) over d binary spins."""

    dims: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        edges = tuple((int(i), int(j), float(t)) for i, j, t in self.edges)
        object.__setattr__(self, "edges", edges)
        for i, j, t in edges:
            if not (0 <= i < j < self.dims):
                raise ValueError(f"edge ({i}, {j}) violates 0 <= i < j < dims")
            if not np.isfinite(t):
                raise ValueError("edge coupling must be finite")

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric matrix M with M[i, j] = M[j, i] = theta_ij, zero diagonal."""
        m = np.zeros((self.dims, self.dims))
        for i, j, t in self.edges:
            m[i, j] += t
            m[j, i] += t
        return m


@dataclass(frozen=True)
class BernoulliRBMParams:
    """Weights W (d x M) with column k coupling visible units to hidden unit k."""

    W: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        W, b, c = (np.asarray(a, dtype=float) for a in (self.W, self.b, self.c))
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if W.ndim != 2 or b.shape != (W.shape[0],) or c.shape != (W.shape[1],):
            raise ValueError("inconsistent RBM parameter shapes")


# ---------------------------------------------------------------------------
# Continuous targets
# ---------------------------------------------------------------------------

def gaussian_target(mu: np.ndarray, sigma: float) -> ContinuousTarget:
    """Isotropic Gaussian N(mu, sigma * I); ``sigma`` scales the identity
    covariance (it is the per-coordinate variance, not a standard deviation)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if not sigma > 0:
        raise ValueError("sigma must be > 0")

    def logp(x):
        return -np.sum((x - mu) ** 2, axis=1) / (2.0 * sigma)

    def score(x):
        return -(x - mu) / sigma

    return ContinuousTarget(dim=mu.size, log_density=_rowwise(logp), score=_rowwise(score))


def gmm_target(weights: np.ndarray, means: Sequence[np.ndarray], sigma: float) -> ContinuousTarget:
    """Mixture of isotropic Gaussians with shared per-coordinate variance sigma."""
    weights = np.asarray(weights, dtype=float)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if weights.size == 0 or means.shape[0] == 0:
        raise ValueError("mixture must have at least one component")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to 1")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    logw = np.log(np.maximum(weights, 1e-300))

    def component_logits(x):
        # (n, m): log w_i - ||x - mu_i||^2 / (2 sigma), shared constants dropped
        d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        return logw[None, :] - d2 / (2.0 * sigma)

    def logp(x):
        return logsumexp(component_logits(x), axis=1)

    def score(x):
        logits = component_logits(x)
        r = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        return np.einsum("nm,nmd->nd", r, means[None, :, :] - x[:, None, :]) / sigma

    return ContinuousTarget(dim=means.shape[1], log_density=_rowwise(logp), score=_rowwise(score))


def _log2cosh(t: np.ndarray) -> np.ndarray:
    # log(e^t + e^-t), safe for |t| >> 30
    at = np.abs(t)
    return at + np.log1p(np.exp(-2.0 * at))


def gauss_bernoulli_rbm_target(params: GaussBernoulliRBMParams) -> ContinuousTarget:
    """Marginal density of the Gauss-Bernoulli RBM over its visible units.

    log p-bar(x) = b'x - ||x||^2/2 + sum_i log(2 cosh(phi_i)), phi = B'x + c,
    with score b - x + B tanh(phi).
    """
    B, b, c = params.B, params.b, params.c

    def logp(x):
        phi = x @ B + c
        return x @ b - 0.5 * np.einsum("nd,nd->n", x, x) + _log2cosh(phi).sum(axis=1)

    def score(x):
        phi = x @ B + c
        return b - x + np.tanh(phi) @ B.T

    return ContinuousTarget(dim=b.size, log_density=_rowwise(logp), score=_rowwise(score))


def gauss_bernoulli_rbm_mixture(params: GaussBernoulliRBMParams):
    """Exact mixture form of the GB-RBM: enumerates all 2^d' hidden states.

    Returns ``(component_means, log_weights)`` for p(x) = sum_h pi_h N(x; mu_h, I)
    with mu_h = b + B h and log pi_h = c'h + ||mu_h||^2/2 (unnormalized).
    """
    d_hidden = params.c.size
    if 2 ** d_hidden > BRUTE_FORCE_CAP:
        raise StateSpaceTooLargeError(f"2^{d_hidden} hidden states exceed the enumeration cap")
    hs = enumerate_states((-1.0, 1.0), d_hidden)
    mus = params.b[None, :] + hs @ params.B.T
    logw = hs @ params.c + 0.5 * np.einsum("nd,nd->n", mus, mus)
    return mus, logw


def sample_gauss_bernoulli_rbm(rng: np.random.Generator, n: int, params: GaussBernoulliRBMParams) -> np.ndarray:
    mus, logw = gauss_bernoulli_rbm_mixture(params)
    p = np.exp(logw - logsumexp(logw))
    p /= p.sum()
    idx = rng.choice(len(p), size=n, p=p)
    return mus[idx] + rng.standard_normal((n, params.b.size))


# ---------------------------------------------------------------------------
# Discrete targets
# ---------------------------------------------------------------------------

def ising_target(params: IsingParams) -> DiscreteTarget:
    """Ising model p(z) proportional to exp(sum_{(i,j) in E} theta_ij z_i z_j), z in {-1,+1}^d."""
    m = params.coupling_matrix()

    def log_mass(z):
        # 0.5 z'Mz double-counts each edge once, matching the single-sum energy
        return 0.5 * np.einsum("nd,de,ne->n", z, m, z)

    def relaxed_score(x):
        return x @ m

    return DiscreteTarget(
        dims=params.dims,
        alphabet=(-1.0, 1.0),
        log_mass=_rowwise(log_mass),
        relaxed_log_mass=_rowwise(log_mass),
        relaxed_score=_rowwise(relaxed_score),
    )


def grid_ising(rows: int, cols: int, theta: float) -> IsingParams:
    """Uniform-coupling Ising model on a rows x cols lattice (4-neighbour)."""
    edges = []
    for r in range(rows):
        for col in range(cols):
            i = r * cols + col
            if col + 1 < cols:
                edges.append((i, i + 1, theta))
            if r + 1 < rows:
                edges.append((i, i + cols, theta))
    return IsingParams(dims=rows * cols, edges=tuple(edges))


def bernoulli_rbm_target(params: BernoulliRBMParams) -> DiscreteTarget:
    """Bernoulli RBM marginal mass: log m(z) = z'b + sum_k softplus(W'z + c)_k.

    The hidden units take values in {-1,+1} but the free energy keeps the
    1 + exp(.) form (rather than 2 cosh); this asymmetric convention is kept
    deliberately and documented here.
    """
    W, b, c = params.W, params.b, params.c

    def log_mass(z):
        phi = z @ W + c
        return z @ b + np.logaddexp(0.0, phi).sum(axis=1)

    def relaxed_score(x):
        phi = x @ W + c
        return b + expit(phi) @ W.T

    return DiscreteTarget(
        dims=b.size,
        alphabet=(-1.0, 1.0),
        log_mass=_rowwise(log_mass),
        relaxed_log_mass=_rowwise(log_mass),
        relaxed_score=_rowwise(relaxed_score),
    )


def random_gauss_bernoulli_rbm(rng: np.random.Generator, dim: int, hidden: int) -> GaussBernoulliRBMParams:
    """b, c standard normal; B entries uniform on {+0.5, -0.5}."""
    return GaussBernoulliRBMParams(
        B=rng.choice([-0.5, 0.5], size=(dim, hidden)),
        b=rng.standard_normal(dim),
        c=rng.standard_normal(hidden),
    )


def random_bernoulli_rbm(rng: np.random.Generator, dims: int, hidden: int, w_scale: float = 0.05) -> BernoulliRBMParams:
    return BernoulliRBMParams(
        W=rng.normal(0.0, w_scale, size=(dims, hidden)),
        b=rng.standard_normal(dims),
        c=rng.standard_normal(hidden),
    )


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def enumerate_states(alphabet: Sequence[float], dims: int) -> np.ndarray:
    """All K^dims states in lexicographic order (first coordinate most significant)."""
    alphabet = np.asarray(alphabet, dtype=float)
    k = alphabet.size
    total = k ** dims
    if total > BRUTE_FORCE_CAP:
        raise StateSpaceTooLargeError(f"{k}^{dims} states exceed the enumeration cap {BRUTE_FORCE_CAP}")
    digits = np.unravel_index(np.arange(total), (k,) * dims)
    return alphabet[np.stack(digits, axis=1)]


def brute_force_distribution(target: DiscreteTarget) -> np.ndarray:
    """Exact normalized probabilities over all states, lexicographic order."""
    states = enumerate_states(target.alphabet, target.dims)
    logm = np.empty(states.shape[0])
    chunk = 1 << 16
    for start in range(0, states.shape[0], chunk):
        logm[start:start + chunk] = target.log_mass(states[start:start + chunk])
    p = np.exp(logm - logsumexp(logm))
    return p / p.sum()


def sample_discrete_target(rng: np.random.Generator, n: int, target: DiscreteTarget) -> np.ndarray:
    """Exact i.i.d. samples via full enumeration (oracle-quality, small models only)."""
    states = enumerate_states(target.alphabet, target.dims)
    probs = brute_force_distribution(target)
    return states[rng.choice(states.shape[0], size=n, p=probs)]


def conditional_probs(target: DiscreteTarget, state: np.ndarray, coord: int) -> np.ndarray:
    """Exact conditional p(z_coord = a | rest) over the alphabet, from log-mass differences."""
    k = len(target.alphabet)
    cand = np.repeat(state[None, :], k, axis=0)
    cand[:, coord] = target.alphabet
    logm = target.log_mass(cand)
    p = np.exp(logm - logm.max())
    return p / p.sum()


def gibbs_sweep(target: DiscreteTarget, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One systematic Gibbs sweep; resamples each coordinate in order, in place."""
    for coord in range(target.dims):
        p = conditional_probs(target, state, coord)
        state[coord] = target.alphabet[rng.choice(len(p), p=p)]
    return state


def finite_difference_score(target: ContinuousTarget, x: np.ndarray, eps: float) -> np.ndarray:
    """Central-difference gradient of ``target.log_density`` at a single point."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x = np.asarray(x, dtype=float)
    d = x.size
    shifts = np.repeat(x[None, :], 2 * d, axis=0)
    idx = np.arange(d)
    shifts[2 * idx, idx] += eps
    shifts[2 * idx + 1, idx] -= eps
    vals = target.log_density(shifts)
    return (vals[0::2] - vals[1::2]) / (2.0 * eps)


# ---------------------------------------------------------------------------
# Exact samplers for simple targets (experiment plumbing)
# ---------------------------------------------------------------------------

def gaussian_sampler(mu: np.ndarray, sigma: float) -> Callable[[np.random.Generator, int], np.ndarray]:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return mu + np.sqrt(sigma) * rng.standard_normal((n, mu.size))

    return sample


def gaussian_logpdf(mu: np.ndarray, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Exact (normalized) log pdf of N(mu, sigma*I), for importance-sampling bases."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    d = mu.size
    const = -0.5 * d * np.log(2.0 * np.pi * sigma)

    def logpdf(x):
        return const - np.sum((x - mu) ** 2, axis=1) / (2.0 * sigma)

    return _rowwise(logpdf)


def sample_gmm(rng: np.random.Generator, n: int, weights: np.ndarray, means: np.ndarray, sigma: float) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    idx = rng.choice(means.shape[0], size=n, p=weights / weights.sum())
    return means[idx] + np.sqrt(sigma) * rng.standard_normal((n, means.shape[1]))
