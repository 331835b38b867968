import numpy as np
import pytest

from steinkit.errors import InvalidApproximationError, SingularTransformError
from steinkit.kernels import KernelSpec
from steinkit.models import ContinuousTarget, gaussian_logpdf, gaussian_sampler, gaussian_target
from steinkit.rngs import stream_rng
from steinkit.steinis import (
    WeightedSample,
    _follower_log_dets,
    leader_velocity_field,
    logdet_exact,
    logdet_firstorder,
    path_integration_logZ,
    run_steinis,
    self_normalized_expectation,
)
from steinkit.svgd import StepSchedule

KERN = KernelSpec(bandwidth=1.0)


def det_cofactor(m: np.ndarray) -> float:
    """Determinant by explicit cofactor expansion (exponential; d <= 5 only)."""
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1.0) ** j * m[0, j] * det_cofactor(minor)
    return total


class TestVelocityField:
    def test_single_leader_at_mode_is_stationary(self):
        t = gaussian_target(np.zeros(1), 1.0)
        field = leader_velocity_field(np.zeros((1, 1)), t, KERN)
        assert np.array_equal(field(np.zeros((1, 1))), np.zeros((1, 1)))

    def test_jacobian_matches_finite_differences(self):
        rng = stream_rng(51, 0)
        t = gaussian_target(np.zeros(2), 1.5)
        leaders = rng.standard_normal((12, 2))
        field = leader_velocity_field(leaders, t, KERN)
        eps = 1e-6
        for _ in range(5):
            y = rng.standard_normal(2)
            _, jac = field(y[None, :], with_jacobian=True)
            fd = np.empty((2, 2))
            for e_idx in range(2):
                step = np.zeros(2)
                step[e_idx] = eps
                fd[:, e_idx] = (field((y + step)[None, :])[0] - field((y - step)[None, :])[0]) / (2 * eps)
            assert np.linalg.norm(jac[0] - fd) <= 1e-5 * max(np.linalg.norm(fd), 1.0)

    def test_leader_permutation_invariance(self):
        rng = stream_rng(51, 1)
        t = gaussian_target(np.zeros(2), 1.0)
        leaders = rng.standard_normal((9, 2))
        y = rng.standard_normal((4, 2))
        f1 = leader_velocity_field(leaders, t, KERN)
        f2 = leader_velocity_field(leaders[rng.permutation(9)], t, KERN)
        p1, j1 = f1(y, with_jacobian=True)
        p2, j2 = f2(y, with_jacobian=True)
        assert np.allclose(p1, p2, atol=1e-12)
        assert np.allclose(j1, j2, atol=1e-12)


class TestLogDet:
    def test_zero_matrix(self):
        assert logdet_exact(np.zeros((3, 3)), 0.2) == 0.0

    def test_diagonal_example(self):
        val = logdet_exact(np.diag([2.0, 3.0]), 0.1)
        assert val == pytest.approx(np.log(1.2 * 1.3), rel=1e-12)

    def test_against_cofactor_oracle(self):
        rng = stream_rng(52, 0)
        for _ in range(10):
            a = rng.standard_normal((5, 5))
            exact = logdet_exact(a, 0.05)
            oracle = np.log(abs(det_cofactor(np.eye(5) + 0.05 * a)))
            assert exact == pytest.approx(oracle, abs=1e-10)

    def test_singular_raises(self):
        with pytest.raises(SingularTransformError):
            logdet_exact(-np.eye(2), 1.0)

    def test_first_order_exact_on_diagonal(self):
        a = np.diag([1.0, -2.0, 0.5])
        assert logdet_firstorder(a, 0.1) == pytest.approx(logdet_exact(a, 0.1), rel=1e-12)

    def test_first_order_2x2_analytic(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert logdet_firstorder(a, 0.1) == 0.0
        assert logdet_exact(a, 0.1) == pytest.approx(np.log(1 - 0.01), rel=1e-12)

    def test_richardson_error_ratio(self):
        # first-order error shrinks ~4x when eps halves
        rng = stream_rng(52, 1)
        errs_full, errs_half = [], []
        for _ in range(50):
            a = rng.standard_normal((4, 4))
            eps = 0.1 / np.max(np.abs(a).sum(axis=1))
            errs_full.append(abs(logdet_firstorder(a, eps) - logdet_exact(a, eps)))
            errs_half.append(abs(logdet_firstorder(a, eps / 2) - logdet_exact(a, eps / 2)))
        ratio = np.mean(errs_full) / np.mean(errs_half)
        assert 3.5 <= ratio <= 4.5

    def test_first_order_preconditions(self):
        a = np.full((2, 2), 10.0)
        with pytest.raises(InvalidApproximationError):
            logdet_firstorder(a, 0.2)
        b = np.diag([-20.0, 0.0])
        with pytest.raises(InvalidApproximationError):
            logdet_firstorder(b, 0.1)

    def test_auto_mode_diagonal_guard(self):
        # eps <= 0.1 would select first-order, but a diagonal factor below 0.5
        # must force the exact path (visible through the off-diagonal terms)
        jac = np.array([[-6.0, 3.0], [2.0, 0.0]])[None, :, :]
        eps = 0.1
        out = _follower_log_dets(jac, eps, "auto")
        exact = np.linalg.slogdet(np.eye(2) + eps * jac[0])[1]
        first = np.log1p(eps * np.diag(jac[0])).sum()
        assert out[0] == pytest.approx(exact, rel=1e-12)
        assert abs(out[0] - first) > 1e-3

    def test_auto_mode_uses_first_order_when_safe(self):
        jac = np.array([[0.5, 0.3], [0.2, -0.4]])[None, :, :]
        out = _follower_log_dets(jac, 0.05, "auto")
        first = np.log1p(0.05 * np.diag(jac[0])).sum()
        assert out[0] == pytest.approx(first, rel=1e-12)

    def test_fold_returns_none(self):
        jac = np.array([[[-1.0]]])
        assert _follower_log_dets(jac, 2.0, "exact") is None
        assert _follower_log_dets(jac, 2.0, "auto") is None


def _fixed_sampler(*arrays):
    queue = [np.array(a, dtype=float) for a in arrays]

    def sampler(rng, n):
        out = queue.pop(0)
        assert out.shape[0] == n
        return out.copy()

    return sampler


class TestRunSteinIS:
    def test_zero_iterations_is_plain_importance_sampling(self):
        t = gaussian_target(np.zeros(1), 1.0)
        q0l = gaussian_logpdf(np.zeros(1), 2.0)
        rng = stream_rng(53, 0)
        res = run_steinis(t, gaussian_sampler(np.zeros(1), 2.0), q0l, 20, 30, 0, KERN,
                          StepSchedule(mode="constant", eps=0.1), rng)
        expected = t.log_density(res.sample.positions) - q0l(res.sample.positions)
        assert np.allclose(res.sample.log_weights, expected, atol=1e-12)

    def test_followers_conditionally_iid(self):
        # same leader draw, followers run whole vs in halves: bit-identical
        rng = stream_rng(53, 1)
        leaders = rng.standard_normal((25, 1)) * 1.4
        followers = rng.standard_normal((40, 1)) * 1.4
        t = gaussian_target(np.zeros(1), 1.0)
        q0l = gaussian_logpdf(np.zeros(1), 2.0)
        sched = StepSchedule(mode="constant", eps=0.05)

        def run(f_arr):
            return run_steinis(t, _fixed_sampler(leaders, f_arr), q0l, 25, f_arr.shape[0], 30,
                               KERN, sched, stream_rng(0, 0))

        whole = run(followers)
        first = run(followers[:17])
        second = run(followers[17:])
        assert np.array_equal(whole.sample.positions, np.vstack([first.sample.positions, second.sample.positions]))
        assert np.array_equal(whole.ensemble.follower_log_q,
                              np.concatenate([first.ensemble.follower_log_q, second.ensemble.follower_log_q]))
        assert np.array_equal(whole.ensemble.leaders, first.ensemble.leaders)

    def test_density_tracking_integrates_to_one(self):
        # followers seeded on a dense grid: exp(log q) after K steps still
        # integrates to 1 by trapezoid quadrature over the moved grid
        t = gaussian_target(np.zeros(1), 1.0)
        q0l = gaussian_logpdf(np.zeros(1), 2.0)
        rng = stream_rng(53, 2)
        leaders = rng.standard_normal((40, 1)) * np.sqrt(2.0)
        grid = np.linspace(-10.0, 10.0, 3001)[:, None]
        res = run_steinis(t, _fixed_sampler(leaders, grid), q0l, 40, grid.shape[0], 50,
                          KERN, StepSchedule(mode="constant", eps=0.05), stream_rng(0, 0),
                          det_mode="exact")
        positions = res.sample.positions[:, 0]
        assert np.all(np.diff(positions) > 0)  # map stayed monotone
        mass = np.trapezoid(np.exp(res.ensemble.follower_log_q), positions)
        assert mass == pytest.approx(1.0, abs=0.02)

    def test_z_hat_unbiased_1d_gaussian(self):
        # p-bar = exp(-x^2/2): Z = sqrt(2 pi)
        t = gaussian_target(np.zeros(1), 1.0)
        q0s = gaussian_sampler(np.zeros(1), 2.0)
        q0l = gaussian_logpdf(np.zeros(1), 2.0)
        zs = [
            run_steinis(t, q0s, q0l, 50, 50, 100, KernelSpec(),
                        StepSchedule(mode="decay", eps=0.3), stream_rng(53, 10 + s)).z_hat
            for s in range(30)
        ]
        zs = np.array(zs)
        true_z = np.sqrt(2 * np.pi)
        assert abs(zs.mean() - true_z) < 3 * zs.std(ddof=1) / np.sqrt(len(zs))

    def test_adam_schedule_rejected(self):
        t = gaussian_target(np.zeros(1), 1.0)
        with pytest.raises(ValueError):
            run_steinis(t, gaussian_sampler(np.zeros(1), 1.0), gaussian_logpdf(np.zeros(1), 1.0),
                        5, 5, 2, KERN, StepSchedule(mode="adam"), stream_rng(0, 0))


class TestSelfNormalizedExpectation:
    def test_uniform_weights_are_plain_mean(self):
        x = stream_rng(54, 0).standard_normal((20, 2))
        s = WeightedSample(positions=x, log_weights=np.zeros(20))
        assert np.allclose(self_normalized_expectation(s, lambda p: p), x.mean(axis=0), atol=1e-14)

    def test_constant_function_is_exact(self):
        x = stream_rng(54, 1).standard_normal((15, 1))
        s = WeightedSample(positions=x, log_weights=stream_rng(54, 2).normal(size=15))
        val = self_normalized_expectation(s, lambda p: np.full(p.shape[0], 3.25))
        assert val == pytest.approx(3.25, rel=1e-12)

    def test_concentrated_weights_pick_one_particle(self):
        x = np.arange(10, dtype=float)[:, None]
        log_w = np.full(10, -1e6)
        log_w[4] = 0.0
        s = WeightedSample(positions=x, log_weights=log_w)
        assert self_normalized_expectation(s, lambda p: p[:, 0]) == pytest.approx(4.0)


class TestPathIntegration:
    def test_identical_distributions_give_zero(self):
        # p-bar equals the normalized q0: log Z = 0
        q0l = gaussian_logpdf(np.zeros(1), 1.0)
        t = ContinuousTarget(dim=1, log_density=q0l, score=gaussian_target(np.zeros(1), 1.0).score)
        val = path_integration_logZ(t, gaussian_sampler(np.zeros(1), 1.0), q0l, 200, 200,
                                    KernelSpec(bandwidth=1.0), StepSchedule(mode="constant", eps=0.05),
                                    100000, stream_rng(55, 0))
        assert abs(val) < 0.05

    def test_scaling_density_shifts_estimate(self):
        t = gaussian_target(np.zeros(1), 1.0)
        scaled = ContinuousTarget(dim=1, log_density=lambda x: t.log_density(x) + 2.5, score=t.score)
        kwargs = dict(q0_sampler=gaussian_sampler(np.zeros(1), 2.0), q0_logpdf=gaussian_logpdf(np.zeros(1), 2.0),
                      n=100, iters=100, kernel=KernelSpec(bandwidth=1.0),
                      schedule=StepSchedule(mode="constant", eps=0.05), m0=10000)
        a = path_integration_logZ(t, rng=stream_rng(55, 1), **kwargs)
        b = path_integration_logZ(scaled, rng=stream_rng(55, 1), **kwargs)
        assert b - a == pytest.approx(2.5, abs=1e-9)
