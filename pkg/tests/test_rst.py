"""Losses, regularizers, gradients, and the two-stage training pipeline."""

import inspect
import math

import numpy as np
import pytest

from rstsim.estimators import UnlabeledSet, sample_mixture
from rstsim.gaussian import LabeledSet, canonical_model, sample_labeled
from rstsim.rst import (
    LogisticModel,
    RstConfig,
    adversarial_reg_exact,
    adversarial_reg_pg,
    kl_bernoulli,
    robust_objective,
    rst_train,
    smoothed_predict_exact,
    stability_reg,
    standard_loss,
    standard_train,
)
from rstsim.statkit import q_function, split_stream


def fd_gradient(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for j in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        g[j] = (f(up) - f(dn)) / (2 * h)
    return g


def assert_close_grad(analytic, numeric, rel):
    denom = max(float(np.sqrt(np.sum(analytic**2))), 1e-12)
    gap = float(np.sqrt(np.sum((analytic - numeric) ** 2)))
    assert gap / denom <= rel, f"gradient gap {gap/denom:.3e} > {rel}"


class TestStandardLoss:
    def test_zero_score_is_ln2(self):
        model = LogisticModel(theta=np.array([1.0, -2.0]))
        loss, _ = standard_loss(model, np.array([2.0, 1.0]), 1)
        assert loss == pytest.approx(math.log(2.0), rel=1e-15)

    def test_saturated_margin_no_overflow(self):
        model = LogisticModel(theta=np.array([50.0]))
        loss, _ = standard_loss(model, np.array([1.0]), 1)
        assert 0.0 <= loss <= 1e-20
        loss_bad, _ = standard_loss(model, np.array([-20.0]), 1)
        assert loss_bad == pytest.approx(1000.0, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        stream = split_stream(101, 0)
        for trial in range(10):
            theta = stream.standard_normal(5)
            x = stream.standard_normal(5)
            y = 1 if stream.integers(0, 2) else -1
            _, grad = standard_loss(LogisticModel(theta=theta), x, y)
            num = fd_gradient(lambda t: standard_loss(LogisticModel(theta=t), x, y)[0],
                              theta)
            assert_close_grad(grad, num, 1e-6)

    def test_rejects_bad_label(self):
        model = LogisticModel(theta=np.ones(2))
        with pytest.raises(ValueError):
            standard_loss(model, np.ones(2), 0)


class TestKlBernoulli:
    def test_equal_is_zero(self):
        assert kl_bernoulli(0.5, 0.5) == 0.0
        assert kl_bernoulli(0.137, 0.137) == 0.0

    def test_symmetric_around_half(self):
        for q in (0.1, 0.25, 0.77):
            assert kl_bernoulli(0.5, q) == pytest.approx(kl_bernoulli(0.5, 1 - q),
                                                         rel=1e-14)

    def test_frozen_value(self):
        # 0.9 ln 9 + 0.1 ln(1/9) = 0.8 ln 9
        assert kl_bernoulli(0.9, 0.1) == pytest.approx(0.8 * math.log(9.0),
                                                       rel=1e-13)

    def test_nonnegative(self):
        stream = split_stream(102, 0)
        for _ in range(200):
            p, q = stream.uniform(0, 1, size=2)
            assert kl_bernoulli(p, q) >= 0.0

    def test_clamped_at_saturation(self):
        v = kl_bernoulli(0.0, 1.0)
        assert math.isfinite(v) and v > 20.0


class TestAdversarialExact:
    def test_zero_epsilon(self):
        model = LogisticModel(theta=np.array([1.0, 2.0]))
        x = np.array([0.3, -0.4])
        val, worst = adversarial_reg_exact(model, x, 0.0)
        assert val == 0.0
        assert np.array_equal(worst, x)

    def test_tie_picks_negative_endpoint(self):
        # theta^T x = 0 makes both endpoints equally bad
        model = LogisticModel(theta=np.array([1.0, -3.0]))
        x = np.array([3.0, 1.0])
        eps = 0.2
        val, worst = adversarial_reg_exact(model, x, eps)
        assert val > 0.0
        assert np.array_equal(worst, x - eps * np.sign(model.theta))

    def test_value_is_kl_at_endpoint(self):
        stream = split_stream(103, 0)
        for _ in range(10):
            theta = stream.standard_normal(4)
            x = stream.standard_normal(4)
            model = LogisticModel(theta=theta)
            val, worst = adversarial_reg_exact(model, x, 0.3)
            p = 1 / (1 + math.exp(-float(theta @ x)))
            q = 1 / (1 + math.exp(-float(theta @ worst)))
            assert val == pytest.approx(kl_bernoulli(p, q), rel=1e-12)
            assert np.all(np.abs(worst - x) <= 0.3 + 1e-15)


class TestAdversarialPG:
    def test_one_big_step_reaches_corner(self):
        stream = split_stream(104, 0)
        theta = np.array([1.0, -2.0, 0.5])
        x = np.array([0.4, 0.1, -0.2])
        model = LogisticModel(theta=theta)
        eps = 0.25
        val, x_pg = adversarial_reg_pg(model, x, eps, 1, 10 * eps,
                                       split_stream(104, 1))
        assert np.all(np.abs(np.abs(x_pg - x) - eps) < 1e-15)
        exact, _ = adversarial_reg_exact(model, x, eps)
        assert val == pytest.approx(exact, rel=1e-10)
        del stream

    def test_never_exceeds_exact(self):
        stream = split_stream(105, 0)
        for t in range(20):
            theta = stream.standard_normal(6)
            x = stream.standard_normal(6)
            model = LogisticModel(theta=theta)
            exact, _ = adversarial_reg_exact(model, x, 0.2)
            approx, _ = adversarial_reg_pg(model, x, 0.2, 5, 0.01,
                                           split_stream(105, 10 + t))
            assert approx <= exact + 1e-15

    def test_long_run_matches_exact(self):
        stream = split_stream(106, 0)
        for t in range(20):
            theta = stream.standard_normal(8) * 2
            x = stream.standard_normal(8)
            model = LogisticModel(theta=theta)
            eps = 0.15
            exact, _ = adversarial_reg_exact(model, x, eps)
            approx, _ = adversarial_reg_pg(model, x, eps, 200, eps / 10,
                                           split_stream(106, 10 + t))
            assert abs(approx - exact) <= 1e-6 * max(exact, 1e-12)

    def test_deterministic(self):
        theta = np.array([0.5, 1.5])
        model = LogisticModel(theta=theta)
        x = np.array([1.0, -1.0])
        a = adversarial_reg_pg(model, x, 0.3, 20, 0.03, split_stream(107, 0))
        b = adversarial_reg_pg(model, x, 0.3, 20, 0.03, split_stream(107, 0))
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])

    def test_rejects_bad_arguments(self):
        model = LogisticModel(theta=np.ones(2))
        with pytest.raises(ValueError):
            adversarial_reg_pg(model, np.ones(2), -0.1, 5, 0.01, split_stream(108, 0))
        with pytest.raises(ValueError):
            adversarial_reg_pg(model, np.ones(2), 0.1, 0, 0.01, split_stream(108, 1))
        with pytest.raises(ValueError):
            adversarial_reg_pg(model, np.ones(2), 0.1, 5, 0.0, split_stream(108, 2))


class TestStabilityReg:
    def test_zero_noise_is_zero(self):
        model = LogisticModel(theta=np.array([1.0, 2.0]))
        val, grad = stability_reg(model, np.array([0.5, -0.5]), 0.0, 10,
                                  split_stream(111, 0))
        assert val == 0.0
        assert np.array_equal(grad, np.zeros(2))

    def test_zero_theta_is_zero(self):
        model = LogisticModel(theta=np.zeros(3))
        val, _ = stability_reg(model, np.ones(3), 1.0, 50, split_stream(111, 1))
        assert val == 0.0

    def test_one_d_quadrature_oracle(self):
        from scipy.integrate import quad

        def integrand(z):
            q = 1 / (1 + math.exp(-z))
            return kl_bernoulli(0.5, q) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi)

        target, quad_err = quad(integrand, -12, 12)
        assert quad_err < 1e-10
        model = LogisticModel(theta=np.array([1.0]))
        n = 1_000_000
        val, _ = stability_reg(model, np.array([0.0]), 1.0, n, split_stream(112, 0))
        # crude se bound: per-sample variance of KL(0.5 || sigmoid(z)) is finite
        draws = split_stream(112, 0).standard_normal(n)
        sd = float(np.std([kl_bernoulli(0.5, 1 / (1 + math.exp(-z)))
                           for z in draws[:20000]], ddof=1))
        assert abs(val - target) <= 3 * sd / math.sqrt(n)

    def test_gradient_matches_finite_differences(self):
        x = np.array([0.3, -0.7, 0.2])
        for t in range(5):
            theta = split_stream(113, t).standard_normal(3)

            def f(th):
                return stability_reg(LogisticModel(theta=th), x, 0.8, 40,
                                     split_stream(114, t))[0]

            _, grad = stability_reg(LogisticModel(theta=theta), x, 0.8, 40,
                                    split_stream(114, t))
            assert_close_grad(grad, fd_gradient(f, theta), 1e-5)


class TestRobustObjective:
    def _data(self, seed, n=8, d=5):
        stream = split_stream(seed, 0)
        xs = stream.standard_normal((n, d))
        ys = 2.0 * stream.integers(0, 2, size=n) - 1.0
        weights = np.concatenate([np.ones(n // 2), np.full(n - n // 2, 0.7)])
        theta = stream.standard_normal(d)
        return theta, xs, ys, weights

    def test_exact_gradient_matches_fd(self):
        cfg = RstConfig(beta=2.5, epsilon=0.3, reg_kind="adversarial_exact")
        for seed in (120, 121, 122):
            theta, xs, ys, w = self._data(seed)
            val, grad = robust_objective(theta, xs, ys, w, cfg)
            assert val > 0
            num = fd_gradient(lambda t: robust_objective(t, xs, ys, w, cfg)[0], theta)
            assert_close_grad(grad, num, 1e-5)

    def test_pg_gradient_matches_fd(self):
        cfg = RstConfig(beta=1.5, epsilon=0.25, reg_kind="adversarial_pg",
                        pg_steps=40, pg_step_size=0.05)
        for seed in (123, 124):
            theta, xs, ys, w = self._data(seed)

            def f(t):
                return robust_objective(t, xs, ys, w, cfg, split_stream(500, seed))[0]

            _, grad = robust_objective(theta, xs, ys, w, cfg, split_stream(500, seed))
            assert_close_grad(grad, fd_gradient(f, theta), 1e-5)

    def test_stability_gradient_matches_fd(self):
        cfg = RstConfig(beta=2.0, noise_sigma=0.9, noise_samples=7,
                        reg_kind="stability")
        for seed in (125, 126):
            theta, xs, ys, w = self._data(seed)

            def f(t):
                return robust_objective(t, xs, ys, w, cfg, split_stream(501, seed))[0]

            _, grad = robust_objective(theta, xs, ys, w, cfg, split_stream(501, seed))
            assert_close_grad(grad, fd_gradient(f, theta), 1e-5)

    def test_weight_scaling_invariance(self):
        cfg = RstConfig(beta=1.0, epsilon=0.2)
        theta, xs, ys, w = self._data(127)
        v1, g1 = robust_objective(theta, xs, ys, w, cfg)
        v2, g2 = robust_objective(theta, xs, ys, 3.0 * w, cfg)
        assert v1 == pytest.approx(v2, rel=1e-14)
        assert np.allclose(g1, g2, rtol=1e-13, atol=0)

    def test_beta_zero_is_plain_logistic(self):
        cfg = RstConfig(beta=0.0, epsilon=0.4)
        theta, xs, ys, w = self._data(128)
        val, _ = robust_objective(theta, xs, ys, np.ones_like(w), cfg)
        direct = float(np.mean(np.logaddexp(0.0, -ys * (xs @ theta))))
        assert val == pytest.approx(direct, rel=1e-14)


class TestTraining:
    def test_standard_train_separable_data(self):
        # big-margin noiseless points: training error must reach 0
        d = 6
        ys = np.array([1, -1, 1, -1, 1, -1, 1, -1])
        xs = ys[:, None] * np.full(d, 3.0)
        data = LabeledSet(xs=xs, ys=ys)
        model = standard_train(data, 0.5, 200, 0, split_stream(131, 0))
        preds = np.where(xs @ model.theta >= 0, 1, -1)
        assert np.array_equal(preds, ys)

    def test_stage_one_cannot_see_regularizers(self):
        params = set(inspect.signature(standard_train).parameters)
        assert params == {"data", "learning_rate", "grad_steps", "batch_size",
                          "stream"}

    def test_rst_beta_zero_full_batch_loss_nonincreasing(self):
        m = canonical_model(8, 10, 0.2)
        stream = split_stream(132, 0)
        labeled = sample_labeled(m, 40, stream)
        # normalize inputs so lr = 1e-3 is in the stable range
        xs = labeled.xs / np.max(np.abs(labeled.xs))
        data = LabeledSet(xs=xs, ys=labeled.ys)
        cfg = RstConfig(beta=0.0, learning_rate=1e-3, grad_steps=50, batch_size=0)
        res = rst_train(data, None, cfg, split_stream(132, 1))
        trace = res.loss_trace
        assert trace.shape == (50,)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_rst_matches_manual_step(self):
        # one full-batch step must be exactly theta_1 = -lr * grad at zero
        m = canonical_model(4, 6, 0.25)
        stream = split_stream(133, 0)
        labeled = sample_labeled(m, 5, stream)
        pool, _ = sample_mixture(m, 7, 1.0, stream)
        pseudo = np.where(pool.xs @ np.ones(6) >= 0, 1, -1)
        cfg = RstConfig(beta=2.0, epsilon=0.2, w_unlabeled=0.5,
                        learning_rate=0.01, grad_steps=1, batch_size=0)
        res = rst_train(labeled, (pool, pseudo), cfg, split_stream(133, 1))
        xs = np.concatenate([labeled.xs, pool.xs])
        ys = np.concatenate([labeled.ys, pseudo]).astype(float)
        w = np.concatenate([np.ones(5), np.full(7, 0.5)])
        _, grad = robust_objective(np.zeros(6), xs, ys, w, cfg)
        assert np.allclose(res.model.theta, -0.01 * grad, rtol=0, atol=0)

    def test_equal_parts_batch_composition(self):
        # with one row per pool every batch is forced to [labeled, unlabeled]
        labeled = LabeledSet(xs=np.array([[1.0, 0.0]]), ys=np.array([1]))
        pool = UnlabeledSet(xs=np.array([[0.0, 2.0]]), relevant=np.array([True]))
        pseudo = np.array([-1])
        cfg = RstConfig(beta=0.0, w_unlabeled=0.3, learning_rate=0.1,
                        grad_steps=1, batch_size=2, equal_parts_batches=True)
        res = rst_train(labeled, (pool, pseudo), cfg, split_stream(134, 0))
        xs = np.array([[1.0, 0.0], [0.0, 2.0]])
        ys = np.array([1.0, -1.0])
        w = np.array([1.0, 0.3])
        _, grad = robust_objective(np.zeros(2), xs, ys, w, cfg)
        assert np.allclose(res.model.theta, -0.1 * grad, rtol=0, atol=0)

    def test_equal_parts_requires_unlabeled(self):
        labeled = LabeledSet(xs=np.ones((2, 2)), ys=np.array([1, -1]))
        cfg = RstConfig(batch_size=4, equal_parts_batches=True)
        with pytest.raises(ValueError):
            rst_train(labeled, None, cfg, split_stream(135, 0))

    def test_rejects_empty_labeled(self):
        empty = LabeledSet(xs=np.zeros((0, 2)), ys=np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            rst_train(empty, None, RstConfig(), split_stream(136, 0))
        with pytest.raises(ValueError):
            standard_train(empty, 0.1, 10, 0, split_stream(136, 1))

    def test_rejects_bad_pseudo_labels(self):
        labeled = LabeledSet(xs=np.ones((2, 2)), ys=np.array([1, -1]))
        pool = UnlabeledSet(xs=np.ones((2, 2)), relevant=np.ones(2, dtype=bool))
        with pytest.raises(ValueError):
            rst_train(labeled, (pool, np.array([1, 0])), RstConfig(),
                      split_stream(137, 0))
        with pytest.raises(ValueError):
            rst_train(labeled, (pool, np.array([1])), RstConfig(),
                      split_stream(137, 1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RstConfig(beta=-1.0)
        with pytest.raises(ValueError):
            RstConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            RstConfig(reg_kind="something_else")


class TestSmoothedPredictExact:
    def test_zero_score(self):
        model = LogisticModel(theta=np.array([1.0, -1.0]))
        label, p = smoothed_predict_exact(model, np.array([1.0, 1.0]), 0.5)
        assert label == 1
        assert p == 0.5

    def test_unit_ratio_frozen(self):
        model = LogisticModel(theta=np.array([1.0]))
        label, p = smoothed_predict_exact(model, np.array([0.25]), 0.25)
        assert label == 1
        assert p == pytest.approx(1.0 - q_function(1.0), rel=1e-12)
        assert p == pytest.approx(0.8413447460685429, rel=1e-12)

    def test_label_is_score_sign(self):
        stream = split_stream(141, 0)
        for _ in range(20):
            theta = stream.standard_normal(4)
            x = stream.standard_normal(4)
            label, p = smoothed_predict_exact(LogisticModel(theta=theta), x, 1.3)
            expected = 1 if float(theta @ x) >= 0 else -1
            assert label == expected
            assert p >= 0.5

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            smoothed_predict_exact(LogisticModel(theta=np.zeros(2)), np.ones(2), 1.0)
        with pytest.raises(ValueError):
            smoothed_predict_exact(LogisticModel(theta=np.ones(2)), np.ones(2), 0.0)
