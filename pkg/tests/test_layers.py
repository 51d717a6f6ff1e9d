import numpy as np
import pytest

from geomshot.errors import BatchTooSmall, CacheError
from geomshot.nnet import (
    BatchNorm1d,
    Dropout,
    Linear,
    ReLU,
    finite_difference_check,
)
from geomshot.rng import make_rng


def layer_loss(layer, x, train=True, rng_seed=5):
    """Mean of squared outputs; O(1) so finite differences stay clean."""
    y = layer.forward(x, train, make_rng(rng_seed))
    return float((y**2).mean())


def check_layer_gradients(layer, x, tol=1e-4, rng_seed=5):
    y = layer.forward(x, train=True, rng=make_rng(rng_seed))
    upstream = 2.0 * y / y.size
    for p in layer.parameters():
        p.zero_grad()
    layer.backward(upstream)
    report = finite_difference_check(
        layer.parameters(), lambda: layer_loss(layer, x, rng_seed=rng_seed), tolerance=tol
    )
    assert report.passed, report.per_param
    return report


class TestLinear:
    def test_weight_gradient_textbook_identity(self):
        rng = make_rng(0)
        lin = Linear(4, 3, "fc", rng)
        x = np.random.default_rng(1).normal(size=(5, 4))
        lin.forward(x, train=True)
        upstream = np.random.default_rng(2).normal(size=(5, 3))
        lin.weight.zero_grad()
        lin.bias.zero_grad()
        dx = lin.backward(upstream)
        assert np.allclose(lin.weight.grad, x.T @ upstream)
        assert np.allclose(lin.bias.grad, upstream.sum(axis=0))
        assert np.allclose(dx, upstream @ lin.weight.values.T)

    def test_finite_differences(self):
        lin = Linear(6, 4, "fc", make_rng(3))
        x = np.random.default_rng(4).normal(size=(5, 6))
        check_layer_gradients(lin, x)

    def test_quadratic_loss_tight_tolerance(self):
        # ||W x||^2 is quadratic in W: central differences are exact up to rounding
        lin = Linear(4, 4, "fc", make_rng(6))
        lin.weight.values[...] = np.abs(lin.weight.values) + 0.5
        x = np.abs(np.random.default_rng(7).normal(size=(3, 4))) + 0.5
        y = lin.forward(x, train=True)
        lin.weight.zero_grad()
        lin.bias.zero_grad()
        lin.backward(2.0 * y / y.size)
        report = finite_difference_check(
            lin.parameters(), lambda: layer_loss(lin, x), tolerance=1e-8
        )
        assert report.passed, report.per_param

    def test_backward_without_forward_raises(self):
        lin = Linear(3, 3, "fc", make_rng(8))
        with pytest.raises(CacheError):
            lin.backward(np.zeros((2, 3)))

    def test_double_backward_raises(self):
        lin = Linear(3, 3, "fc", make_rng(9))
        lin.forward(np.zeros((2, 3)), train=True)
        lin.backward(np.zeros((2, 3)))
        with pytest.raises(CacheError):
            lin.backward(np.zeros((2, 3)))


class TestReLU:
    def test_forward_and_mask(self):
        relu = ReLU()
        x = np.array([[-1.0, 2.0], [3.0, -4.0]])
        assert np.array_equal(relu.forward(x, train=True), [[0, 2], [3, 0]])
        dx = relu.backward(np.ones_like(x))
        assert np.array_equal(dx, [[0, 1], [1, 0]])


class TestDropout:
    def test_eval_mode_identity(self):
        drop = Dropout(0.5)
        x = np.random.default_rng(10).normal(size=(4, 6))
        assert np.array_equal(drop.forward(x, train=False), x)

    def test_inverted_scaling(self):
        drop = Dropout(0.5)
        x = np.ones((200, 50))
        y = drop.forward(x, train=True, rng=make_rng(11))
        kept = y != 0
        assert np.allclose(y[kept], 2.0)  # 1 / (1 - 0.5)
        assert 0.4 < kept.mean() < 0.6

    def test_backward_mask_matches_forward(self):
        drop = Dropout(0.3)
        x = np.random.default_rng(12).normal(size=(6, 8))
        y = drop.forward(x, train=True, rng=make_rng(13))
        dx = drop.backward(np.ones_like(x))
        assert np.array_equal(dx != 0, y != 0)
        assert np.array_equal(drop.last_mask, y != 0)

    def test_same_rng_replays_mask(self):
        drop = Dropout(0.3)
        x = np.random.default_rng(14).normal(size=(6, 8))
        y1 = drop.forward(x, train=True, rng=make_rng(15))
        y2 = drop.forward(x, train=True, rng=make_rng(15))
        assert np.array_equal(y1, y2)

    def test_train_without_rng_raises(self):
        with pytest.raises(ValueError):
            Dropout(0.3).forward(np.zeros((2, 2)), train=True)


class TestBatchNorm:
    def test_train_output_standardized(self):
        bn = BatchNorm1d(4, "bn")
        x = np.random.default_rng(16).normal(loc=3.0, scale=2.0, size=(64, 4))
        y = bn.forward(x, train=True)
        assert np.allclose(y.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(y.var(axis=0), 1.0, atol=1e-4)

    def test_batch_of_one_rejected(self):
        bn = BatchNorm1d(4, "bn")
        with pytest.raises(BatchTooSmall):
            bn.forward(np.zeros((1, 4)), train=True)

    def test_eval_does_not_mutate_running_stats(self):
        bn = BatchNorm1d(4, "bn")
        x = np.random.default_rng(17).normal(size=(8, 4))
        bn.forward(x, train=True)
        mean_before = bn.running_mean.copy()
        var_before = bn.running_var.copy()
        bn.forward(x, train=False)
        assert np.array_equal(bn.running_mean, mean_before)
        assert np.array_equal(bn.running_var, var_before)

    def test_running_stats_update_rule(self):
        bn = BatchNorm1d(2, "bn")
        x = np.random.default_rng(18).normal(size=(10, 2))
        bn.forward(x, train=True)
        assert np.allclose(bn.running_mean, 0.1 * x.mean(axis=0))
        assert np.allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=0, ddof=1))

    def test_finite_differences_batch_coupled(self):
        bn = BatchNorm1d(5, "bn")
        bn.gamma.values[...] = np.random.default_rng(19).uniform(0.5, 1.5, 5)
        x = np.random.default_rng(20).normal(size=(6, 5))
        check_layer_gradients(bn, x)
