"""Tests for the reverse-mode array engine."""

import numpy as np
import pytest

from proplearn.errors import DataError
from proplearn.tensor import (
    MASK_NEG,
    GradCheckReport,
    Parameter,
    Tensor,
    add,
    concat_cols,
    concat_rows,
    constant,
    cross_entropy,
    gather_rows,
    grad_check,
    layer_norm,
    matmul,
    mean_pool,
    mul,
    relu,
    reshape,
    scale,
    scaled_dot_attention,
    sigmoid,
    slice_cols,
    softmax,
    softplus,
    sub,
    sum_of_squares,
    tanh,
    transpose,
    tsum,
)


def _param(rng, shape, name="p"):
    return Parameter(rng.uniform(-1.0, 1.0, size=shape), name=name)


class TestForwardValues:
    def test_softmax_uniform(self):
        """A constant row softmaxes to the uniform distribution."""
        y = softmax(constant([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(y.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        y = softmax(constant(rng.normal(size=(7, 5)) * 10))
        np.testing.assert_allclose(y.data.sum(axis=1), np.ones(7), atol=1e-12)

    def test_masked_softmax_redistributes(self):
        """Masking the middle logit splits the mass over the other two."""
        mask = np.array([[0.0, MASK_NEG, 0.0]])
        y = softmax(constant([[1.0, 5.0, 1.0]]), mask=constant(mask))
        np.testing.assert_allclose(y.data, [[0.5, 0.0, 0.5]], atol=1e-12)
        assert y.data[0, 1] < 1e-12

    def test_cross_entropy_perfect_prediction(self):
        probs = constant([[1.0, 0.0]])
        loss = cross_entropy(probs, np.array([0]))
        assert loss.data.item() == pytest.approx(0.0, abs=1e-12)

    def test_cross_entropy_quarter(self):
        loss = cross_entropy(constant([[0.75, 0.25]]), np.array([0]))
        np.testing.assert_allclose(loss.data.item(), -np.log(0.75), rtol=1e-12)

    def test_nonlinearities_match_numpy(self):
        x = np.linspace(-3, 3, 13)
        t = constant(x.reshape(1, -1))
        np.testing.assert_allclose(tanh(t).data.ravel(), np.tanh(x), rtol=1e-12)
        np.testing.assert_allclose(sigmoid(t).data.ravel(), 1 / (1 + np.exp(-x)), rtol=1e-12)
        np.testing.assert_allclose(relu(t).data.ravel(), np.maximum(x, 0), rtol=1e-12)
        np.testing.assert_allclose(softplus(t).data.ravel(), np.logaddexp(0, x), rtol=1e-12)

    def test_mean_pool_subset(self):
        x = constant([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        pooled = mean_pool(x, rows=np.array([0, 2]))
        np.testing.assert_allclose(pooled.data, [[3.0, 4.0]], rtol=1e-15)

    def test_layer_norm_standardizes(self):
        rng = np.random.default_rng(3)
        x = constant(rng.normal(size=(4, 6)) * 5 + 2)
        g = Parameter(np.ones(6))
        b = Parameter(np.zeros(6))
        y = layer_norm(x, g, b).data
        np.testing.assert_allclose(y.mean(axis=1), np.zeros(4), atol=1e-12)
        np.testing.assert_allclose(y.var(axis=1), np.ones(4), atol=1e-4)

    def test_attention_uniform_when_keys_equal(self):
        """Identical keys give uniform weights, so the output is the value mean."""
        q = constant(np.ones((2, 3)))
        k = constant(np.ones((4, 3)))
        v = constant(np.arange(8, dtype=float).reshape(4, 2))
        out = scaled_dot_attention(q, k, v)
        np.testing.assert_allclose(out.data, np.tile(v.data.mean(axis=0), (2, 1)), atol=1e-12)

    def test_attention_key_mask_removes_key(self):
        q = constant(np.zeros((1, 2)))
        k = constant(np.zeros((3, 2)))
        v = constant(np.array([[1.0, 0.0], [0.0, 1.0], [10.0, 10.0]]))
        keep = np.array([True, True, False])
        out = scaled_dot_attention(q, k, v, key_mask=keep)
        np.testing.assert_allclose(out.data, [[0.5, 0.5]], atol=1e-12)

    def test_attention_all_keys_masked_raises(self):
        q = constant(np.zeros((1, 2)))
        k = constant(np.zeros((2, 2)))
        v = constant(np.zeros((2, 2)))
        with pytest.raises(DataError):
            scaled_dot_attention(q, k, v, key_mask=np.array([False, False]))

    def test_gather_rows(self):
        table = constant(np.arange(12, dtype=float).reshape(4, 3))
        out = gather_rows(table, np.array([2, 0, 2]))
        np.testing.assert_allclose(out.data, table.data[[2, 0, 2]], rtol=1e-15)

    def test_add_bias_row_broadcast(self):
        x = constant(np.zeros((3, 2)))
        b = constant(np.array([1.0, -1.0]))
        np.testing.assert_allclose(add(x, b).data, [[1, -1]] * 3, rtol=1e-15)


class TestBackward:
    def test_sum_of_squares_gradient(self):
        """d(x^2)/dx = 2x."""
        p = Parameter(np.array([[3.0]]))
        sum_of_squares(p).backward()
        np.testing.assert_allclose(p.grad, [[6.0]], rtol=1e-12)

    def test_untouched_parameter_gets_zero_grad(self):
        used = Parameter(np.array([[2.0]]))
        unused = Parameter(np.array([[5.0]]))
        sum_of_squares(used).backward()
        np.testing.assert_allclose(unused.grad, [[0.0]], rtol=0)

    def test_gather_accumulates_repeated_rows(self):
        table = Parameter(np.ones((3, 2)))
        out = gather_rows(table, np.array([1, 1, 0]))
        tsum(out).backward()
        np.testing.assert_allclose(table.grad, [[1, 1], [2, 2], [0, 0]], rtol=0)

    def test_backward_requires_scalar(self):
        p = Parameter(np.ones((2, 2)))
        with pytest.raises(DataError):
            tanh(p).backward()

    def test_masked_softmax_gradient_stays_off_masked_column(self):
        p = Parameter(np.array([[1.0, 2.0, 3.0]]))
        mask = constant(np.array([[0.0, MASK_NEG, 0.0]]))
        tsum(mul(softmax(p, mask=mask), constant(np.array([[1.0, 7.0, 2.0]])))).backward()
        assert abs(p.grad[0, 1]) < 1e-8


def _finite_diff(f, params, step=1e-5):
    """Central-difference gradient of a scalar-building closure."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f().data.item()
            flat[i] = orig - step
            lo = f().data.item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def _assert_grads_match(f, params, tol=1e-4):
    for p in params:
        p.zero_grad()
    f().backward()
    numeric = _finite_diff(f, params)
    for p, n in zip(params, numeric):
        denom = np.maximum(1.0, np.maximum(np.abs(p.grad), np.abs(n)))
        err = np.abs(p.grad - n) / denom
        assert err.max() < tol, f"{p.name}: rel err {err.max():.3e}"


class TestFiniteDifferenceOracle:
    """Every op's backward is compared against central differences."""

    @pytest.mark.parametrize("seed", range(20))
    def test_composite_graph(self, seed):
        rng = np.random.default_rng(seed)
        W = _param(rng, (4, 3), "W")
        b = _param(rng, (3,), "b")
        x = constant(rng.normal(size=(5, 4)))

        def f():
            h = tanh(add(matmul(x, W), b))
            return sum_of_squares(h)

        _assert_grads_match(f, [W, b])

    @pytest.mark.parametrize("op", [tanh, sigmoid, relu, softplus])
    def test_pointwise(self, op):
        rng = np.random.default_rng(hash(op.__name__) % 1000)
        # keep relu away from its kink where central differences lie
        data = rng.uniform(0.2, 1.5, size=(3, 4)) * rng.choice([-1, 1], size=(3, 4))
        p = Parameter(data, name=op.__name__)
        _assert_grads_match(lambda: sum_of_squares(op(p)), [p])

    @pytest.mark.parametrize("seed", range(5))
    def test_softmax_and_cross_entropy(self, seed):
        rng = np.random.default_rng(100 + seed)
        p = _param(rng, (4, 3), "logits")
        targets = rng.integers(0, 3, size=4)

        def f():
            return cross_entropy(softmax(p), targets)

        _assert_grads_match(f, [p])

    @pytest.mark.parametrize("seed", range(5))
    def test_masked_softmax(self, seed):
        rng = np.random.default_rng(200 + seed)
        p = _param(rng, (3, 5), "logits")
        keep = rng.uniform(size=(3, 5)) > 0.3
        keep[:, 0] = True
        mask = constant(np.where(keep, 0.0, MASK_NEG))
        weights = constant(rng.normal(size=(3, 5)))
        _assert_grads_match(lambda: tsum(mul(softmax(p, mask=mask), weights)), [p])

    @pytest.mark.parametrize("seed", range(5))
    def test_layer_norm(self, seed):
        rng = np.random.default_rng(300 + seed)
        x = _param(rng, (4, 6), "x")
        g = _param(rng, (6,), "gain")
        b = _param(rng, (6,), "bias")
        _assert_grads_match(lambda: sum_of_squares(layer_norm(x, g, b)), [x, g, b])

    @pytest.mark.parametrize("seed", range(5))
    def test_attention(self, seed):
        rng = np.random.default_rng(400 + seed)
        q = _param(rng, (3, 4), "q")
        k = _param(rng, (5, 4), "k")
        v = _param(rng, (5, 2), "v")
        keep = np.array([True, True, False, True, True])

        def f():
            return sum_of_squares(scaled_dot_attention(q, k, v, key_mask=keep))

        _assert_grads_match(f, [q, k, v])

    @pytest.mark.parametrize("seed", range(3))
    def test_structural_ops(self, seed):
        rng = np.random.default_rng(500 + seed)
        a = _param(rng, (3, 4), "a")
        b = _param(rng, (2, 4), "b")
        c = _param(rng, (3, 2), "c")

        def f():
            stacked = concat_rows([a, b])  # (5, 4)
            left = slice_cols(stacked, 0, 2)  # (5, 2)
            wide = concat_cols([c, mul(c, c)])  # (3, 4)
            pooled = mean_pool(transpose(left))  # (1, 5)
            flat = reshape(wide, (1, 12))
            return add(tsum(pooled), tsum(sum_of_squares(flat)))

        _assert_grads_match(f, [a, b, c])

    @pytest.mark.parametrize("seed", range(3))
    def test_arithmetic_ops(self, seed):
        rng = np.random.default_rng(600 + seed)
        a = _param(rng, (3, 3), "a")
        b = _param(rng, (3, 3), "b")

        def f():
            return tsum(mul(scale(sub(a, b), 0.7), add(a, b)))

        _assert_grads_match(f, [a, b])

    @pytest.mark.parametrize("seed", range(3))
    def test_embedding_and_pool(self, seed):
        rng = np.random.default_rng(700 + seed)
        table = _param(rng, (6, 3), "table")
        idx = rng.integers(0, 6, size=8)
        rows = np.array([0, 3, 5])

        def f():
            return sum_of_squares(mean_pool(gather_rows(table, idx), rows=rows))

        _assert_grads_match(f, [table])


class TestGradCheckApi:
    def test_simple_quadratic(self):
        """f(theta) = theta^2 at theta = 1: analytic 2 vs numeric 2."""
        theta = Parameter(np.array([[1.0]]), name="theta")
        report = grad_check(lambda: sum_of_squares(theta), [theta])
        assert isinstance(report, GradCheckReport)
        assert report.passed
        assert report.max_rel_err < 1e-8

    def test_report_flags_wrong_gradient(self):
        theta = Parameter(np.array([[1.0]]), name="theta")

        def f():
            out = sum_of_squares(theta)
            out_bad = Tensor(out.data, parents=(theta,))

            def backward(grad):
                theta.grad += 100.0 * grad  # deliberately wrong

            out_bad._backward = backward
            return out_bad

        report = grad_check(f, [theta])
        assert not report.passed
        assert "theta" in str(report)

    def test_deterministic_forward(self):
        rng = np.random.default_rng(9)
        x = constant(rng.normal(size=(4, 4)))
        w = Parameter(rng.normal(size=(4, 4)))
        a = sum_of_squares(tanh(matmul(x, w))).data.item()
        b = sum_of_squares(tanh(matmul(x, w))).data.item()
        assert a == b
