import math

import numpy as np
import pytest

from ranlab.errors import ConfigError, ContractError, NumericError, ShapeError
from ranlab.rng import Rng
from ranlab.tensor import (
    Tape,
    Tensor,
    add,
    dropout,
    elementwise_binary,
    elementwise_unary,
    hadamard,
    matmul,
    sgd_step,
    sigmoid,
    smul,
    softmax_cross_entropy,
    sub,
    tanh,
    total,
    zero_grads,
)


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2)), a)
        assert np.array_equal(out.data, a.data)

    def test_hand_arithmetic(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_against_triple_loop(self):
        rng = Rng(7)
        a = rng.uniform_signed(1.0, (3, 4))
        b = rng.uniform_signed(1.0, (4, 2))
        out = matmul(Tensor(a), Tensor(b))
        assert np.allclose(out.data, naive_matmul(a, b), atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestUnary:
    def test_sigmoid_at_zero(self):
        out = sigmoid(Tensor(np.zeros((2, 3))))
        assert np.array_equal(out.data, np.full((2, 3), 0.5))

    def test_tanh_and_identity(self):
        assert tanh(Tensor([[0.0]])).data[0, 0] == 0.0
        x = Tensor([[1.5, -2.0]])
        assert identity_returns_same(x)

    def test_sigmoid_saturation_no_overflow(self):
        # Closed form: 1/(1+e^-100) = 1 - 3.7e-44, so 1.0 at float64.
        assert abs(sigmoid(Tensor([[100.0]])).data[0, 0] - 1.0) < 1e-12
        low = sigmoid(Tensor([[-100.0]])).data[0, 0]
        assert 0.0 < low < 1e-40

    def test_dispatcher(self):
        x = Tensor([[0.0]])
        assert elementwise_unary("sigmoid", x).data[0, 0] == 0.5
        with pytest.raises(ConfigError):
            elementwise_unary("relu", x)

    def test_nonfinite_input_detected(self):
        x = Tensor([[1.0]])
        x.data[0, 0] = np.nan
        with pytest.raises(NumericError):
            sigmoid(x)


def identity_returns_same(x):
    from ranlab.tensor import identity

    return identity(x) is x


class TestBinary:
    def test_hadamard(self):
        out = hadamard(Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]]))
        assert out.data.tolist() == [[3.0, 8.0]]

    def test_add_zero_identity(self):
        x = np.array([[1.0, -2.5], [0.25, 9.0]])
        out = add(Tensor(x), Tensor(np.zeros((2, 2))))
        assert np.array_equal(out.data, x)

    def test_bias_broadcast_matches_loop(self):
        rng = Rng(3)
        a = rng.uniform_signed(2.0, (2, 3))
        bias = rng.uniform_signed(2.0, (1, 3))
        out = add(Tensor(a), Tensor(bias))
        expect = np.zeros((2, 3))
        for i in range(2):
            for j in range(3):
                expect[i, j] = a[i, j] + bias[0, j]
        assert np.array_equal(out.data, expect)

    def test_incompatible_shapes(self):
        with pytest.raises(ShapeError):
            elementwise_binary("add", Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss = softmax_cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 3])
        assert loss.item() == pytest.approx(math.log(4), abs=1e-12)

    def test_saturated_logit(self):
        logits = np.zeros((1, 5))
        logits[0, 2] = 1000.0
        loss = softmax_cross_entropy(Tensor(logits), [2])
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_against_unstabilized_formula(self):
        rng = Rng(11)
        logits = rng.uniform_signed(3.0, (2, 5))
        targets = [4, 0]
        loss = softmax_cross_entropy(Tensor(logits), targets)
        direct = 0.0
        for i, t in enumerate(targets):
            p = np.exp(logits[i, t]) / np.exp(logits[i]).sum()
            direct -= math.log(p)
        assert loss.item() == pytest.approx(direct / 2, abs=1e-10)

    def test_out_of_range_target(self):
        with pytest.raises(IndexError):
            softmax_cross_entropy(Tensor(np.zeros((1, 4))), [4])

    def test_nonnegative_with_equality_iff_certain(self):
        rng = Rng(5)
        for _ in range(20):
            logits = rng.uniform_signed(4.0, (3, 6))
            loss = softmax_cross_entropy(Tensor(logits), [1, 2, 3]).item()
            assert loss >= 0.0
        sure = np.full((1, 3), -1e4)
        sure[0, 1] = 1e4
        assert softmax_cross_entropy(Tensor(sure), [1]).item() == 0.0


class TestSgd:
    def test_plain_update(self):
        p = Tensor([[1.0]])
        p.grad = np.array([[2.0]])
        sgd_step([p], lr=0.5)
        assert p.data[0, 0] == 0.0

    def test_clip_halves_when_norm_double(self):
        p = Tensor(np.zeros((1, 2)))
        p.grad = np.array([[6.0, 8.0]])  # norm 10
        norm = sgd_step([p], lr=1.0, clip_norm=5.0)
        assert norm == pytest.approx(10.0)
        assert np.allclose(p.data, [[-3.0, -4.0]])

    def test_quadratic_loss_decreases(self):
        p = Tensor([[3.0]])

        def loss_value():
            return float(p.data[0, 0] ** 2)

        before = loss_value()
        tape = Tape()
        tape.watch(p)
        loss = total(hadamard(p, p))
        tape.backward(loss)
        sgd_step([p], lr=0.1)
        assert loss_value() < before

    def test_bad_lr(self):
        with pytest.raises(ConfigError):
            sgd_step([], lr=0.0)


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = Tensor([[1.0, 2.0]])
        assert dropout(x, 0.0, Rng(0), train=True) is x

    def test_eval_mode_ignores_rate(self):
        x = Tensor([[1.0, 2.0]])
        assert dropout(x, 0.9, Rng(0), train=False) is x

    def test_survivor_fraction_and_mean(self):
        x = Tensor(np.ones((1000, 1000)))
        out = dropout(x, 0.5, Rng(123), train=True)
        survivors = np.count_nonzero(out.data) / out.data.size
        assert abs(survivors - 0.5) < 0.01
        assert abs(out.data.mean() - 1.0) < 0.02

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            dropout(Tensor([[1.0]]), 1.0, Rng(0))

    def test_backward_uses_same_mask(self):
        x = Tensor(np.ones((4, 4)))
        tape = Tape()
        tape.watch(x)
        out = dropout(x, 0.5, Rng(9), train=True)
        tape.backward(total(out))
        # gradient is exactly the applied mask
        assert np.array_equal(x.grad, out.data)


class TestScalarHelpers:
    def test_smul(self):
        x = Tensor([[2.0, -4.0]])
        tape = Tape()
        tape.watch(x)
        y = total(smul(x, 0.5))
        assert y.item() == -1.0
        tape.backward(y)
        assert np.array_equal(x.grad, np.full((1, 2), 0.5))

    def test_sub(self):
        a = Tensor([[3.0]])
        b = Tensor([[1.0]])
        tape = Tape()
        tape.watch(a, b)
        out = sub(a, b)
        tape.backward(out)
        assert a.grad[0, 0] == 1.0 and b.grad[0, 0] == -1.0

    def test_item_requires_scalar(self):
        with pytest.raises(ContractError):
            Tensor([[1.0, 2.0]]).item()


def test_zero_grads():
    p = Tensor([[1.0]])
    p.grad = np.array([[5.0]])
    zero_grads([p])
    assert p.grad is None
