"""Backward-pass contracts: trivial closed forms, finite differences,
linearity, and replay determinism."""

import numpy as np
import pytest

from helpers import fd_grads, rel_err
from ranlab.errors import ContractError
from ranlab.rng import Rng
from ranlab.tensor import (
    Tape,
    Tensor,
    add,
    hadamard,
    matmul,
    sigmoid,
    softmax_cross_entropy,
    sub,
    tanh,
    total,
)


def test_sigmoid_grad_at_zero():
    x = Tensor(np.zeros((2, 3)))
    tape = Tape()
    tape.watch(x)
    tape.backward(total(sigmoid(x)))
    assert np.allclose(x.grad, 0.25, atol=1e-15)


def test_square_grad():
    x = Tensor([[1.0, 2.0]])
    tape = Tape()
    tape.watch(x)
    tape.backward(total(hadamard(x, x)))
    assert np.array_equal(x.grad, [[2.0, 4.0]])


def test_nonscalar_loss_rejected():
    x = Tensor(np.ones((2, 2)))
    tape = Tape()
    tape.watch(x)
    y = hadamard(x, x)
    with pytest.raises(ContractError):
        tape.backward(y)


def test_tape_single_use():
    x = Tensor([[1.0]])
    tape = Tape()
    tape.watch(x)
    loss = total(x)
    tape.backward(loss)
    with pytest.raises(ContractError):
        tape.backward(loss)


def test_backward_linearity():
    rng = Rng(21)
    w = Tensor(rng.uniform_signed(1.0, (3, 3)))
    x1 = Tensor(rng.uniform_signed(1.0, (2, 3)))
    x2 = Tensor(rng.uniform_signed(1.0, (2, 3)))

    def loss_of(x, tape):
        return total(tanh(matmul(x, w)))

    # separate tapes, grads accumulate
    t1 = Tape()
    t1.watch(w)
    t1.backward(loss_of(x1, t1))
    t2 = Tape()
    t2.watch(w)
    t2.backward(loss_of(x2, t2))
    accumulated = w.grad.copy()

    # one tape, summed loss
    w.grad = None
    t3 = Tape()
    t3.watch(w)
    t3.backward(add(loss_of(x1, t3), loss_of(x2, t3)))
    assert np.allclose(accumulated, w.grad, atol=1e-12)


def test_reused_intermediate_fans_out():
    x = Tensor([[3.0]])
    tape = Tape()
    tape.watch(x)
    y = hadamard(x, x)  # x^2, used twice below
    tape.backward(add(y, y))  # d/dx 2x^2 = 4x
    assert x.grad[0, 0] == pytest.approx(12.0)


@pytest.mark.parametrize("op_name", ["sigmoid", "tanh", "matmul", "add", "sub", "hadamard", "xent"])
def test_finite_difference_per_op(op_name):
    rng = Rng(hash(op_name) % (2**32))
    w = Tensor(rng.uniform_signed(0.8, (3, 4)))
    v = Tensor(rng.uniform_signed(0.8, (3, 4)))
    x = rng.uniform_signed(0.8, (2, 3))

    def build_loss():
        tape = Tape()
        tape.watch(w, v)
        xt = Tensor(x)
        if op_name == "sigmoid":
            out = sigmoid(matmul(xt, w))
        elif op_name == "tanh":
            out = tanh(matmul(xt, w))
        elif op_name == "matmul":
            out = matmul(xt, w)
        elif op_name == "add":
            out = add(matmul(xt, w), matmul(xt, v))
        elif op_name == "sub":
            out = sub(matmul(xt, w), matmul(xt, v))
        elif op_name == "hadamard":
            out = hadamard(matmul(xt, w), matmul(xt, v))
        else:
            return softmax_cross_entropy(matmul(xt, w), [1, 3]), tape
        return total(out), tape

    def loss_value():
        loss, _ = build_loss()
        return loss.item()

    loss, tape = build_loss()
    tape.backward(loss)
    numeric = fd_grads(loss_value, [w, v])
    assert rel_err(w.grad, numeric[0]) <= 1e-6
    if v.grad is not None:
        assert rel_err(v.grad, numeric[1]) <= 1e-6


def test_forward_replay_deterministic():
    def run():
        rng = Rng(77)
        w = Tensor(rng.uniform_signed(0.5, (4, 4)))
        x = Tensor(rng.uniform_signed(0.5, (2, 4)))
        return tanh(matmul(sigmoid(matmul(x, w)), w)).data.copy()

    a, b = run(), run()
    assert np.array_equal(a, b)
