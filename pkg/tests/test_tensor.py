import math

import numpy as np
import pytest

from temporalcs.errors import ArgumentError, ShapeError
from temporalcs import tensor as T
from temporalcs.tensor import Tape, Tensor, concat, dropout, gather_rows, grad_check, matmul, slice_cols, softmax


def test_matmul_identity():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = matmul(Tensor(np.eye(2)), m)
    assert np.array_equal(out.data, m.data)


def test_matmul_hand_value():
    out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_softmax_uniform():
    out = softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_softmax_large_inputs_no_overflow():
    out = softmax(Tensor([1000.0, 1000.0]))
    assert np.allclose(out.data, [0.5, 0.5])
    assert np.isfinite(out.data).all()


def test_softmax_direct_value():
    out = softmax(Tensor([0.0, math.log(3.0)]))
    assert np.allclose(out.data, [0.25, 0.75], atol=1e-12)


def test_softmax_sums_to_one_across_magnitudes():
    rng = np.random.default_rng(0)
    for scale in [1e-3, 1e-1, 1.0, 1e1, 1e2, 1e3]:
        x = Tensor(rng.normal(size=(4, 7)) * scale)
        out = softmax(x, axis=1)
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-12)
        assert (out.data >= 0).all()
        # strict positivity holds wherever exp does not underflow
        if scale <= 1e2:
            assert (out.data > 0).all()


def test_softmax_empty_rejected():
    with pytest.raises(ArgumentError):
        softmax(Tensor(np.zeros((0,))))


def test_activation_values():
    x = Tensor([-1.0, 0.0, 2.0])
    assert x.relu().data.tolist() == [0.0, 0.0, 2.0]
    assert Tensor([0.0]).tanh().data.tolist() == [0.0]
    assert Tensor([0.0]).sigmoid().data.tolist() == [0.5]
    assert np.allclose(Tensor([math.log(3.0)]).sigmoid().data, [0.75], atol=1e-12)


def test_relu_grad_at_zero_is_zero():
    tape = Tape()
    x = Tensor([0.0, -1.0, 2.0])
    tape.watch(x)
    tape.backward(x.relu().sum())
    assert x.grad.tolist() == [0.0, 0.0, 1.0]


def test_dropout_rate_zero_is_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    out = dropout(x, 0.0, training=True, rng=np.random.default_rng(0))
    assert np.array_equal(out.data, x.data)


def test_dropout_inference_is_identity():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    out = dropout(x, 0.9, training=False)
    assert np.array_equal(out.data, x.data)


def test_dropout_seeded_mask_and_scaling():
    x = Tensor(np.ones((4, 8)))
    out1 = dropout(x, 0.5, training=True, rng=np.random.default_rng(42))
    out2 = dropout(x, 0.5, training=True, rng=np.random.default_rng(42))
    assert np.array_equal(out1.data, out2.data)
    survivors = out1.data[out1.data != 0.0]
    assert np.allclose(survivors, 2.0)
    assert 0 < survivors.size < out1.size


def test_dropout_rate_one_rejected():
    with pytest.raises(ArgumentError):
        dropout(Tensor([1.0]), 1.0, training=True, rng=np.random.default_rng(0))


def test_grad_check_quadratic():
    theta = Tensor([3.0])
    err = grad_check(lambda: (theta**2.0).sum(), [theta], eps=1e-5)
    assert err < 1e-9


def test_grad_check_constant():
    theta = Tensor([1.5])
    err = grad_check(lambda: (theta * 0.0).sum(), [theta], eps=1e-5)
    assert err == 0.0


# Each composite ends in a fixed positive weighting so gradients stay O(1)
# and the relative-error denominator is never degenerate.
_W33 = Tensor(np.linspace(0.5, 1.5, 9).reshape(3, 3))
_W34 = Tensor(np.linspace(0.5, 1.5, 12).reshape(3, 4))
_W38 = Tensor(np.linspace(0.5, 1.5, 24).reshape(3, 8))


@pytest.mark.parametrize(
    "build",
    [
        lambda x, y: matmul(x, y).sum(),
        lambda x, y: ((x.reshape((3, 4)) + y.transpose().reshape((3, 4))).tanh() * _W34).sum(),
        lambda x, y: ((x * 2.0 - y.reshape((3, 4)) * x).sigmoid() * _W34).sum(),
        lambda x, y: (softmax(matmul(x, y), axis=1) * _W33).sum(),
        lambda x, y: (concat([x, y.reshape((3, 4))], axis=1).relu() * _W38).sum(),
        lambda x, y: slice_cols(matmul(x, y), 1, 3).sum(),
        lambda x, y: gather_rows(x, [2, 0, 2]).sum() + (y**3.0).sum(),
        lambda x, y: ((x.clip(-0.5, 0.5) + 1.1).log()).sum() + y.sum(),
    ],
)
def test_primitive_gradients_match_central_differences(build):
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(3, 4)))
    y = Tensor(rng.normal(size=(4, 3)))
    err = grad_check(lambda: build(x, y), [x, y], eps=1e-5)
    assert err < 1e-6


def test_broadcast_add_row_and_col_gradients():
    # positive inputs: every chain-rule term has one sign, so no entry of the
    # gradient is small by cancellation
    rng = np.random.default_rng(3)
    m = Tensor(rng.uniform(0.1, 1.0, size=(5, 4)))
    row = Tensor(rng.uniform(0.1, 1.0, size=(4,)))
    col = Tensor(rng.uniform(0.1, 1.0, size=(5, 1)))
    err = grad_check(lambda: ((m + row) * col).tanh().sum(), [m, row, col], eps=1e-5)
    assert err < 1e-6


def test_composite_backward_matches_standalone_differentiator():
    # Same composite written twice: once on the tape, once in plain numpy.
    # The plain version is differentiated numerically and compared entrywise.
    rng = np.random.default_rng(11)
    w1 = Tensor(rng.normal(size=(2, 3)))
    w2 = Tensor(rng.normal(size=(3, 1)))
    b = Tensor(rng.normal(size=(1,)))
    x = rng.normal(size=(4, 2))

    def plain(w1d, w2d, bd):
        h = np.tanh(x @ w1d)
        p = 1.0 / (1.0 + np.exp(-(h @ w2d + bd)))
        return float(np.mean((p - 0.25) ** 2))

    tape = Tape()
    for p in (w1, w2, b):
        tape.watch(p)
    h = matmul(Tensor(x), w1).tanh()
    pred = (matmul(h, w2) + b).sigmoid()
    loss = ((pred - 0.25) ** 2.0).mean()
    tape.backward(loss)
    assert abs(loss.item() - plain(w1.data, w2.data, b.data)) < 1e-12

    eps = 1e-6
    for p in (w1, w2, b):
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = plain(w1.data, w2.data, b.data)
            flat[i] = saved - eps
            down = plain(w1.data, w2.data, b.data)
            flat[i] = saved
            numeric = (up - down) / (2 * eps)
            assert abs(gflat[i] - numeric) <= 1e-6 * max(1.0, abs(numeric))


def test_mixed_tapes_rejected():
    t1, t2 = Tape(), Tape()
    a, b = Tensor([1.0]), Tensor([2.0])
    t1.watch(a)
    t2.watch(b)
    with pytest.raises(ArgumentError):
        a + b


def test_gradients_accumulate_across_reuse():
    tape = Tape()
    x = Tensor([2.0])
    tape.watch(x)
    y = x * x + x * 3.0
    tape.backward(y.sum())
    assert np.allclose(x.grad, [7.0])


def test_backward_requires_scalar():
    tape = Tape()
    x = Tensor([1.0, 2.0])
    tape.watch(x)
    with pytest.raises(ShapeError):
        tape.backward(x * 2.0)
