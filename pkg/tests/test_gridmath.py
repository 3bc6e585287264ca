# Standard library imports
import math

# Third-party imports
import numpy as np
import pytest
import hypothesis.extra.numpy as hnp
from hypothesis import given, settings, strategies as st

# Local imports
from croplab.errors import InvalidInputError, NumericError, ShapeError, UsageError
from croplab.gridmath import (
    DiffTensor,
    Tape,
    add,
    backward,
    current_tape,
    elementwise,
    exp,
    getitem,
    layer_norm,
    matmul,
    mean,
    mul,
    no_grad,
    precision,
    relu,
    scale,
    softmax_rows,
    sum as tsum,
    transpose,
    zero_grad,
)


def _check_gradient(op, shapes, fd_gradient, sample_coords, seed=0):
    """Compare backward() of sum(op(*inputs) * W) with central differences for every input."""
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        arrays = [rng.normal(size=s) for s in shapes]
        weights = rng.normal(size=op(*[DiffTensor(a) for a in arrays]).shape)

        def loss(*values):
            return tsum(mul(op(*values), weights))

        inputs = [DiffTensor(a, requires_grad=True) for a in arrays]
        with Tape():
            backward(loss(*inputs))

        for k, tensor in enumerate(inputs):
            def f(x, k=k):
                values = [DiffTensor(a) for a in arrays]
                values[k] = DiffTensor(x)
                return loss(*values).item()

            coords = sample_coords(arrays[k].shape, k=min(6, arrays[k].size))
            numeric = fd_gradient(f, arrays[k], coords)
            analytic = np.array([tensor.grad[c] for c in coords])
            np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-8)


def test_add_componentwise():
    assert np.array_equal(add(DiffTensor([1, 2]), DiffTensor([3, 4])).values, [4, 6])


def test_scale_by_zero_gives_zero_and_zero_grad():
    x = DiffTensor([1.0, -2.0, 3.0], requires_grad=True)
    with Tape():
        y = scale(x, 0)
        backward(tsum(y))
    assert np.array_equal(y.values, np.zeros(3))
    assert np.array_equal(x.grad, np.zeros(3))


@pytest.mark.parametrize('op', ['add', 'sub', 'mul', 'div'])
def test_binary_gradients_with_broadcasting(op, fd_gradient, sample_coords):
    def fn(a, b):
        if op == 'div':
            b = add(mul(b, b), 1.0)
        return elementwise(op, a, b)
    _check_gradient(fn, [(3, 4), (4,)], fd_gradient, sample_coords)


@pytest.mark.parametrize('fn', [relu, exp, lambda a: scale(a, 2.5), lambda a: elementwise('neg', a)])
def test_unary_gradients(fn, fd_gradient, sample_coords):
    _check_gradient(fn, [(5, 3)], fd_gradient, sample_coords, seed=3)


def test_elementwise_rejects_unknown_op_and_bad_shapes():
    with pytest.raises(InvalidInputError):
        elementwise('pow', DiffTensor([1.0]))
    with pytest.raises(ShapeError):
        add(DiffTensor(np.ones((2, 3))), DiffTensor(np.ones((4,))))


def test_matmul_hand_cases():
    b = DiffTensor(np.arange(6).reshape(3, 2))
    assert np.array_equal(matmul(DiffTensor(np.eye(3)), b).values, b.values)
    out = matmul(DiffTensor([[1, 0], [0, 2]]), DiffTensor([[3], [4]]))
    assert np.array_equal(out.values, [[3], [8]])


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        matmul(DiffTensor(np.ones((2, 3))), DiffTensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        matmul(DiffTensor(np.ones(3)), DiffTensor(np.ones((3, 1))))


def test_matmul_gradients_batched(fd_gradient, sample_coords):
    _check_gradient(matmul, [(2, 3, 4), (4, 5)], fd_gradient, sample_coords)


def test_softmax_closed_forms():
    assert np.allclose(softmax_rows(DiffTensor(np.full((2, 4), 7.0))).values, 0.25)
    out = softmax_rows(DiffTensor([[0.0, math.log(3.0)]]), temperature=1.0)
    assert np.allclose(out.values, [[0.25, 0.75]], atol=1e-6)


def test_softmax_rows_sum_to_one_on_random_input(rng):
    out = softmax_rows(DiffTensor(rng.normal(scale=5.0, size=(16, 256))), temperature=0.7)
    assert np.all(np.abs(out.values.sum(axis=1, dtype=np.float64) - 1.0) <= 1e-6)
    assert np.all((out.values >= 0) & (out.values <= 1))


@settings(deadline=None, max_examples=50)
@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=3, max_side=12),
                  elements=st.floats(-50, 50, width=32)))
def test_softmax_rows_are_distributions(a):
    out = softmax_rows(DiffTensor(a)).values
    assert np.all(out >= 0)
    assert np.allclose(out.sum(axis=-1, dtype=np.float64), 1.0, atol=1e-6)


def test_softmax_errors():
    with pytest.raises(InvalidInputError):
        softmax_rows(DiffTensor([[1.0, 2.0]]), temperature=0.0)
    with pytest.raises(NumericError):
        softmax_rows(DiffTensor([[1.0, np.nan]]))


def test_composite_softmax_gradient(fd_gradient, sample_coords):
    _check_gradient(lambda a: softmax_rows(a, temperature=2.0), [(4, 6)], fd_gradient, sample_coords)


@pytest.mark.parametrize('fn', [
    layer_norm,
    lambda a: getitem(a, (slice(None), np.array([0, 2, 2]))),
    lambda a: transpose(a, (1, 0)),
    lambda a: mean(a, axis=1, keepdims=True),
    lambda a: a.reshape(2, 6),
])
def test_shape_and_normalization_gradients(fn, fd_gradient, sample_coords):
    _check_gradient(fn, [(3, 4)], fd_gradient, sample_coords, seed=7)


def test_backward_seeds_root_and_identity():
    x = DiffTensor(3.0, requires_grad=True)
    backward(x)
    assert x.grad == 1.0


def test_backward_of_sum_gives_ones_and_accumulates():
    x = DiffTensor(np.arange(4.0), requires_grad=True)
    with Tape():
        y = tsum(x)
        backward(y)
        backward(y)
    assert np.array_equal(x.grad, np.full(4, 2.0))
    zero_grad([x])
    assert x.grad is None


def test_backward_rejects_non_scalar():
    x = DiffTensor(np.ones(3), requires_grad=True)
    with Tape():
        with pytest.raises(UsageError):
            backward(scale(x, 2.0))


def test_tape_is_topologically_ordered():
    x = DiffTensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = exp(scale(x, 2.0))
        tsum(mul(y, y))
    positions = {id(r.output): i for i, r in enumerate(tape.records)}
    for i, record in enumerate(tape.records):
        for tensor in record.inputs:
            assert positions.get(id(tensor), -1) < i


def test_no_grad_records_nothing():
    x = DiffTensor(np.ones(3), requires_grad=True)
    with Tape() as tape, no_grad():
        y = scale(x, 2.0)
    assert len(tape) == 0
    assert not y.requires_grad


def test_ops_outside_a_tape_are_not_recorded():
    x = DiffTensor(np.ones(3), requires_grad=True)
    y = tsum(scale(x, 2.0))
    assert current_tape() is None
    assert not y.requires_grad
    backward(y)
    assert x.grad is None

    with no_grad():
        pass
    with Tape() as tape:
        z = tsum(scale(x, 2.0))
    assert z.requires_grad
    assert len(tape) == 2


def test_detach_shares_values_without_gradients():
    x = DiffTensor(np.arange(3.0), requires_grad=True)
    d = x.detach()
    assert d.values is x.values
    assert not d.requires_grad
    with Tape() as tape:
        scale(d, 2.0)
    assert len(tape) == 0


def test_values_are_read_only_and_float32_by_default():
    t = DiffTensor([1, 2, 3])
    assert t.dtype == np.float32
    with pytest.raises(ValueError):
        t.values[0] = 5


def test_replay_is_bit_identical(rng):
    a = rng.normal(size=(8, 16)).astype(np.float32)
    first = softmax_rows(layer_norm(DiffTensor(a))).values
    second = softmax_rows(layer_norm(DiffTensor(a))).values
    assert np.array_equal(first, second)
