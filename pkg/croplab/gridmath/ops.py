"""
Differentiable primitives.

Each function computes its forward value with numpy and registers a closure that maps the
output gradient to input gradients. Elementwise operations follow numpy broadcasting; the
gradient of a broadcast operand is summed back to its own shape.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from croplab.errors import InvalidInputError, NumericError, ShapeError
from .tensor import DiffTensor, as_tensor

TensorLike = Union[DiffTensor, np.ndarray, float, int]

ELEMENTWISE_OPS = ('add', 'sub', 'mul', 'div', 'scale', 'relu', 'exp', 'neg')


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes that broadcasting added or stretched."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)), dtype=np.float64)
    stretched = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if stretched:
        grad = grad.sum(axis=stretched, keepdims=True, dtype=np.float64)
    return grad.reshape(shape)


def _binary_operands(a: TensorLike, b: TensorLike, op: str) -> Tuple[DiffTensor, DiffTensor, Tuple[int, ...]]:
    a, b = as_tensor(a), as_tensor(b)
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible")
    return a, b, shape


def add(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b, _ = _binary_operands(a, b, 'add')

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return DiffTensor._result(a.values + b.values, 'add', (a, b), grad_fn)


def sub(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b, _ = _binary_operands(a, b, 'sub')

    def grad_fn(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return DiffTensor._result(a.values - b.values, 'sub', (a, b), grad_fn)


def mul(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b, _ = _binary_operands(a, b, 'mul')

    def grad_fn(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return DiffTensor._result(a.values * b.values, 'mul', (a, b), grad_fn)


def div(a: TensorLike, b: TensorLike) -> DiffTensor:
    a, b, _ = _binary_operands(a, b, 'div')

    def grad_fn(g):
        return (_unbroadcast(g / b.values, a.shape),
                _unbroadcast(-g * a.values / (b.values * b.values), b.shape))

    return DiffTensor._result(a.values / b.values, 'div', (a, b), grad_fn)


def scale(a: TensorLike, factor: float) -> DiffTensor:
    a = as_tensor(a)
    factor = float(factor)

    def grad_fn(g):
        return (g * factor,)

    return DiffTensor._result(a.values * factor, 'scale', (a,), grad_fn)


def neg(a: TensorLike) -> DiffTensor:
    a = as_tensor(a)
    return DiffTensor._result(-a.values, 'neg', (a,), lambda g: (-g,))


def relu(a: TensorLike) -> DiffTensor:
    a = as_tensor(a)
    mask = a.values > 0

    def grad_fn(g):
        return (g * mask,)

    return DiffTensor._result(np.where(mask, a.values, 0).astype(a.dtype), 'relu', (a,), grad_fn)


def exp(a: TensorLike) -> DiffTensor:
    a = as_tensor(a)
    out = np.exp(a.values)

    def grad_fn(g):
        return (g * out,)

    return DiffTensor._result(out, 'exp', (a,), grad_fn)


def elementwise(op: str, a: TensorLike, b: Optional[TensorLike] = None) -> DiffTensor:
    """
    Dispatch one of the elementwise primitives by name.

    ``scale`` takes its factor as ``b``; unary operations ignore ``b``.
    """
    if op not in ELEMENTWISE_OPS:
        raise InvalidInputError(f"Unknown elementwise op '{op}', expected one of {ELEMENTWISE_OPS}")
    if op in ('add', 'sub', 'mul', 'div'):
        if b is None:
            raise ShapeError(f"{op} needs two operands")
        return globals()[op](a, b)
    if op == 'scale':
        return scale(a, 1.0 if b is None else float(b.item() if isinstance(b, DiffTensor) else b))
    return globals()[op](a)


def matmul(a: TensorLike, b: TensorLike) -> DiffTensor:
    """
    Matrix product over the last two axes; leading axes broadcast (batched matmul).

    Raises:
        ShapeError: If either operand has fewer than two axes or inner dimensions differ
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands with at least 2 axes, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(b.values, -1, -2))
        gb = np.matmul(np.swapaxes(a.values, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return DiffTensor._result(np.matmul(a.values, b.values), 'matmul', (a, b), grad_fn)


def softmax_rows(a: TensorLike, temperature: float = 1.0) -> DiffTensor:
    """
    Softmax along the last axis of ``a / temperature``, stabilized by max-subtraction.

    Raises:
        InvalidInputError: If ``temperature`` is not positive
        NumericError: If the input holds non-finite values
    """
    a = as_tensor(a)
    if not temperature > 0:
        raise InvalidInputError(f"softmax temperature must be > 0, got {temperature}")
    if not np.all(np.isfinite(a.values)):
        raise NumericError("softmax_rows received non-finite input")

    shifted = (a.values - a.values.max(axis=-1, keepdims=True)) / temperature
    e = np.exp(shifted)
    out = (e / e.sum(axis=-1, keepdims=True, dtype=np.float64)).astype(a.dtype)

    def grad_fn(g):
        inner = np.sum(g * out, axis=-1, keepdims=True, dtype=np.float64)
        return ((out * (g - inner)) / temperature,)

    return DiffTensor._result(out, 'softmax_rows', (a,), grad_fn)


def sum(a: TensorLike, axis=None, keepdims: bool = False) -> DiffTensor:  # noqa: A001
    a = as_tensor(a)
    out = np.sum(a.values, axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return DiffTensor._result(np.asarray(out), 'sum', (a,), grad_fn)


def mean(a: TensorLike, axis=None, keepdims: bool = False) -> DiffTensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: TensorLike, shape: Sequence[int]) -> DiffTensor:
    a = as_tensor(a)
    try:
        out = a.values.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {tuple(shape)}")
    return DiffTensor._result(out, 'reshape', (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: TensorLike, axes: Optional[Sequence[int]] = None) -> DiffTensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"invalid transpose axes {axes} for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return DiffTensor._result(np.transpose(a.values, axes), 'transpose', (a,),
                              lambda g: (np.transpose(g, inverse),))


def swap_last(a: TensorLike) -> DiffTensor:
    """Transpose the last two axes."""
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def getitem(a: TensorLike, index) -> DiffTensor:
    """Basic or integer-array indexing; the gradient scatters back with ``np.add.at``."""
    a = as_tensor(a)
    if isinstance(index, DiffTensor):
        index = index.values.astype(np.int64)
    try:
        out = a.values[index]
    except IndexError as e:
        raise ShapeError(f"index out of range for shape {a.shape}: {e}")

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=np.float64)
        np.add.at(full, index, g)
        return (full,)

    return DiffTensor._result(np.array(out), 'getitem', (a,), grad_fn)


def layer_norm(a: TensorLike, eps: float = 1e-5) -> DiffTensor:
    """Normalize the last axis to zero mean and unit variance (no affine parameters)."""
    a = as_tensor(a)
    x = a.values.astype(np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + eps)
    xhat = (x - mu) * inv

    def grad_fn(g):
        g = g.astype(np.float64)
        g_mean = g.mean(axis=-1, keepdims=True)
        gx_mean = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - g_mean - xhat * gx_mean),)

    return DiffTensor._result(xhat.astype(a.dtype), 'layer_norm', (a,), grad_fn)


def check_finite(t: DiffTensor, what: str) -> DiffTensor:
    if not np.all(np.isfinite(t.values)):
        logging.error(f"Non-finite values in {what}")
        raise NumericError(f"Non-finite values in {what}")
    return t
