"""Minimal dense-array engine with reverse-mode differentiation."""

from .tensor import (
    DiffTensor,
    Tape,
    as_tensor,
    backward,
    current_tape,
    get_default_dtype,
    is_recording,
    no_grad,
    precision,
    zero_grad,
)
from .ops import (
    ELEMENTWISE_OPS,
    add,
    div,
    elementwise,
    exp,
    getitem,
    layer_norm,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    scale,
    softmax_rows,
    sub,
    sum,
    swap_last,
    transpose,
    check_finite,
)

__all__ = [
    'DiffTensor', 'Tape', 'as_tensor', 'backward', 'current_tape', 'get_default_dtype',
    'is_recording', 'no_grad', 'precision', 'zero_grad', 'ELEMENTWISE_OPS', 'add', 'div', 'elementwise', 'exp',
    'getitem', 'layer_norm', 'matmul', 'mean', 'mul', 'neg', 'relu', 'reshape', 'scale',
    'softmax_rows', 'sub', 'sum', 'swap_last', 'transpose', 'check_finite',
]
