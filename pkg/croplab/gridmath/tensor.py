"""
Dense tensors with tape-based reverse-mode differentiation.

Every differentiable primitive in :mod:`croplab.gridmath.ops` appends one record to the
active :class:`Tape`. :func:`backward` walks that tape in reverse order and accumulates
gradients into the ``grad`` buffer of every tensor that requires them. Outside a
``with Tape()`` block nothing is recorded and results behave as under :func:`no_grad`.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from croplab.errors import UsageError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def get_default_dtype() -> np.dtype:
    return getattr(_state, 'dtype', np.dtype(np.float32))


@contextmanager
def precision(dtype):
    """Temporarily change the storage dtype of newly created tensors (float64 for gradient checks)."""
    previous = get_default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


def is_recording() -> bool:
    """True when ops record onto a tape: a Tape is active and no_grad is not."""
    return getattr(_state, 'recording', True) and bool(_tape_stack())


@contextmanager
def no_grad():
    """Disable tape recording; results of ops inside the block do not require gradients."""
    previous = getattr(_state, 'recording', True)
    _state.recording = False
    try:
        yield
    finally:
        _state.recording = previous


class TapeRecord:
    __slots__ = ('op', 'output', 'inputs', 'backward_fn')

    def __init__(self, op: str, output: 'DiffTensor', inputs: Tuple['DiffTensor', ...], backward_fn: BackwardFn):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """
    Ordered recording of primitive operations.

    Records are appended after their inputs exist, so the list is always in topological
    order. A tape belongs to one thread; use it as a context manager to scope recording:

        with Tape():
            y = ops.sum(ops.mul(x, x))
            backward(y)
    """

    def __init__(self):
        self.records: List[TapeRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> 'Tape':
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def record(self, op: str, output: 'DiffTensor', inputs: Tuple['DiffTensor', ...], backward_fn: BackwardFn) -> None:
        output.tape_id = len(self.records)
        output._tape = self
        self.records.append(TapeRecord(op, output, inputs, backward_fn))

    def clear(self) -> None:
        for record in self.records:
            record.output._tape = None
        self.records.clear()


def _tape_stack() -> List[Tape]:
    stack = getattr(_state, 'tapes', None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def current_tape() -> Optional[Tape]:
    """Innermost active tape of this thread, or None outside any ``with Tape()`` block."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class DiffTensor:
    """
    Dense array participating in reverse-mode differentiation.

    Attributes:
        values: Row-major numpy array holding the data (float32 unless a wider precision is active)
        grad: Same-shape gradient buffer, ``None`` until a backward pass reaches the tensor
        requires_grad: Whether gradients are tracked for this tensor
        tape_id: Position of the producing record on its tape (``None`` for leaves)
    """

    __array_priority__ = 100

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        self.values = np.array(values, dtype=dtype or get_default_dtype(), copy=True)
        self.values.setflags(write=False)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.tape_id: Optional[int] = None
        self._tape: Optional[Tape] = None

    @classmethod
    def _result(cls, values: np.ndarray, op: str, inputs: Tuple['DiffTensor', ...], backward_fn: BackwardFn) -> 'DiffTensor':
        out = cls.__new__(cls)
        out.values = np.ascontiguousarray(values)
        out.values.setflags(write=False)
        out.requires_grad = is_recording() and any(t.requires_grad for t in inputs)
        out.grad = None
        out.tape_id = None
        out._tape = None
        if out.requires_grad:
            current_tape().record(op, out, inputs, backward_fn)
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def numpy(self) -> np.ndarray:
        return np.array(self.values)

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> 'DiffTensor':
        """Non-differentiable tensor sharing the same read-only values."""
        out = DiffTensor.__new__(DiffTensor)
        out.values = self.values
        out.requires_grad = False
        out.grad = None
        out.tape_id = None
        out._tape = None
        return out

    def __repr__(self) -> str:
        flag = ', requires_grad=True' if self.requires_grad else ''
        return f"DiffTensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # Operator sugar; implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value) -> DiffTensor:
    """Wrap constants (scalars, arrays) as non-differentiable tensors."""
    if isinstance(value, DiffTensor):
        return value
    return DiffTensor(value)


def backward(root: DiffTensor) -> None:
    """
    Backpropagate from a scalar root.

    Gradients are added to the existing ``grad`` buffers of every tensor reachable from
    ``root``; call :func:`zero_grad` first to start from zero.

    Raises:
        UsageError: If ``root`` is not a scalar
    """
    if root.size != 1:
        raise UsageError(f"backward() needs a scalar root, got shape {root.shape}")

    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.values)}
    keep: Dict[int, DiffTensor] = {id(root): root}

    tape = root._tape
    if tape is not None and root.tape_id is not None:
        for record in reversed(tape.records[:root.tape_id + 1]):
            g_out = grads.get(id(record.output))
            if g_out is None:
                continue
            input_grads = record.backward_fn(g_out)
            for tensor, g in zip(record.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                g = np.asarray(g, dtype=tensor.values.dtype)
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                    keep[key] = tensor

    for key, g in grads.items():
        tensor = keep[key]
        tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


def zero_grad(tensors: Iterable[DiffTensor]) -> None:
    for tensor in tensors:
        tensor.zero_grad()
