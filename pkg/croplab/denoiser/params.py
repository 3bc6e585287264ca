import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional

import numpy as np

from croplab.errors import InvalidInputError, NumericError, ShapeError
from croplab.gridmath import DiffTensor
from croplab.scenes.prompts import PROMPT_LENGTH, VOCABULARY
from croplab.utils import make_rng

ATTENTION_BLOCKS = ('self0', 'cross', 'self1')
SELF_BLOCKS = ('self0', 'self1')


@dataclass(frozen=True)
class ModelDims:
    """
    Static shape description of a denoiser.

    Attributes:
        d_model: Width of every token embedding
        grid: Side of the attention grid (16 -> 256 image tokens)
        image_size: Side of the pixel latent; must be a multiple of ``grid``
        vocab_size: Rows of the token embedding table
        n_steps: Rows of the timestep embedding table (= schedule T)
        prompt_length: Tokens per prompt
    """
    d_model: int = 64
    grid: int = 16
    image_size: int = 32
    vocab_size: int = len(VOCABULARY)
    n_steps: int = 50
    prompt_length: int = PROMPT_LENGTH

    def __post_init__(self):
        if self.d_model < 2 or self.d_model % 2:
            raise InvalidInputError(f"d_model must be an even number >= 2, got {self.d_model}")
        if self.grid < 1 or self.image_size % self.grid:
            raise InvalidInputError(f"image size {self.image_size} is not a multiple of grid {self.grid}")
        if self.n_steps < 2:
            raise InvalidInputError(f"n_steps must be >= 2, got {self.n_steps}")

    @property
    def patch(self) -> int:
        return self.image_size // self.grid

    @property
    def n_cells(self) -> int:
        return self.grid * self.grid

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)

    def shapes(self) -> Dict[str, tuple]:
        """Expected shape of every named parameter."""
        d, p2 = self.d_model, self.patch * self.patch
        shapes = {
            'patch.w': (p2, d),
            'patch.b': (d,),
            'pos': (self.n_cells, d),
            'time': (self.n_steps, d),
            'token': (self.vocab_size, d),
        }
        for block in ATTENTION_BLOCKS:
            for proj in ('q', 'k', 'v', 'o'):
                shapes[f'{block}.{proj}'] = (d, d)
            shapes[f'{block}.ff1'] = (d, 2 * d)
            shapes[f'{block}.ff1_b'] = (2 * d,)
            shapes[f'{block}.ff2'] = (2 * d, d)
            shapes[f'{block}.ff2_b'] = (d,)
        shapes['out.w'] = (d, p2)
        shapes['out.b'] = (p2,)
        return shapes


def _sinusoid(positions: np.ndarray, width: int) -> np.ndarray:
    freqs = np.exp(-math.log(100.0) * np.arange(width // 2) / max(1, width // 2))
    angles = positions[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def _grid_encoding(grid: int, d_model: int) -> np.ndarray:
    rows, cols = np.divmod(np.arange(grid * grid), grid)
    half = d_model // 2
    return np.concatenate([_sinusoid(rows.astype(np.float64), half),
                           _sinusoid(cols.astype(np.float64), d_model - half)], axis=1)


class DenoiserParams:
    """
    Named trainable tensors of the denoiser.

    Parameters are leaves that require gradients. Optimizers replace ``values`` wholesale
    between tapes via :meth:`assign`; nothing mutates an array in place.
    """

    def __init__(self, dims: ModelDims, tensors: Dict[str, DiffTensor]):
        expected = dims.shapes()
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ShapeError(f"parameter names mismatch (missing={missing}, unexpected={extra})")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ShapeError(f"parameter {name} has shape {tensors[name].shape}, expected {shape}")
        self.dims = dims
        self.tensors = tensors

    @classmethod
    def init(cls, dims: ModelDims, seed: int = 0, init_scale: float = 0.02) -> 'DenoiserParams':
        """
        Seeded initialization.

        Projections are drawn from N(0, 1/fan_in); positional and timestep tables start from
        sinusoidal codes; the token table and the output head start at ``init_scale``.
        """
        rng = make_rng(seed, 'params')
        d = dims.d_model
        arrays: Dict[str, np.ndarray] = {}
        for name, shape in dims.shapes().items():
            if name.endswith('.b') or name.endswith('_b'):
                arrays[name] = np.zeros(shape)
            elif name == 'pos':
                arrays[name] = _grid_encoding(dims.grid, d)
            elif name == 'time':
                arrays[name] = _sinusoid(np.arange(1, dims.n_steps + 1, dtype=np.float64), d)
            elif name in ('token', 'out.w'):
                arrays[name] = rng.normal(0.0, init_scale, size=shape)
            else:
                arrays[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), size=shape)
        return cls.from_arrays(dims, arrays)

    @classmethod
    def from_arrays(cls, dims: ModelDims, arrays: Dict[str, np.ndarray], dtype=None) -> 'DenoiserParams':
        dtype = dtype or np.float32
        return cls(dims, {name: DiffTensor(a, requires_grad=True, dtype=dtype) for name, a in arrays.items()})

    def __getitem__(self, name: str) -> DiffTensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[DiffTensor]:
        return iter(self.tensors[name] for name in self.names())

    def names(self) -> List[str]:
        return sorted(self.tensors)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: self.tensors[name].numpy() for name in self.names()}

    def assign(self, name: str, values: np.ndarray) -> None:
        tensor = self.tensors[name]
        if values.shape != tensor.shape:
            raise ShapeError(f"cannot assign shape {values.shape} to parameter {name} {tensor.shape}")
        new = np.array(values, dtype=tensor.dtype)
        new.setflags(write=False)
        tensor.values = new
        tensor.grad = None

    def frozen(self) -> 'DenoiserParams':
        """Same values without gradient tracking, for passes that differentiate only the input."""
        return DenoiserParams(self.dims, {name: t.detach() for name, t in self.tensors.items()})

    def copy(self) -> 'DenoiserParams':
        return self.astype(None)

    def astype(self, dtype: Optional[np.dtype]) -> 'DenoiserParams':
        arrays = self.arrays()
        return DenoiserParams.from_arrays(self.dims, arrays, dtype=dtype or next(iter(self)).dtype)

    def zero_grad(self) -> None:
        for tensor in self:
            tensor.grad = None

    def check_finite(self) -> None:
        for name in self.names():
            if not np.all(np.isfinite(self.tensors[name].values)):
                raise NumericError(f"parameter {name} holds non-finite values")

    def equals(self, other: 'DenoiserParams') -> bool:
        """Bit-exact comparison of dims and every array."""
        if self.dims != other.dims or self.names() != other.names():
            return False
        return all(np.array_equal(self[n].values, other[n].values) for n in self.names())

    def count(self) -> int:
        return sum(t.size for t in self)
