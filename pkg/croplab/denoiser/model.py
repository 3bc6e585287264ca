"""
Conditional attention denoiser.

Layer order: self-attention ``self0``, cross-attention over prompt tokens ``cross``,
self-attention ``self1``. The cross layer and the last self layer feed the
:class:`AttentionRecord`; both run at the 16x16 token resolution.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from croplab.errors import InvalidInputError, NumericError, ShapeError
from croplab.gridmath import DiffTensor, as_tensor, layer_norm, relu, softmax_rows, swap_last
from croplab.scenes.prompts import PromptTokens
from .params import DenoiserParams


@dataclass
class AttentionRecord:
    """
    Attention probabilities of one forward pass, kept on the tape.

    Attributes:
        cross_probs: (B, cells, n_tokens); each row is a distribution over prompt tokens
        self_probs: (B, cells, cells); row p is the distribution query cell p spreads over all cells
        grid: Side of the token grid
    """
    cross_probs: DiffTensor
    self_probs: DiffTensor
    grid: int

    @property
    def n_tokens(self) -> int:
        return self.cross_probs.shape[-1]

    @property
    def cross(self) -> np.ndarray:
        """Per-token spatial maps of the first batch entry, shape (n_tokens, grid, grid)."""
        g = self.grid
        return np.ascontiguousarray(self.cross_probs.values[0].T).reshape(self.n_tokens, g, g)

    @property
    def self_maps(self) -> np.ndarray:
        """Per-query spatial maps of the first batch entry, shape (cells, grid, grid)."""
        g = self.grid
        return self.self_probs.values[0].reshape(g * g, g, g)

    def cross_map(self, token_index: int, batch: int = 0) -> DiffTensor:
        """Differentiable (grid, grid) map of one prompt token."""
        if not 0 <= token_index < self.n_tokens:
            raise InvalidInputError(f"token index {token_index} outside prompt of {self.n_tokens} tokens")
        return self.cross_probs[batch, :, token_index].reshape(self.grid, self.grid)

    def self_rows(self, cells: Sequence[int], batch: int = 0) -> DiffTensor:
        """Differentiable (len(cells), grid, grid) self maps for flat query cell indices."""
        cells = np.asarray(cells, dtype=np.int64)
        return self.self_probs[batch, cells, :].reshape(len(cells), self.grid, self.grid)


def _attend(h_norm: DiffTensor, context: DiffTensor, params: DenoiserParams, block: str) -> Tuple[DiffTensor, DiffTensor]:
    d = params.dims.d_model
    q = h_norm @ params[f'{block}.q']
    k = context @ params[f'{block}.k']
    v = context @ params[f'{block}.v']
    probs = softmax_rows(q @ swap_last(k), temperature=math.sqrt(d))
    return (probs @ v) @ params[f'{block}.o'], probs


def _feed_forward(h: DiffTensor, params: DenoiserParams, block: str) -> DiffTensor:
    hidden = relu(layer_norm(h) @ params[f'{block}.ff1'] + params[f'{block}.ff1_b'])
    return h + hidden @ params[f'{block}.ff2'] + params[f'{block}.ff2_b']


def _self_block(h: DiffTensor, params: DenoiserParams, block: str) -> Tuple[DiffTensor, DiffTensor]:
    h_norm = layer_norm(h)
    update, probs = _attend(h_norm, h_norm, params, block)
    return _feed_forward(h + update, params, block), probs


def _cross_block(h: DiffTensor, tokens: DiffTensor, params: DenoiserParams) -> Tuple[DiffTensor, DiffTensor]:
    update, probs = _attend(layer_norm(h), tokens, params, 'cross')
    return _feed_forward(h + update, params, 'cross'), probs


def forward_batch(z_t: Union[DiffTensor, np.ndarray], t: Union[int, Sequence[int], np.ndarray],
                  token_ids: np.ndarray, params: DenoiserParams) -> Tuple[DiffTensor, AttentionRecord]:
    """
    Predict the noise in a batch of latents.

    Args:
        z_t: (B, H, W) latents
        t: One timestep for the whole batch or one per entry, each in 1..T
        token_ids: (B, prompt_length) vocabulary ids
        params: Denoiser parameters

    Returns:
        eps_pred with the shape of z_t and the attention record of the batch
    """
    dims = params.dims
    z_t = as_tensor(z_t)
    if z_t.ndim != 3 or z_t.shape[1:] != (dims.image_size, dims.image_size):
        raise ShapeError(f"latent batch must be (B, {dims.image_size}, {dims.image_size}), got {z_t.shape}")
    if not np.all(np.isfinite(z_t.values)):
        raise NumericError("denoiser received a non-finite latent")
    batch = z_t.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (batch,))
    if np.any(t < 1) or np.any(t > dims.n_steps):
        raise InvalidInputError(f"timestep {t.tolist()} outside 1..{dims.n_steps}")
    token_ids = np.asarray(token_ids, dtype=np.int64).reshape(batch, -1)

    g, p, d = dims.grid, dims.patch, dims.d_model
    patches = z_t.reshape(batch, g, p, g, p).transpose(0, 1, 3, 2, 4).reshape(batch, g * g, p * p)
    h = patches @ params['patch.w'] + params['patch.b'] + params['pos']
    h = h + params['time'][t - 1].reshape(batch, 1, d)
    context = params['token'][token_ids]

    h, _ = _self_block(h, params, 'self0')
    h, cross_probs = _cross_block(h, context, params)
    h, self_probs = _self_block(h, params, 'self1')

    out = layer_norm(h) @ params['out.w'] + params['out.b']
    eps = out.reshape(batch, g, g, p, p).transpose(0, 1, 3, 2, 4).reshape(batch, g * p, g * p)
    return eps, AttentionRecord(cross_probs, self_probs, g)


def forward(z_t: Union[DiffTensor, np.ndarray], t: int, tokens: PromptTokens,
            params: DenoiserParams) -> Tuple[DiffTensor, AttentionRecord]:
    """
    Single-latent forward pass.

    ``eps_pred`` has the shape of ``z_t``; any scalar derived from the record can be
    backpropagated to ``z_t`` when ``z_t`` requires gradients.
    """
    z_t = as_tensor(z_t)
    size = params.dims.image_size
    if z_t.shape != (size, size):
        raise ShapeError(f"latent must be ({size}, {size}), got {z_t.shape}")
    eps, record = forward_batch(z_t.reshape(1, size, size), t, np.asarray([tokens.token_ids]), params)
    return eps.reshape(size, size), record
