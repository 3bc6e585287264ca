from typing import Optional, Sequence, Union

import numpy as np

from croplab.denoiser.model import AttentionRecord
from croplab.errors import InvalidInputError, ShapeError
from croplab.gridmath import DiffTensor, as_tensor, mean, mul, sum as tensor_sum
from croplab.scenes.prompts import PromptTokens
from .keypoints import GridPoint
from .regions import RegionMask


def extract_cross_map(record: AttentionRecord, tokens: PromptTokens,
                      token_index: Optional[int] = None) -> DiffTensor:
    """Differentiable spatial map of the object token (or of ``token_index``)."""
    index = tokens.object_token_index if token_index is None else token_index
    if not 0 <= index < record.n_tokens:
        raise InvalidInputError(f"object token index {index} outside prompt of {record.n_tokens} tokens")
    return record.cross_map(index)


def average_self_maps(record: AttentionRecord, points: Sequence[GridPoint]) -> DiffTensor:
    """Mean of the self-attention maps queried at ``points``."""
    if not points:
        raise InvalidInputError("average_self_maps needs at least one key point")
    cells = [p.flat_index(record.grid) for p in points]
    return mean(record.self_rows(cells), axis=0)


def dispelling_loss(attn_map: Union[DiffTensor, np.ndarray], mask: RegionMask,
                    alpha: float, beta: float) -> DiffTensor:
    """
    alpha * mean(map over sur) - beta * mean(map over inter), kept on the tape.

    Raises:
        ShapeError: If the map and mask grids differ
        InvalidInputError: If either region is empty
    """
    attn_map = as_tensor(attn_map)
    if attn_map.shape != mask.sur.shape:
        raise ShapeError(f"map shape {attn_map.shape} does not match region grid {mask.sur.shape}")
    weights = mask.weights(alpha, beta)
    return tensor_sum(mul(attn_map, weights.astype(attn_map.dtype)))
