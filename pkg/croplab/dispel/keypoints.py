import math
from typing import List, NamedTuple

import numpy as np

from croplab.errors import InvalidInputError


class GridPoint(NamedTuple):
    row: int
    col: int

    def flat_index(self, grid: int) -> int:
        return self.row * grid + self.col


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ceil(3 sigma)."""
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def smooth(attn_map: np.ndarray, sigma: float) -> np.ndarray:
    """
    Separable Gaussian smoothing with replicate padding.

    The output stays within [min(map), max(map)]; sigma 0 returns an unchanged copy.
    """
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    attn_map = np.asarray(attn_map, dtype=np.float64)
    if sigma == 0:
        return attn_map.copy()
    kernel = gaussian_kernel(sigma)
    radius = len(kernel) // 2
    padded = np.pad(attn_map, radius, mode='edge')
    rows = sum(w * padded[i:i + attn_map.shape[0], :] for i, w in enumerate(kernel))
    out = sum(w * rows[:, i:i + attn_map.shape[1]] for i, w in enumerate(kernel))
    return np.clip(out, attn_map.min(), attn_map.max())


def select_keypoints(attn_map: np.ndarray, K: int, min_sep: int) -> List[GridPoint]:
    """
    Greedy top-K with non-maximum suppression.

    Cells are visited by descending value (ties broken by row, then column); a cell is
    accepted when its Chebyshev distance to every accepted point is at least ``min_sep``.

    Args:
        attn_map: (grid, grid) activation map
        K: Maximum number of points
        min_sep: Minimum Chebyshev separation in cells

    Returns:
        Up to K points in acceptance order
    """
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")
    attn_map = np.asarray(attn_map)
    rows, cols = np.indices(attn_map.shape)
    rows, cols, values = rows.ravel(), cols.ravel(), attn_map.ravel()
    order = np.lexsort((cols, rows, -values))

    accepted: List[GridPoint] = []
    for i in order:
        r, c = int(rows[i]), int(cols[i])
        if all(max(abs(r - p.row), abs(c - p.col)) >= min_sep for p in accepted):
            accepted.append(GridPoint(r, c))
            if len(accepted) == K:
                break
    return accepted
