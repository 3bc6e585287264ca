import numpy as np

from croplab.errors import InvalidInputError


def band_mask(grid: int, band_width: int) -> np.ndarray:
    """Cells within ``band_width`` of any edge of a grid x grid map."""
    if not 1 <= band_width <= (grid - 1) // 2:
        raise InvalidInputError(f"band_width {band_width} infeasible for a {grid}x{grid} grid")
    mask = np.zeros((grid, grid), dtype=bool)
    mask[:band_width, :] = True
    mask[-band_width:, :] = True
    mask[:, :band_width] = True
    mask[:, -band_width:] = True
    return mask


def boundary_attention_mass(attn_map: np.ndarray, band_width: int = 2) -> float:
    """
    Fraction of an attention map's mass lying in the boundary band.

    Raises:
        InvalidInputError: If the band is infeasible or the map sums to zero
    """
    attn_map = np.asarray(attn_map, dtype=np.float64)
    band = band_mask(attn_map.shape[0], band_width)
    total = attn_map.sum()
    if total == 0:
        raise InvalidInputError("boundary_attention_mass of a zero-sum map is undefined")
    return float(attn_map[band].sum() / total)
