from dataclasses import dataclass
from typing import Tuple

import numpy as np

from croplab.errors import InvalidInputError
from croplab.metrics.attention import band_mask
from .config import GuidanceConfig


@dataclass(frozen=True, eq=False)
class RegionMask:
    """
    Boundary band ``sur`` and internal window ``inter`` of the attention grid.

    Both are boolean (grid, grid) arrays and never overlap.
    """
    sur: np.ndarray
    inter: np.ndarray

    def __post_init__(self):
        if self.sur.shape != self.inter.shape:
            raise InvalidInputError(f"region shapes differ: {self.sur.shape} vs {self.inter.shape}")
        if np.any(self.sur & self.inter):
            raise InvalidInputError("surrounding and internal regions overlap")

    @property
    def counts(self) -> Tuple[int, int]:
        return int(self.sur.sum()), int(self.inter.sum())

    @property
    def inter_offset(self) -> Tuple[int, int]:
        rows, cols = np.nonzero(self.inter)
        return int(rows.min()), int(cols.min())

    def weights(self, alpha: float, beta: float) -> np.ndarray:
        """Cell weights W such that sum(map * W) = alpha * mean(map[sur]) - beta * mean(map[inter])."""
        n_sur, n_inter = self.counts
        if n_sur == 0 or n_inter == 0:
            raise InvalidInputError(f"empty region (|sur|={n_sur}, |inter|={n_inter})")
        return alpha * self.sur / n_sur - beta * self.inter / n_inter


def sample_regions(cfg: GuidanceConfig, rng: np.random.Generator) -> RegionMask:
    """
    Fixed boundary band plus an internal square window at a uniform random offset.

    The window has side ``cfg.inner_side`` and lies fully inside the band's complement.
    """
    sur = band_mask(cfg.grid, cfg.band_width)
    side = cfg.inner_side
    if side < 1 or side > cfg.interior:
        raise InvalidInputError(f"internal window of side {side} does not fit a {cfg.interior}-cell interior")
    slack = cfg.interior - side
    row, col = rng.integers(0, slack + 1, size=2)
    inter = np.zeros_like(sur)
    top, left = cfg.band_width + row, cfg.band_width + col
    inter[top:top + side, left:left + side] = True
    return RegionMask(sur, inter)
