from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict

from croplab.errors import InvalidInputError


class StepDecay(str, Enum):
    LINEAR_TO_ZERO_AT_T1 = 'linear_to_zero_at_T1'
    CONSTANT = 'constant'


@dataclass(frozen=True)
class GuidanceConfig:
    """
    Hyperparameters of the boundary-dispelling guidance.

    Attributes:
        alpha: Weight of the mean activation over the boundary band
        beta: Weight of the mean activation over the random internal window
        K: Number of key points whose self-attention maps are averaged
        T1: Guidance fires at steps t > T1
        alpha_t_start: Latent step size at t = T
        alpha_t_decay: How the step size shrinks towards T1
        sigma: Gaussian smoothing std (grid cells) used for key-point selection
        band_width: Width of the boundary band in grid cells
        inner_frac: Side of the internal window as a fraction of the band's complement
        min_sep: Minimum Chebyshev distance between key points
        use_cross: Include the cross-attention term
        use_self: Include the self-attention term
        seed: Root seed of the region draws
        grid: Side of the attention grid
    """
    alpha: float = 1.2
    beta: float = 0.4
    K: int = 10
    T1: int = 45
    alpha_t_start: float = 40.0
    alpha_t_decay: str = StepDecay.LINEAR_TO_ZERO_AT_T1.value
    sigma: float = 1.0
    band_width: int = 2
    inner_frac: float = 0.5
    min_sep: int = 2
    use_cross: bool = True
    use_self: bool = True
    seed: int = 0
    grid: int = 16

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInputError(f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}")
        if not 1 <= self.K <= self.grid * self.grid:
            raise InvalidInputError(f"K must lie in 1..{self.grid * self.grid}, got {self.K}")
        if self.T1 <= 0:
            raise InvalidInputError(f"T1 must be > 0, got {self.T1}")
        if self.alpha_t_start < 0:
            raise InvalidInputError(f"alpha_t_start must be >= 0, got {self.alpha_t_start}")
        if self.alpha_t_decay not in {d.value for d in StepDecay}:
            raise InvalidInputError(f"Unknown alpha_t_decay '{self.alpha_t_decay}'")
        if self.sigma < 0:
            raise InvalidInputError(f"sigma must be >= 0, got {self.sigma}")
        if not 1 <= self.band_width <= (self.grid - 1) // 2:
            raise InvalidInputError(f"band_width must lie in 1..{(self.grid - 1) // 2}, got {self.band_width}")
        if not 0 < self.inner_frac <= 1:
            raise InvalidInputError(f"inner_frac must lie in (0, 1], got {self.inner_frac}")
        if self.inner_side < 1:
            raise InvalidInputError(f"inner_frac {self.inner_frac} yields an empty internal region")
        if self.min_sep < 0:
            raise InvalidInputError(f"min_sep must be >= 0, got {self.min_sep}")

    @property
    def interior(self) -> int:
        return self.grid - 2 * self.band_width

    @property
    def inner_side(self) -> int:
        return int(round(self.inner_frac * self.interior))

    def check_steps(self, T: int) -> None:
        if not 0 < self.T1 < T:
            raise InvalidInputError(f"T1 must satisfy 0 < T1 < T, got T1={self.T1}, T={T}")

    def step_size(self, t: int, T: int) -> float:
        """Latent step size alpha_t; zero whenever guidance is gated off."""
        if t <= self.T1:
            return 0.0
        if self.alpha_t_decay == StepDecay.CONSTANT.value:
            return float(self.alpha_t_start)
        return float(self.alpha_t_start) * (t - self.T1) / (T - self.T1)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
