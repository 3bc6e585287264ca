from dataclasses import dataclass
from typing import Union

import numpy as np

from croplab.errors import InvalidInputError

DEFAULT_T = 50
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.3


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    DDPM noise schedule over timesteps t = 1..T.

    ``betas[t - 1]`` is the variance added at step t; ``alpha_bar(0)`` is defined as 1.
    """
    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 2:
            raise InvalidInputError("A noise schedule needs at least 2 steps")
        if not np.all((betas > 0) & (betas < 1)):
            raise InvalidInputError("betas must lie in (0, 1)")
        object.__setattr__(self, 'betas', betas)

    @classmethod
    def linear(cls, T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
               beta_end: float = DEFAULT_BETA_END) -> 'NoiseSchedule':
        return cls(np.linspace(beta_start, beta_end, T, dtype=np.float64))

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def check_t(self, t: Union[int, np.ndarray]) -> None:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise InvalidInputError(f"timestep {t.tolist()} outside 1..{self.T}")

    def alpha_bar(self, t: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        """Cumulative product up to step t (t = 0 gives 1)."""
        padded = np.concatenate([[1.0], self.alpha_bars])
        value = padded[np.asarray(t)]
        return float(value) if np.ndim(value) == 0 else value


def q_sample(x0: np.ndarray, t: Union[int, np.ndarray], noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """
    Forward noising: sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise.

    ``t`` may be a scalar or one timestep per leading batch entry of ``x0``.
    """
    schedule.check_t(t)
    ab = np.asarray(schedule.alpha_bar(t), dtype=np.float64)
    ab = ab.reshape(ab.shape + (1,) * (np.ndim(x0) - ab.ndim))
    out = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise
    return out.astype(np.result_type(np.asarray(x0).dtype, np.float32))
