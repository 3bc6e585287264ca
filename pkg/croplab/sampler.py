"""
Reverse diffusion (DDPM and deterministic DDIM) with the dispelling guidance hook.

At each step t = T..1 the sampler predicts the noise and advances the latent. On guided
steps the latent is first moved by :func:`croplab.dispel.guidance_step` and the noise is then
predicted again from the moved latent, so a guided step costs two denoiser calls.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from croplab.denoiser import DenoiserParams, NoiseSchedule, forward
from croplab.dispel import GuidanceConfig, guidance_step, should_apply
from croplab.errors import InvalidInputError, NumericError
from croplab.gridmath import no_grad
from croplab.scenes.prompts import PromptTokens
from croplab.utils import export_output, make_rng, write_pgm

TRACE_COLUMNS = ['step', 'guidance_fired', 'L_cross', 'L_self', 'grad_norm', 'alpha_t']


class SamplerVariant(str, Enum):
    DDPM = 'ddpm'
    DDIM = 'ddim'


@dataclass(frozen=True)
class SamplerConfig:
    """
    Attributes:
        schedule: Noise schedule; its length is T
        variant: 'ddpm' (stochastic) or 'ddim' (deterministic, eta = 0)
        seed: Root seed of the initial latent and of DDPM noise
        guidance: Optional dispelling guidance
        snapshot_steps: Steps at which the object-token cross-attention map is stored
    """
    schedule: NoiseSchedule
    variant: str = SamplerVariant.DDIM.value
    seed: int = 0
    guidance: Optional[GuidanceConfig] = None
    snapshot_steps: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.variant not in {v.value for v in SamplerVariant}:
            raise InvalidInputError(f"Unknown sampler variant '{self.variant}'")
        if self.T < 2:
            raise InvalidInputError(f"T must be >= 2, got {self.T}")
        if self.guidance is not None:
            self.guidance.check_steps(self.T)

    @property
    def T(self) -> int:
        return self.schedule.T


@dataclass
class StepTrace:
    """Per-step record of one sampling run (steps in execution order, T first)."""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    forward_calls: int = 0
    seconds: float = 0.0
    snapshots: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def fired_steps(self) -> List[int]:
        return [row['step'] for row in self.rows if row['guidance_fired']]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRACE_COLUMNS)


def reverse_step(z_t: np.ndarray, t: int, eps_pred: np.ndarray, cfg: SamplerConfig,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Advance the latent from step t to t - 1.

    DDIM uses the deterministic update; DDPM uses the posterior mean plus noise with
    variance beta_tilde_t, which vanishes at t = 1.

    Raises:
        InvalidInputError: If t is outside 1..T or DDPM needs noise but no rng is given
        NumericError: If the latent or the prediction is non-finite
    """
    schedule = cfg.schedule
    schedule.check_t(t)
    if not (np.all(np.isfinite(z_t)) and np.all(np.isfinite(eps_pred))):
        raise NumericError(f"non-finite latent or noise prediction at step t={t}")
    z = np.asarray(z_t, dtype=np.float64)
    eps = np.asarray(eps_pred, dtype=np.float64)
    ab_t, ab_prev = schedule.alpha_bar(t), schedule.alpha_bar(t - 1)

    if cfg.variant == SamplerVariant.DDIM.value:
        x0 = (z - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
        out = np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps
    else:
        beta_t = schedule.betas[t - 1]
        out = (z - beta_t / np.sqrt(1.0 - ab_t) * eps) / np.sqrt(1.0 - beta_t)
        if t > 1:
            if rng is None:
                raise InvalidInputError("DDPM sampling needs a random generator")
            variance = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t
            out = out + np.sqrt(variance) * rng.standard_normal(size=z.shape)
    return out.astype(np.asarray(z_t).dtype)


def initial_latent(cfg: SamplerConfig, size: int, index: int = 0) -> np.ndarray:
    return make_rng(cfg.seed, 'latent', index).standard_normal(size=(size, size)).astype(np.float32)


def sample(tokens: PromptTokens, params: DenoiserParams, cfg: SamplerConfig, index: int = 0,
           z_T: Optional[np.ndarray] = None) -> Tuple[np.ndarray, StepTrace]:
    """
    Generate one image.

    Args:
        tokens: Prompt
        params: Denoiser parameters
        cfg: Sampler configuration (guidance included)
        index: Sample index; seeds the initial latent, DDPM noise and region draws
        z_T: Optional explicit starting latent

    Returns:
        Image clamped to [0, 1] and the step trace
    """
    start = time.time()
    if params.dims.n_steps != cfg.T:
        raise InvalidInputError(f"model was trained for {params.dims.n_steps} steps, sampler uses {cfg.T}")
    z = initial_latent(cfg, params.dims.image_size, index) if z_T is None else np.asarray(z_T, dtype=np.float32)
    noise_rng = make_rng(cfg.seed, 'ddpm', index)
    guidance = cfg.guidance
    trace = StepTrace()

    for t in range(cfg.T, 0, -1):
        row = {'step': t, 'guidance_fired': False, 'L_cross': '', 'L_self': '', 'grad_norm': '', 'alpha_t': ''}
        if guidance is not None and should_apply(t, guidance.T1):
            z, losses = guidance_step(z, t, tokens, params, guidance,
                                      make_rng(guidance.seed, 'regions', index, t))
            trace.forward_calls += losses.forward_calls
            if not np.isfinite(losses.total):
                raise NumericError(f"non-finite guidance loss at step t={t}")
            row.update(guidance_fired=True, L_cross=losses.l_cross, L_self=losses.l_self,
                       grad_norm=losses.grad_norm, alpha_t=losses.step_size)

        with no_grad():
            eps, record = forward(z, t, tokens, params)
        trace.forward_calls += 1
        if t in cfg.snapshot_steps:
            trace.snapshots[t] = record.cross[tokens.object_token_index].copy()
        z = reverse_step(z, t, eps.values, cfg, noise_rng)
        trace.rows.append(row)

    trace.seconds = time.time() - start
    logging.debug(f"Sample {index} done with {trace.forward_calls} forward calls "
                  f"({trace.seconds:.2f} seconds)")
    return np.clip(z, 0.0, 1.0), trace


def sample_many(prompts: Sequence[PromptTokens], params: DenoiserParams, cfg: SamplerConfig,
                start_index: int = 0) -> List[Tuple[np.ndarray, StepTrace]]:
    """Sample prompts[i] with sample index ``start_index + i``."""
    return [sample(tokens, params, cfg, start_index + i) for i, tokens in enumerate(prompts)]


def export_sample(image: np.ndarray, trace: Optional[StepTrace], out_dir: str, index: int) -> Dict[str, str]:
    """Write ``samples/{index}.pgm`` plus the optional trace CSV and attention snapshots."""
    paths = {'image': write_pgm(image, os.path.join(out_dir, 'samples', f'{index:06d}.pgm'))}
    if trace is not None:
        paths['trace'] = export_output(trace.to_frame(), os.path.join(out_dir, 'traces', f'{index:06d}.csv'))
        for step, attn in sorted(trace.snapshots.items()):
            scaled = attn / attn.max() if attn.max() > 0 else attn
            write_pgm(scaled, os.path.join(out_dir, 'attention', f'{index:06d}_t{step:03d}.pgm'))
    return paths
