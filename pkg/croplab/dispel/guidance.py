"""
Latent update pushing object activation away from the image boundary.

One guided step runs the denoiser on a fresh tape, scores the object token's cross-attention
map and the averaged self-attention maps of its key points with the dispelling loss, and
moves the latent against the gradient of the total.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from croplab.denoiser.model import AttentionRecord, forward
from croplab.denoiser.params import DenoiserParams
from croplab.errors import NumericError
from croplab.gridmath import DiffTensor, Tape, backward, no_grad
from croplab.scenes.prompts import PromptTokens
from .config import GuidanceConfig
from .keypoints import GridPoint, select_keypoints, smooth
from .loss import average_self_maps, dispelling_loss, extract_cross_map
from .regions import RegionMask, sample_regions


def should_apply(t: int, T1: int) -> bool:
    return t > T1


@dataclass
class GuidanceLosses:
    """
    Outcome of one guided step.

    ``keypoints`` maps each object token index to its selected points; the masks are kept
    so the same objective can be re-evaluated at the updated latent. ``forward_calls`` is 0
    when both terms are ablated and the step never runs the denoiser.
    """
    l_cross: float
    l_self: float
    grad_norm: float
    step_size: float
    cross_mask: RegionMask
    self_mask: RegionMask
    keypoints: Dict[int, List[GridPoint]] = field(default_factory=dict)
    forward_calls: int = 1

    @property
    def total(self) -> float:
        return self.l_cross + self.l_self


def _dispelling_terms(record: AttentionRecord, tokens: PromptTokens, cfg: GuidanceConfig,
                      cross_mask: RegionMask, self_mask: RegionMask,
                      keypoints: Optional[Dict[int, List[GridPoint]]] = None):
    """Summed cross and self terms over every object token; either may be None when ablated."""
    l_cross: Optional[DiffTensor] = None
    l_self: Optional[DiffTensor] = None
    chosen: Dict[int, List[GridPoint]] = {}
    for index in tokens.object_indices:
        cross_map = extract_cross_map(record, tokens, index)
        if cfg.use_cross:
            term = dispelling_loss(cross_map, cross_mask, cfg.alpha, cfg.beta)
            l_cross = term if l_cross is None else l_cross + term
        if cfg.use_self:
            if keypoints is not None:
                points = keypoints[index]
            else:
                points = select_keypoints(smooth(cross_map.values, cfg.sigma), cfg.K, cfg.min_sep)
            chosen[index] = points
            term = dispelling_loss(average_self_maps(record, points), self_mask, cfg.alpha, cfg.beta)
            l_self = term if l_self is None else l_self + term
    return l_cross, l_self, chosen


def guidance_step(z_t: Union[DiffTensor, np.ndarray], t: int, tokens: PromptTokens, params: DenoiserParams,
                  cfg: GuidanceConfig, rng: np.random.Generator) -> Tuple[np.ndarray, GuidanceLosses]:
    """
    One dispelling update z'_t = z_t - alpha_t * grad(L_cross + L_self).

    Args:
        z_t: Current latent (H, W)
        t: Timestep; gating on ``t > cfg.T1`` is the caller's job
        tokens: Prompt, every object token contributes its own terms
        params: Denoiser parameters
        cfg: Guidance hyperparameters
        rng: Stream for the two region draws of this step

    Returns:
        The updated latent and the loss values measured at z_t

    Raises:
        NumericError: If the gradient is non-finite
    """
    values = z_t.values if isinstance(z_t, DiffTensor) else np.asarray(z_t)
    T = params.dims.n_steps
    cfg.check_steps(T)
    cross_mask = sample_regions(cfg, rng)
    self_mask = sample_regions(cfg, rng)
    step_size = cfg.step_size(t, T)

    if not (cfg.use_cross or cfg.use_self):
        return values.copy(), GuidanceLosses(0.0, 0.0, 0.0, step_size, cross_mask, self_mask, forward_calls=0)

    z = DiffTensor(values, requires_grad=True, dtype=values.dtype)
    with Tape():
        _, record = forward(z, t, tokens, params.frozen())
        l_cross, l_self, keypoints = _dispelling_terms(record, tokens, cfg, cross_mask, self_mask)
        total = l_cross if l_self is None else (l_self if l_cross is None else l_cross + l_self)
        backward(total)

    grad = z.grad if z.grad is not None else np.zeros_like(values)
    if not np.all(np.isfinite(grad)):
        logging.error(f"Non-finite guidance gradient at step t={t}")
        raise NumericError(f"Non-finite guidance gradient at step t={t}")

    updated = values.copy() if step_size == 0 else (values - step_size * grad).astype(values.dtype)
    losses = GuidanceLosses(
        l_cross=0.0 if l_cross is None else l_cross.item(),
        l_self=0.0 if l_self is None else l_self.item(),
        grad_norm=float(np.linalg.norm(grad)),
        step_size=step_size,
        cross_mask=cross_mask,
        self_mask=self_mask,
        keypoints=keypoints,
    )
    logging.debug(f"Guided step t={t}: L_cross={losses.l_cross:.5f} L_self={losses.l_self:.5f} "
                  f"|grad|={losses.grad_norm:.3e} alpha_t={step_size:.3f}")
    return updated, losses


def evaluate_dispelling(z_t: np.ndarray, t: int, tokens: PromptTokens, params: DenoiserParams,
                        cfg: GuidanceConfig, losses: GuidanceLosses) -> float:
    """Re-evaluate L_cross + L_self at ``z_t`` with the masks and key points of a previous step."""
    with no_grad():
        _, record = forward(np.asarray(z_t), t, tokens, params)
        l_cross, l_self, _ = _dispelling_terms(record, tokens, cfg, losses.cross_mask, losses.self_mask,
                                               keypoints=losses.keypoints)
    return sum(term.item() for term in (l_cross, l_self) if term is not None)
