"""Boundary-dispelling guidance built from cross- and self-attention maps."""

from .config import GuidanceConfig, StepDecay
from .regions import RegionMask, sample_regions
from .keypoints import GridPoint, gaussian_kernel, select_keypoints, smooth
from .loss import average_self_maps, dispelling_loss, extract_cross_map
from .guidance import GuidanceLosses, evaluate_dispelling, guidance_step, should_apply

__all__ = [
    'GuidanceConfig', 'StepDecay', 'RegionMask', 'sample_regions', 'GridPoint', 'gaussian_kernel',
    'select_keypoints', 'smooth', 'average_self_maps', 'dispelling_loss', 'extract_cross_map',
    'GuidanceLosses', 'evaluate_dispelling', 'guidance_step', 'should_apply',
]
