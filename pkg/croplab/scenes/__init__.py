"""Synthetic single-object scenes and the RandomCrop augmentation pipeline."""

from .prompts import (
    OBJECT_CLASSES,
    PROMPT_LENGTH,
    TEMPLATES,
    VOCABULARY,
    ObjectClass,
    PromptTokens,
    make_multi_prompt,
    make_prompt,
)
from .render import SceneSpec, rasterize, render_scene, shape_mask
from .augment import AugmentMode, AugmentPolicy, apply_policy, crop_resize, random_crop
from .dataset import (
    LabeledImage,
    dataset_frame,
    export_dataset,
    load_dataset_dir,
    make_dataset,
    sample_scene,
)

__all__ = [
    'OBJECT_CLASSES', 'PROMPT_LENGTH', 'TEMPLATES', 'VOCABULARY', 'ObjectClass', 'PromptTokens',
    'make_multi_prompt', 'make_prompt', 'SceneSpec', 'rasterize', 'render_scene', 'shape_mask',
    'AugmentMode', 'AugmentPolicy', 'apply_policy', 'crop_resize', 'random_crop',
    'LabeledImage', 'dataset_frame', 'export_dataset', 'load_dataset_dir', 'make_dataset',
    'sample_scene',
]
