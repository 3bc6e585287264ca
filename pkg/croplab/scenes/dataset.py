import os
import time
import logging
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from croplab.errors import InvalidInputError
from croplab.metrics.completeness import border_contact
from croplab.utils import export_output, make_rng, read_pgm, write_pgm
from .augment import AugmentPolicy, apply_policy
from .prompts import OBJECT_CLASSES, PromptTokens, make_prompt
from .render import MIN_MARGIN_PX, RADIUS_RANGE, SceneSpec, render_scene

MANIFEST_NAME = 'manifest.csv'
IMAGE_DIR = 'images'


class LabeledImage(NamedTuple):
    image: np.ndarray
    tokens: PromptTokens
    spec: SceneSpec
    cropped: bool = False
    template: str = 'plain'


def sample_scene(rng: np.random.Generator, object_class: str, size: int,
                 radius_range: Tuple[float, float] = RADIUS_RANGE) -> SceneSpec:
    """Draw a scene whose bounding box keeps the minimum margin to every edge."""
    radius = float(rng.uniform(*radius_range))
    r_px = radius * size
    lo, hi = MIN_MARGIN_PX + r_px, size - MIN_MARGIN_PX - r_px
    if lo > hi:
        raise InvalidInputError(f"radius {radius:.3f} does not fit in a {size}px image with margin")
    cx, cy = (float(v) / size for v in rng.uniform(lo, hi, size=2))
    return SceneSpec(
        object_class=object_class,
        center=(cx, cy),
        radius=radius,
        foreground_level=float(rng.uniform(0.7, 1.0)),
        background_level=float(rng.uniform(0.0, 0.2)),
    )


def make_item(index: int, policy: AugmentPolicy, size: int, seed: int,
              classes: Sequence[str], templates: Sequence[str],
              radius_range: Tuple[float, float]) -> LabeledImage:
    """Build dataset item ``index``; depends only on its own derived seeds."""
    scene_rng = make_rng(seed, 'scene', index)
    object_class = classes[index % len(classes)]
    spec = sample_scene(scene_rng, object_class, size, radius_range)
    template = templates[int(scene_rng.integers(len(templates)))] if len(templates) > 1 else templates[0]
    image = render_scene(spec, size)
    image, cropped = apply_policy(image, policy, make_rng(policy.seed, 'augment', index))
    return LabeledImage(image, make_prompt(object_class, template), spec, cropped, template)


def make_dataset(n: int, policy: AugmentPolicy, size: int = 32, seed: int = 0,
                 classes: Sequence[str] = OBJECT_CLASSES,
                 templates: Sequence[str] = ('plain',),
                 radius_range: Tuple[float, float] = RADIUS_RANGE) -> List[LabeledImage]:
    """
    Generate a synthetic single-object dataset.

    Classes cycle with the item index, so every class appears n/len(classes) times
    (up to rounding). Each item uses seeds derived from (seed, index), so any shard of
    the index space can be generated independently.

    Args:
        n: Number of items (>= 1)
        policy: Augmentation applied after rendering
        size: Image side in pixels
        seed: Root seed for scene geometry
        classes: Object classes to draw from
        templates: Prompt templates to draw from
        radius_range: Range of object radii (fraction of the image side)

    Returns:
        List of LabeledImage
    """
    if n < 1:
        raise InvalidInputError(f"Dataset size must be >= 1, got {n}")
    unknown = set(classes) - set(OBJECT_CLASSES)
    if not classes or unknown:
        raise InvalidInputError(f"Invalid class list {list(classes)}")
    if not RADIUS_RANGE[0] <= radius_range[0] <= radius_range[1] <= RADIUS_RANGE[1]:
        raise InvalidInputError(f"radius_range {radius_range} must lie within {RADIUS_RANGE}")

    logging.info(f"Generating {n} scenes (size={size}, mode={policy.mode}, classes={list(classes)})")
    start_time = time.time()
    items = [make_item(i, policy, size, seed, tuple(classes), tuple(templates), radius_range) for i in range(n)]
    logging.info(f"Scene generation took {time.time() - start_time:.2f} seconds")
    return items


def dataset_frame(items: Sequence[LabeledImage], threshold: float = 0.5, margin: int = 1) -> pd.DataFrame:
    """Manifest rows: filename, class, template, geometry, levels, crop flag, border-contact flag."""
    rows = []
    for i, item in enumerate(items):
        spec = item.spec
        rows.append({
            'filename': f"{IMAGE_DIR}/{i:06d}.pgm",
            'class': spec.object_class,
            'template': item.template,
            'center_x': spec.center[0],
            'center_y': spec.center[1],
            'radius': spec.radius,
            'foreground_level': spec.foreground_level,
            'background_level': spec.background_level,
            'cropped': bool(item.cropped),
            'border_contact': bool(border_contact(item.image, threshold, margin)),
        })
    return pd.DataFrame(rows)


def export_dataset(items: Sequence[LabeledImage], out_dir: str, threshold: float = 0.5, margin: int = 1) -> pd.DataFrame:
    """Write images as binary PGM plus ``manifest.csv``; returns the manifest."""
    manifest = dataset_frame(items, threshold, margin)
    for filename, item in zip(manifest['filename'], items):
        write_pgm(item.image, os.path.join(out_dir, filename))
    export_output(manifest, os.path.join(out_dir, MANIFEST_NAME))
    logging.info(f"Exported {len(items)} images to {out_dir} "
                 f"(border-contact fraction {manifest['border_contact'].mean():.3f})")
    return manifest


def load_dataset_dir(data_dir: str, limit: Optional[int] = None) -> List[LabeledImage]:
    """Re-import a directory written by :func:`export_dataset`."""
    manifest_path = os.path.join(data_dir, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise InvalidInputError(f"No {MANIFEST_NAME} found in {data_dir}")
    manifest = pd.read_csv(manifest_path, nrows=limit)
    items = []
    for row in manifest.to_dict(orient='records'):
        spec = SceneSpec(
            object_class=row['class'],
            center=(float(row['center_x']), float(row['center_y'])),
            radius=float(row['radius']),
            foreground_level=float(row['foreground_level']),
            background_level=float(row['background_level']),
        )
        items.append(LabeledImage(
            image=read_pgm(os.path.join(data_dir, row['filename'])),
            tokens=make_prompt(spec.object_class, row['template']),
            spec=spec,
            cropped=bool(row['cropped']),
            template=row['template'],
        ))
    logging.info(f"Loaded {len(items)} images from {data_dir}")
    return items
