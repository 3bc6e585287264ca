from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from PIL import Image

from croplab.errors import InvalidInputError


class AugmentMode(str, Enum):
    NONE = 'none'
    RANDOM_CROP = 'random_crop'


@dataclass(frozen=True)
class AugmentPolicy:
    """
    Training-time augmentation.

    Attributes:
        mode: ``none`` or ``random_crop``
        crop_ratio_range: (lo, hi) range of the crop side as a fraction of the image side
        flip_prob: Probability of a horizontal flip
        seed: Root seed of the augmentation stream
        crop_prob: Fraction of images that get cropped when mode is ``random_crop``
    """
    mode: str = AugmentMode.NONE.value
    crop_ratio_range: Tuple[float, float] = (0.5, 0.9)
    flip_prob: float = 0.0
    seed: int = 0
    crop_prob: float = 1.0

    def __post_init__(self):
        if self.mode not in {m.value for m in AugmentMode}:
            raise InvalidInputError(f"Unknown augmentation mode '{self.mode}'")
        lo, hi = self.crop_ratio_range
        if not (0.0 < lo <= hi <= 1.0):
            raise InvalidInputError(f"crop_ratio_range must satisfy 0 < lo <= hi <= 1, got {self.crop_ratio_range}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidInputError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if not 0.0 <= self.crop_prob <= 1.0:
            raise InvalidInputError(f"crop_prob must be in [0, 1], got {self.crop_prob}")


def crop_window(size: int, ratio: float) -> int:
    if not 0.0 < ratio <= 1.0:
        raise InvalidInputError(f"Crop ratio must be in (0, 1], got {ratio}")
    return max(1, int(round(ratio * size)))


def crop_resize(img: np.ndarray, ratio: float, offset: Tuple[int, int]) -> np.ndarray:
    """
    Cut a square window of side ratio*size at ``offset`` (row, col) and scale it back
    to the original size with nearest-neighbor sampling.
    """
    size = img.shape[0]
    window = crop_window(size, ratio)
    row, col = offset
    if not (0 <= row <= size - window and 0 <= col <= size - window):
        raise InvalidInputError(f"Crop offset {offset} invalid for window {window} in image of size {size}")
    patch = Image.fromarray(np.ascontiguousarray(img, dtype=np.float32))
    patch = patch.crop((col, row, col + window, row + window))
    patch = patch.resize((img.shape[1], size), Image.Resampling.NEAREST)
    return np.asarray(patch, dtype=np.float32).copy()


def random_crop(img: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """
    RandomCrop: extract a ratio*side window at a uniformly random valid offset and resize back.

    Args:
        img: Square grayscale image
        ratio: Crop side as a fraction of the image side, 0 < ratio <= 1
        rng: Random generator supplying the offset

    Returns:
        Image of the original size
    """
    size = img.shape[0]
    window = crop_window(size, ratio)
    row, col = (int(v) for v in rng.integers(0, size - window + 1, size=2))
    return crop_resize(img, ratio, (row, col))


def apply_policy(img: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
    """Apply an augmentation policy; returns the image and whether it was cropped."""
    cropped = False
    if policy.mode == AugmentMode.RANDOM_CROP.value and rng.random() < policy.crop_prob:
        lo, hi = policy.crop_ratio_range
        img = random_crop(img, float(rng.uniform(lo, hi)), rng)
        cropped = True
    if policy.flip_prob > 0 and rng.random() < policy.flip_prob:
        img = img[:, ::-1].copy()
    return img, cropped
