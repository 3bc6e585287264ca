import logging
from dataclasses import dataclass, asdict
from typing import Dict, Any, Tuple

import numpy as np

from croplab.errors import InvalidInputError
from .prompts import OBJECT_CLASSES

RADIUS_RANGE = (0.08, 0.30)
MIN_LEVEL_GAP = 0.3
MIN_MARGIN_PX = 2


@dataclass(frozen=True)
class SceneSpec:
    """
    One synthetic single-object scene.

    Attributes:
        object_class: disc, square, triangle or ring
        center: (x, y) in [0, 1]^2 image coordinates
        radius: Half-extent of the object's bounding box as a fraction of the image side
        foreground_level: Object gray value in (0.5, 1.0]
        background_level: Background gray value in [0.0, 0.3]
    """
    object_class: str
    center: Tuple[float, float]
    radius: float
    foreground_level: float = 1.0
    background_level: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record['center_x'], record['center_y'] = record.pop('center')
        return record

    def bounding_box(self, size: int) -> Tuple[float, float, float, float]:
        """(left, top, right, bottom) of the object in pixel units."""
        cx, cy = self.center[0] * size, self.center[1] * size
        r = self.radius * size
        return cx - r, cy - r, cx + r, cy + r

    def validate(self, size: int, check_margin: bool = True) -> None:
        """
        Check the scene invariants.

        Raises:
            InvalidInputError: If any invariant is violated
        """
        errors = []
        if self.object_class not in OBJECT_CLASSES:
            errors.append(f"unknown class '{self.object_class}'")
        if not all(0.0 <= c <= 1.0 for c in self.center):
            errors.append(f"center {self.center} outside [0,1]^2")
        if not RADIUS_RANGE[0] <= self.radius <= RADIUS_RANGE[1]:
            errors.append(f"radius {self.radius} outside {RADIUS_RANGE}")
        if not 0.5 < self.foreground_level <= 1.0:
            errors.append(f"foreground_level {self.foreground_level} outside (0.5, 1.0]")
        if not 0.0 <= self.background_level <= 0.3:
            errors.append(f"background_level {self.background_level} outside [0.0, 0.3]")
        if self.foreground_level - self.background_level < MIN_LEVEL_GAP - 1e-9:
            errors.append("foreground/background gap below 0.3")
        if check_margin:
            left, top, right, bottom = self.bounding_box(size)
            eps = 1e-9
            if min(left, top) < MIN_MARGIN_PX - eps or max(right, bottom) > size - MIN_MARGIN_PX + eps:
                errors.append(f"bounding box {self.bounding_box(size)} closer than {MIN_MARGIN_PX}px to the edge")
        if errors:
            raise InvalidInputError(f"Invalid scene: {'; '.join(errors)}")


def shape_mask(object_class: str, center: Tuple[float, float], radius: float, size: int) -> np.ndarray:
    """
    Boolean mask of pixels whose centers fall inside the shape.

    All coordinates are in pixel units with pixel (row, col) centered at (col + 0.5, row + 0.5).
    """
    coords = np.arange(size, dtype=np.float64) + 0.5
    dx = coords[None, :] - center[0] * size
    dy = coords[:, None] - center[1] * size
    r = radius * size

    if object_class == 'disc':
        return dx * dx + dy * dy <= r * r
    if object_class == 'square':
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if object_class == 'triangle':
        # apex at the top, base along the bottom of the bounding box
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2.0)
    if object_class == 'ring':
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.5 * r) ** 2)
    raise InvalidInputError(f"Unknown object class '{object_class}'")


def rasterize(spec: SceneSpec, size: int) -> np.ndarray:
    """Draw a scene without the margin check (objects may touch or cross the frame)."""
    mask = shape_mask(spec.object_class, spec.center, spec.radius, size)
    image = np.full((size, size), spec.background_level, dtype=np.float32)
    image[mask] = spec.foreground_level
    return image


def render_scene(spec: SceneSpec, size: int = 32) -> np.ndarray:
    """
    Render a validated scene as a size x size grayscale image in [0, 1].

    Args:
        spec: Scene to draw
        size: Image side in pixels (>= 16)

    Returns:
        float32 image, background_level everywhere except inside the object
    """
    if size < 16:
        raise InvalidInputError(f"Image size must be >= 16, got {size}")
    spec.validate(size)
    logging.debug(f"Rendering {spec.object_class} at {spec.center} r={spec.radius:.3f} size={size}")
    return rasterize(spec, size)
