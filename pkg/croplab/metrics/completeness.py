import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from croplab.errors import InvalidInputError

DEFAULT_THRESHOLD = 0.5
DEFAULT_MARGIN = 1


def border_contact(img: np.ndarray, threshold: float = DEFAULT_THRESHOLD, margin: int = DEFAULT_MARGIN) -> Optional[bool]:
    """
    Decide whether the thresholded object touches the image frame.

    Args:
        img: 2-D grayscale image in [0, 1]
        threshold: Foreground threshold, 0 < threshold < 1
        margin: Width in pixels of the edge band that counts as contact (>= 1)

    Returns:
        True if a foreground pixel lies in the outer ``margin`` rows/columns, False if the
        object is fully interior, None if the image has no foreground pixel at all.
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError(f"threshold must be in (0, 1), got {threshold}")
    if margin < 1:
        raise InvalidInputError(f"margin must be >= 1, got {margin}")
    foreground = np.asarray(img) >= threshold
    if not foreground.any():
        return None
    band = np.zeros_like(foreground)
    band[:margin, :] = True
    band[-margin:, :] = True
    band[:, :margin] = True
    band[:, -margin:] = True
    return bool((foreground & band).any())


def foreground_area(img: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> int:
    return int((np.asarray(img) >= threshold).sum())


@dataclass
class CompletenessReport:
    """
    Automatic object-incompleteness rate over a corpus.

    ``per_image`` holds (id, border_contact, foreground_area); border_contact is None for
    images without any foreground, which are excluded from ``n`` and ``rate``.
    """
    per_image: List[Tuple[Any, Optional[bool], int]]
    rate: float
    n: int
    n_no_object: int = 0
    groups: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{'id': i, 'border_contact': '' if c is None else bool(c), 'no_object': c is None,
              'foreground_area': a} for i, c, a in self.per_image],
            columns=['id', 'border_contact', 'no_object', 'foreground_area'],
        )

    def summary(self) -> Dict[str, Any]:
        return {'rate': self.rate, 'n': self.n, 'n_no_object': self.n_no_object, 'groups': self.groups}


ImageCorpus = Union[Sequence[np.ndarray], Mapping[Any, np.ndarray]]


def incompleteness_rate(images: ImageCorpus, threshold: float = DEFAULT_THRESHOLD,
                        margin: int = DEFAULT_MARGIN,
                        groups: Optional[Mapping[Any, str]] = None) -> CompletenessReport:
    """
    Aggregate :func:`border_contact` over a corpus.

    Args:
        images: List of images (ids are positions) or a mapping id -> image
        threshold: Foreground threshold
        margin: Edge band width in pixels
        groups: Optional id -> group label (e.g. object class, seen/unseen) for a breakdown

    Returns:
        CompletenessReport with rate = (# contacting) / (# images with an object)

    Raises:
        InvalidInputError: If the corpus is empty or contains no object at all
    """
    items = list(images.items()) if isinstance(images, Mapping) else list(enumerate(images))
    if not items:
        raise InvalidInputError("Cannot compute an incompleteness rate over an empty corpus")

    per_image = [(key, border_contact(img, threshold, margin), foreground_area(img, threshold))
                 for key, img in items]
    verdicts = [c for _, c, _ in per_image if c is not None]
    if not verdicts:
        raise InvalidInputError("No image in the corpus contains a foreground object")

    report = CompletenessReport(
        per_image=per_image,
        rate=sum(verdicts) / len(verdicts),
        n=len(verdicts),
        n_no_object=len(per_image) - len(verdicts),
    )
    if groups:
        for label in sorted(set(groups.values())):
            member = [c for key, c, _ in per_image if groups.get(key) == label and c is not None]
            report.groups[label] = {'rate': sum(member) / len(member) if member else float('nan'),
                                    'n': len(member)}
    logging.info(f"Incompleteness rate {report.rate:.3f} over {report.n} images "
                 f"({report.n_no_object} without object)")
    return report
