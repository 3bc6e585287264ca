"""Automatic completeness evaluation and attention diagnostics."""

from .completeness import (
    DEFAULT_MARGIN,
    DEFAULT_THRESHOLD,
    CompletenessReport,
    border_contact,
    foreground_area,
    incompleteness_rate,
)
from .attention import band_mask, boundary_attention_mass
from .trends import DECREASING, INCREASING, NEITHER, paired_summary, trend_report

__all__ = [
    'DEFAULT_MARGIN', 'DEFAULT_THRESHOLD', 'CompletenessReport', 'border_contact',
    'foreground_area', 'incompleteness_rate', 'band_mask', 'boundary_attention_mass',
    'DECREASING', 'INCREASING', 'NEITHER', 'paired_summary', 'trend_report',
]
