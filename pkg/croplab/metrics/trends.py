from itertools import combinations
from typing import Any, Dict, Optional, Sequence, Tuple

from croplab.errors import InvalidInputError

INCREASING = 'increasing'
DECREASING = 'decreasing'
NEITHER = 'neither'

STEP_SLACK = 0.02


def trend_report(rates_by_epoch: Sequence[Tuple[int, float]], slack: float = STEP_SLACK) -> str:
    """
    Classify a rate-vs-epoch series.

    A series is increasing when more than half of all ordered pairs (i < j) rise strictly
    and no consecutive step falls by more than ``slack``; decreasing is the mirror image.

    Args:
        rates_by_epoch: (epoch, rate) pairs, at least three
        slack: Tolerated per-step move against the trend

    Returns:
        'increasing', 'decreasing' or 'neither'
    """
    if len(rates_by_epoch) < 3:
        raise InvalidInputError(f"trend_report needs at least 3 epochs, got {len(rates_by_epoch)}")
    rates = [r for _, r in sorted(rates_by_epoch, key=lambda p: p[0])]
    pairs = list(combinations(range(len(rates)), 2))
    ups = sum(rates[j] > rates[i] for i, j in pairs)
    downs = sum(rates[j] < rates[i] for i, j in pairs)
    steps = [b - a for a, b in zip(rates, rates[1:])]

    if ups * 2 > len(pairs) and all(s >= -slack for s in steps):
        return INCREASING
    if downs * 2 > len(pairs) and all(s <= slack for s in steps):
        return DECREASING
    return NEITHER


def paired_summary(baseline_rate: float, treated_rate: float,
                   baseline_seconds: Optional[float] = None,
                   treated_seconds: Optional[float] = None) -> Dict[str, Any]:
    """Rates, ratio and relative reduction of an A/B comparison on shared seeds."""
    ratio = treated_rate / baseline_rate if baseline_rate > 0 else float('nan')
    summary = {
        'baseline_rate': baseline_rate,
        'treated_rate': treated_rate,
        'rate_ratio': ratio,
        'relative_reduction': 1.0 - ratio if baseline_rate > 0 else float('nan'),
    }
    if baseline_seconds and treated_seconds is not None:
        summary['time_ratio'] = treated_seconds / baseline_seconds
    return summary
