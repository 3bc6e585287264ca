"""Paired comparisons of sampler variants on shared seeds: guidance on/off and its ablations."""

import logging
import time
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from croplab.config.run import RunConfig
from croplab.denoiser import DenoiserParams
from croplab.metrics import paired_summary
from croplab.sampler import SamplerConfig
from .runner import ExperimentReport, completeness, make_jobs, results_frame, run_jobs, sample_count_warnings

BASELINE = 'unguided'


def compare_variants(name: str, run: RunConfig, params: DenoiserParams,
                     variants: Sequence[Tuple[str, SamplerConfig]], workers: int = 1) -> ExperimentReport:
    """
    Sample the same jobs under every variant and compare rates against the first one.

    Args:
        name: Experiment name
        run: Resolved run config (experiment.n samples, eval threshold/margin)
        params: Denoiser parameters
        variants: (label, sampler config) pairs; the first is the baseline
        workers: Process pool size

    Returns:
        ExperimentReport with a ``rates`` table, per-sample tables and paired summaries
    """
    ex, ev = run['experiment'], run['eval']
    report = ExperimentReport(name, warnings=sample_count_warnings(ex['n']))
    jobs = make_jobs(ex['n'], run['dataset']['classes'])

    rows: List[Dict] = []
    for label, cfg in variants:
        start = time.time()
        results = run_jobs(params, cfg, jobs, workers)
        report.timings[label] = time.time() - start
        report.timings[f'{label}_per_sample'] = sum(r.seconds for r in results) / len(results)
        rep = completeness(results, ev['threshold'], ev['margin'])
        report.tables[f'samples_{label}'] = results_frame(results, ev['threshold'], ev['margin'])
        rows.append({'variant': label, 'rate': rep.rate if rep else float('nan'),
                     'n': rep.n if rep else 0, 'n_no_object': rep.n_no_object if rep else len(results),
                     'forward_calls': sum(r.forward_calls for r in results)})
        logging.info(f"{name} {label}: rate {rows[-1]['rate']:.3f}")

    rates = pd.DataFrame(rows)
    report.tables['rates'] = rates
    baseline = rows[0]
    base_seconds = report.timings[f"{baseline['variant']}_per_sample"]
    for row in rows[1:]:
        label = row['variant']
        report.summary[label] = paired_summary(baseline['rate'], row['rate'])
        if base_seconds > 0:
            report.timings[f'{label}_time_ratio'] = report.timings[f'{label}_per_sample'] / base_seconds
    return report


def run_guidance_ab(run: RunConfig, params: DenoiserParams, workers: int = 1) -> ExperimentReport:
    return compare_variants('guidance_ab', run, params, [
        (BASELINE, run.sampler_config(guidance=False)),
        ('guided', run.sampler_config(guidance=True)),
    ], workers)


def run_ablation(run: RunConfig, params: DenoiserParams, workers: int = 1) -> ExperimentReport:
    """Unguided, full method, and each constraint dropped; checks the single-term ordering."""
    run = run.with_overrides({'guidance.use_cross': True, 'guidance.use_self': True})
    report = compare_variants('ablation', run, params, [
        (BASELINE, run.sampler_config(guidance=False)),
        ('full', run.sampler_config(guidance=True)),
        ('no_cross', run.sampler_config(guidance=True, ablate='cross')),
        ('no_self', run.sampler_config(guidance=True, ablate='self')),
    ], workers)
    rates = dict(zip(report.tables['rates']['variant'], report.tables['rates']['rate']))
    low, high = rates['full'], rates[BASELINE]
    report.summary['ordering'] = {
        variant: bool(low < rates[variant] < high) for variant in ('no_cross', 'no_self')
    }
    return report
