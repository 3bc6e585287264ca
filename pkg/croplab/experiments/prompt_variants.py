"""Unguided incompleteness rate per prompt template ("a disc", "a complete disc", "a disc middle")."""

import logging
import time

import pandas as pd

from croplab.config.run import RunConfig
from croplab.denoiser import DenoiserParams
from croplab.scenes.prompts import TEMPLATES
from .runner import ExperimentReport, completeness, make_jobs, run_jobs, sample_count_warnings


def run_prompt_variants(run: RunConfig, params: DenoiserParams, workers: int = 1) -> ExperimentReport:
    ex, ev = run['experiment'], run['eval']
    report = ExperimentReport('prompt_variants', warnings=sample_count_warnings(ex['n']))
    cfg = run.sampler_config(guidance=False)
    rows = []
    for template in sorted(TEMPLATES):
        start = time.time()
        jobs = make_jobs(ex['n'], run['dataset']['classes'], templates=(template,))
        rep = completeness(run_jobs(params, cfg, jobs, workers), ev['threshold'], ev['margin'])
        report.timings[template] = time.time() - start
        rows.append({'template': template, 'rate': rep.rate if rep else float('nan'),
                     'n': rep.n if rep else 0})
        logging.info(f"prompt_variants {template}: rate {rows[-1]['rate']:.3f}")
    report.tables['rates'] = pd.DataFrame(rows)
    report.summary = {row['template']: row['rate'] for row in rows}
    return report
