"""Headline experiments: crop trend, guidance A/B, ablation and prompt variants."""

from .runner import ExperimentReport, SampleJob, SampleResult, make_jobs, results_frame, run_jobs
from .crop_trend import run_crop_trend, train_base
from .guidance_ab import compare_variants, run_ablation, run_guidance_ab
from .prompt_variants import run_prompt_variants

EXPERIMENTS = ('crop_trend', 'guidance_ab', 'ablation', 'prompt_variants')

__all__ = [
    'ExperimentReport', 'SampleJob', 'SampleResult', 'make_jobs', 'results_frame', 'run_jobs',
    'run_crop_trend', 'train_base', 'compare_variants', 'run_ablation', 'run_guidance_ab',
    'run_prompt_variants', 'EXPERIMENTS',
]
