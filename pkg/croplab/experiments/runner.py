"""
Fan-out of independent sampling jobs over a process pool.

Each job depends only on (sampler seed, sample index), so results do not depend on the
number of workers or the completion order; they are returned sorted by index.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from croplab.denoiser import DenoiserParams, ModelDims
from croplab.errors import InvalidInputError
from croplab.metrics import CompletenessReport, border_contact, incompleteness_rate
from croplab.sampler import SamplerConfig, StepTrace, sample
from croplab.scenes.prompts import make_prompt

MIN_RELIABLE_SAMPLES = 100


@dataclass(frozen=True)
class SampleJob:
    index: int
    object_class: str
    template: str = 'plain'


@dataclass
class SampleResult:
    job: SampleJob
    image: np.ndarray
    forward_calls: int
    guided_steps: int
    seconds: float
    trace: Optional[StepTrace] = None


def make_jobs(n: int, classes: Sequence[str], templates: Sequence[str] = ('plain',), start: int = 0) -> List[SampleJob]:
    """Jobs cycling through classes (and templates) with sample indices start..start+n-1."""
    if n < 1 or not classes or not templates:
        raise InvalidInputError("Need at least one sample, one class and one template")
    return [SampleJob(start + i, classes[i % len(classes)], templates[(i // len(classes)) % len(templates)])
            for i in range(n)]


_worker: Dict[str, Any] = {}


def _init_worker(dims: Dict[str, int], arrays: Dict[str, np.ndarray], cfg: SamplerConfig, keep_traces: bool) -> None:
    _worker['params'] = DenoiserParams.from_arrays(ModelDims(**dims), arrays)
    _worker['cfg'] = cfg
    _worker['keep_traces'] = keep_traces


def _run_job(job: SampleJob) -> SampleResult:
    image, trace = sample(make_prompt(job.object_class, job.template), _worker['params'], _worker['cfg'], job.index)
    return SampleResult(job, image, trace.forward_calls, len(trace.fired_steps), trace.seconds,
                        trace if _worker['keep_traces'] else None)


def run_jobs(params: DenoiserParams, cfg: SamplerConfig, jobs: Sequence[SampleJob], workers: int = 1,
             keep_traces: bool = False) -> List[SampleResult]:
    """
    Sample every job.

    Args:
        params: Denoiser parameters (copied into each worker)
        cfg: Sampler configuration shared by all jobs
        jobs: Jobs to run
        workers: Pool size; 1 runs inline in this process
        keep_traces: Keep full step traces on the results

    Returns:
        Results sorted by sample index
    """
    start = time.time()
    init_args = (params.dims.to_dict(), params.arrays(), cfg, keep_traces)
    if workers <= 1:
        _init_worker(*init_args)
        results = [_run_job(job) for job in jobs]
    else:
        chunksize = max(1, math.ceil(len(jobs) / (4 * workers)))
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=init_args) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=chunksize))
    results.sort(key=lambda r: r.job.index)
    logging.info(f"Sampled {len(results)} images with {workers} worker(s) in {time.time() - start:.2f} seconds")
    return results


def results_frame(results: Sequence[SampleResult], threshold: float, margin: int) -> pd.DataFrame:
    rows = []
    for r in results:
        contact = border_contact(r.image, threshold, margin)
        rows.append({
            'index': r.job.index,
            'class': r.job.object_class,
            'template': r.job.template,
            'border_contact': '' if contact is None else bool(contact),
            'no_object': contact is None,
            'forward_calls': r.forward_calls,
            'guided_steps': r.guided_steps,
        })
    return pd.DataFrame(rows)


def completeness(results: Sequence[SampleResult], threshold: float, margin: int,
                 groups: Optional[Mapping[int, str]] = None) -> Optional[CompletenessReport]:
    """Incompleteness report of sampled images, or None when no image contains an object."""
    images = {r.job.index: r.image for r in results}
    try:
        return incompleteness_rate(images, threshold, margin, groups=groups)
    except InvalidInputError as e:
        logging.warning(f"No rate for {len(images)} samples: {e}")
        return None


def sample_count_warnings(n: int) -> List[str]:
    if n < MIN_RELIABLE_SAMPLES:
        message = f"only {n} samples per condition (< {MIN_RELIABLE_SAMPLES}); rates are noisy"
        logging.warning(message)
        return [message]
    return []


@dataclass
class ExperimentReport:
    """Tables and summary of one experiment; ``timings`` are kept out of deterministic outputs."""
    name: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
