"""
RandomCrop versus no-crop fine-tuning.

A shared base model is first trained on a mixed policy (a fraction ``base_crop_prob`` of the
images cropped). Two twins are then fine-tuned from it, one on fully cropped data and one on
uncropped data; after every epoch each twin is sampled unguided and its incompleteness rate
recorded. When ``seen_classes`` is set, fine-tuning only sees those classes while sampling
covers every class, giving a seen/unseen breakdown.
"""

import logging
import time
from typing import Dict, Optional

import pandas as pd

from croplab.config.run import RunConfig
from croplab.denoiser import DenoiserParams, Trainer
from croplab.metrics import trend_report
from croplab.scenes import AugmentMode, make_dataset
from .runner import ExperimentReport, completeness, make_jobs, run_jobs, sample_count_warnings

TWINS = (('crop', AugmentMode.RANDOM_CROP.value), ('no_crop', AugmentMode.NONE.value))


def _dataset(run: RunConfig, policy, classes):
    ds = run['dataset']
    return make_dataset(ds['n'], policy, size=ds['size'], seed=ds['seed'], classes=classes,
                        templates=ds['templates'], radius_range=(ds['radius_lo'], ds['radius_hi']))


def train_base(run: RunConfig, params: Optional[DenoiserParams] = None) -> DenoiserParams:
    """Pretrain on the mixed crop policy for ``experiment.base_epochs`` epochs."""
    ex, tr = run['experiment'], run['train']
    params = params or DenoiserParams.init(run.model_dims(), run['model']['seed'], run['model']['init_scale'])
    if ex['base_epochs'] == 0:
        return params
    policy = run.augment_policy(AugmentMode.RANDOM_CROP.value, crop_prob=ex['base_crop_prob'])
    data = _dataset(run, policy, run['dataset']['classes'])
    trainer = Trainer(params.copy(), data, run.schedule(), tr['lr'], tr['batch_size'], tr['seed'])
    trainer.fit(ex['base_epochs'])
    logging.info(f"Base model trained for {ex['base_epochs']} epochs on crop_prob={ex['base_crop_prob']}")
    return trainer.params


def run_crop_trend(run: RunConfig, workers: int = 1, base: Optional[DenoiserParams] = None) -> ExperimentReport:
    ds, ex, tr, ev = run['dataset'], run['experiment'], run['train'], run['eval']
    report = ExperimentReport('crop_trend', warnings=sample_count_warnings(ex['n']))
    classes = list(ds['classes'])
    seen = list(ex['seen_classes']) or classes
    jobs = make_jobs(ex['n'], classes)
    groups: Optional[Dict[int, str]] = None
    if set(seen) != set(classes):
        groups = {job.index: 'seen' if job.object_class in seen else 'unseen' for job in jobs}

    base = base or train_base(run)
    sampler_cfg = run.sampler_config(guidance=False)
    rows = []
    for name, mode in TWINS:
        start = time.time()
        data = _dataset(run, run.augment_policy(mode), seen)
        trainer = Trainer(base.copy(), data, run.schedule(), tr['lr'], tr['batch_size'], tr['seed'])
        for _ in range(tr['epochs']):
            loss = trainer.run_epoch()
            results = run_jobs(trainer.params, sampler_cfg, jobs, workers)
            rep = completeness(results, ev['threshold'], ev['margin'], groups)
            row = {'model': name, 'epoch': trainer.epoch, 'loss': loss,
                   'rate': rep.rate if rep else float('nan'),
                   'n': rep.n if rep else 0,
                   'n_no_object': rep.n_no_object if rep else len(results)}
            if groups:
                for label in ('seen', 'unseen'):
                    row[f'{label}_rate'] = rep.groups.get(label, {}).get('rate', float('nan')) if rep else float('nan')
            rows.append(row)
            logging.info(f"crop_trend {name} epoch {trainer.epoch}: rate {row['rate']:.3f}")
        report.timings[name] = time.time() - start

    series = pd.DataFrame(rows)
    report.tables['series'] = series
    for name, _ in TWINS:
        twin = series[series['model'] == name]
        points = [(int(e), float(r)) for e, r in zip(twin['epoch'], twin['rate']) if r == r]
        verdict = trend_report(points) if len(points) >= 3 else None
        if verdict is None:
            report.warnings.append(f"{name}: fewer than 3 epochs with a rate, no trend verdict")
        report.summary[name] = {'verdict': verdict, 'rates': [r for _, r in points]}
    return report
