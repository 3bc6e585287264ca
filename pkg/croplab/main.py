import os
import glob
import logging
import time
from typing import Any, Dict, List, Optional

import pandas as pd

from croplab import __version__
from croplab.config import config
from croplab.config.run import RunConfig
from croplab.denoiser import DenoiserParams, Trainer, load_checkpoint, save_checkpoint
from croplab.errors import InvalidInputError
from croplab.experiments import (
    EXPERIMENTS,
    ExperimentReport,
    make_jobs,
    results_frame,
    run_ablation,
    run_crop_trend,
    run_guidance_ab,
    run_jobs,
    run_prompt_variants,
)
from croplab.metrics import incompleteness_rate
from croplab.sampler import export_sample
from croplab.scenes import AugmentMode, export_dataset, load_dataset_dir, make_dataset
from croplab.utils import config_hash, directory_hash, ensure_folder, export_output, file_hash, read_pgm, write_json


def write_manifest(out_dir: str, command: str, run: RunConfig, inputs: Optional[Dict[str, str]] = None,
                   outputs: Optional[Dict[str, Any]] = None) -> str:
    """
    Record the resolved config, a hash of it and content hashes of the inputs.

    The manifest can be passed back as ``--config`` to reproduce the run.
    """
    resolved = run.to_dict()
    manifest = {
        'command': command,
        'version': __version__,
        'config': resolved,
        'config_hash': config_hash(resolved),
        'inputs': inputs or {},
        'outputs': outputs or {},
    }
    return write_json(manifest, os.path.join(out_dir, config.output['manifest_name']))


def _input_hash(path: str) -> str:
    return directory_hash(path) if os.path.isdir(path) else file_hash(path)


def _workers(run: RunConfig) -> int:
    return run['experiment']['workers'] or config.runtime['workers']


def run_gen_data(run: RunConfig, out_dir: str) -> Dict[str, Any]:
    """Generate and export the synthetic dataset described by ``[dataset]``."""
    logging.info(f"Starting gen-data into {out_dir}")
    try:
        ds, ev = run['dataset'], run['eval']
        items = make_dataset(ds['n'], run.augment_policy(), size=ds['size'], seed=ds['seed'],
                             classes=ds['classes'], templates=ds['templates'],
                             radius_range=(ds['radius_lo'], ds['radius_hi']))
        manifest = export_dataset(items, out_dir, ev['threshold'], ev['margin'])
        summary = {
            'n': len(items),
            'border_contact_fraction': float(manifest['border_contact'].mean()),
            'cropped_fraction': float(manifest['cropped'].mean()),
        }
        write_manifest(out_dir, 'gen-data', run, outputs=summary)
        return {'status': 'success', 'output_path': out_dir, 'summary': summary}
    except Exception as e:
        logging.error(f"Error generating dataset: {e}")
        raise


def run_train(run: RunConfig, out_dir: str, data_dir: Optional[str] = None,
              resume: Optional[str] = None) -> Dict[str, Any]:
    """
    Train a denoiser and write its checkpoint.

    Args:
        run: Resolved run config
        out_dir: Output directory (checkpoint, loss curve, manifest)
        data_dir: Dataset written by gen-data; generated in memory from ``[dataset]`` if omitted
        resume: Checkpoint to continue from; ``train.epochs`` is the total epoch count
    """
    logging.info(f"Starting training into {out_dir}")
    try:
        ensure_folder(out_dir)
        tr, ds = run['train'], run['dataset']
        if data_dir:
            data = load_dataset_dir(data_dir)
        else:
            data = make_dataset(ds['n'], run.augment_policy(), size=ds['size'], seed=ds['seed'],
                                classes=ds['classes'], templates=ds['templates'],
                                radius_range=(ds['radius_lo'], ds['radius_hi']))

        if resume:
            ckpt = load_checkpoint(resume)
            if ckpt.params.dims != run.model_dims():
                raise InvalidInputError(f"checkpoint dims {ckpt.params.dims} do not match the run config")
            trainer = Trainer(ckpt.params, data, run.schedule(), tr['lr'], tr['batch_size'], tr['seed'],
                              state=ckpt.state, epoch=ckpt.epoch, loss_curve=ckpt.loss_curve)
        else:
            params = DenoiserParams.init(run.model_dims(), run['model']['seed'], run['model']['init_scale'])
            trainer = Trainer(params, data, run.schedule(), tr['lr'], tr['batch_size'], tr['seed'])

        start_time = time.time()
        trainer.fit(max(0, tr['epochs'] - trainer.epoch))
        logging.info(f"Training took {time.time() - start_time:.2f} seconds")

        checkpoint_path = os.path.join(out_dir, config.output['checkpoint_name'])
        save_checkpoint(checkpoint_path, trainer.params, trainer.state, trainer.epoch, trainer.loss_curve)
        curve = pd.DataFrame({'epoch': range(1, len(trainer.loss_curve) + 1), 'loss': trainer.loss_curve})
        export_output(curve, os.path.join(out_dir, 'loss_curve.csv'))

        inputs = {'data': _input_hash(data_dir)} if data_dir else {}
        if resume:
            inputs['resume'] = file_hash(resume)
        write_manifest(out_dir, 'train', run, inputs, {'checkpoint': file_hash(checkpoint_path),
                                                       'epochs': trainer.epoch})
        return {'status': 'success', 'checkpoint': checkpoint_path, 'loss_curve': trainer.loss_curve}
    except Exception as e:
        logging.error(f"Error training denoiser: {e}")
        raise


def run_sample(run: RunConfig, out_dir: str, checkpoint: str, n: int,
               guidance: Optional[bool] = None, ablate: Optional[str] = None) -> Dict[str, Any]:
    """Sample ``n`` images (classes cycle through ``dataset.classes``) and write PGMs, traces and a table."""
    logging.info(f"Starting sampling of {n} images into {out_dir}")
    try:
        params = load_checkpoint(checkpoint).params
        cfg = run.sampler_config(guidance=guidance, ablate=ablate)
        keep_traces = run['sampler']['trace'] or bool(cfg.snapshot_steps)
        jobs = make_jobs(n, run['dataset']['classes'], run['dataset']['templates'])
        results = run_jobs(params, cfg, jobs, _workers(run), keep_traces=keep_traces)

        for r in results:
            export_sample(r.image, r.trace, out_dir, r.job.index)
        table = results_frame(results, run['eval']['threshold'], run['eval']['margin'])
        table.insert(0, 'filename', [f"samples/{i:06d}.pgm" for i in table['index']])
        export_output(table, os.path.join(out_dir, 'samples.csv'))

        guided = sorted({s for r in results for s in (r.trace.fired_steps if r.trace else [])}, reverse=True)
        summary = {'n': len(results), 'guidance': cfg.guidance is not None,
                   'forward_calls': int(table['forward_calls'].sum()),
                   'guided_steps_per_sample': int(table['guided_steps'].max())}
        if guided:
            summary['guided_steps'] = guided
        write_manifest(out_dir, 'sample', run, {'checkpoint': file_hash(checkpoint)}, summary)
        return {'status': 'success', 'output_path': out_dir, 'summary': summary}
    except Exception as e:
        logging.error(f"Error sampling images: {e}")
        raise


def _find_images(image_dir: str) -> List[str]:
    for candidate in (image_dir, os.path.join(image_dir, 'samples'), os.path.join(image_dir, 'images')):
        paths = sorted(glob.glob(os.path.join(candidate, '*.pgm')))
        if paths:
            return paths
    raise InvalidInputError(f"No .pgm images found in {image_dir}")


def _class_groups(image_dir: str, paths: List[str]) -> Optional[Dict[str, str]]:
    """Map image path -> class from a samples.csv / manifest.csv next to the images, if any."""
    for name in ('samples.csv', 'manifest.csv'):
        table_path = os.path.join(image_dir, name)
        if os.path.exists(table_path):
            table = pd.read_csv(table_path)
            if {'filename', 'class'} <= set(table.columns):
                by_file = dict(zip(table['filename'], table['class']))
                return {p: by_file[os.path.relpath(p, image_dir)] for p in paths
                        if os.path.relpath(p, image_dir) in by_file}
    return None


def run_eval(run: RunConfig, out_dir: str, image_dir: str) -> Dict[str, Any]:
    """Automatic incompleteness rate of a directory of PGM images."""
    logging.info(f"Starting evaluation of {image_dir}")
    try:
        paths = _find_images(image_dir)
        images = {p: read_pgm(p) for p in paths}
        report = incompleteness_rate(images, run['eval']['threshold'], run['eval']['margin'],
                                     groups=_class_groups(image_dir, paths))
        frame = report.to_frame()
        frame['id'] = [os.path.relpath(p, image_dir) for p in frame['id']]
        export_output(frame, os.path.join(out_dir, 'completeness.csv'))
        write_json(report.summary(), os.path.join(out_dir, 'completeness.json'))
        write_manifest(out_dir, 'eval', run, {'images': _input_hash(os.path.dirname(paths[0]))}, report.summary())
        return {'status': 'success', 'output_path': out_dir, 'summary': report.summary()}
    except Exception as e:
        logging.error(f"Error evaluating images: {e}")
        raise


def _trained_crop_model(run: RunConfig) -> DenoiserParams:
    """In-run training of a RandomCrop model for guidance experiments without a checkpoint."""
    ds, tr = run['dataset'], run['train']
    logging.info("No checkpoint given; training a RandomCrop model in-run")
    data = make_dataset(ds['n'], run.augment_policy(AugmentMode.RANDOM_CROP.value), size=ds['size'],
                        seed=ds['seed'], classes=ds['classes'], templates=ds['templates'],
                        radius_range=(ds['radius_lo'], ds['radius_hi']))
    params = DenoiserParams.init(run.model_dims(), run['model']['seed'], run['model']['init_scale'])
    trainer = Trainer(params, data, run.schedule(), tr['lr'], tr['batch_size'], tr['seed'])
    trainer.fit(tr['epochs'])
    return trainer.params


def export_report(report: ExperimentReport, out_dir: str) -> Dict[str, str]:
    paths = {name: export_output(table, os.path.join(out_dir, f'{name}.csv'))
             for name, table in report.tables.items()}
    paths['report'] = write_json({'name': report.name, 'summary': report.summary, 'warnings': report.warnings},
                                 os.path.join(out_dir, 'report.json'))
    paths['timings'] = write_json(report.timings, os.path.join(out_dir, 'timings.json'))
    return paths


def run_experiment(name: str, run: RunConfig, out_dir: str, checkpoint: Optional[str] = None) -> Dict[str, Any]:
    """
    Run one headline experiment and write its report bundle.

    Args:
        name: One of crop_trend, guidance_ab, ablation, prompt_variants
        run: Resolved run config
        out_dir: Output directory
        checkpoint: Model for the sampling experiments (crop_trend: optional base model)
    """
    if name not in EXPERIMENTS:
        raise InvalidInputError(f"Unknown experiment '{name}', expected one of {list(EXPERIMENTS)}")
    logging.info(f"Starting experiment {name} into {out_dir}")
    try:
        start_time = time.time()
        workers = _workers(run)
        params = load_checkpoint(checkpoint).params if checkpoint else None
        if name == 'crop_trend':
            report = run_crop_trend(run, workers, base=params)
        else:
            params = params or _trained_crop_model(run)
            runner = {'guidance_ab': run_guidance_ab, 'ablation': run_ablation,
                      'prompt_variants': run_prompt_variants}[name]
            report = runner(run, params, workers)
        logging.info(f"Experiment {name} took {time.time() - start_time:.2f} seconds")

        ensure_folder(out_dir)
        paths = export_report(report, out_dir)
        inputs = {'checkpoint': file_hash(checkpoint)} if checkpoint else {}
        write_manifest(out_dir, f'experiment {name}', run, inputs, {'summary': report.summary})
        return {'status': 'success', 'output_path': out_dir, 'summary': report.summary,
                'warnings': report.warnings, 'files': paths}
    except Exception as e:
        logging.error(f"Error running experiment {name}: {e}")
        raise
