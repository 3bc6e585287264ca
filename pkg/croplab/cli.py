"""
Command-line entry point.

    python -m croplab gen-data --config lab.ini --out runs/data
    python -m croplab train --data runs/data --out runs/model
    python -m croplab sample --checkpoint runs/model/model.ckpt --n 8 --guidance on
    python -m croplab eval --images runs/sample
    python -m croplab experiment guidance_ab --n 500 --experiment.workers 4

Any config key can be overridden with ``--section.key value``. Exit codes: 0 success,
2 configuration error, 3 runtime or numeric error.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from marshmallow import ValidationError

from croplab import main as pipeline
from croplab.config import config
from croplab.config.run import RunConfig, load_run_config
from croplab.errors import ConfigError, CropLabError
from croplab.experiments import EXPERIMENTS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SEEDED_SECTIONS = ('dataset', 'model', 'train', 'sampler', 'guidance')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Run config file (INI) or run_manifest.json')
    common.add_argument('--seed', type=int, help='Root seed applied to every section')
    common.add_argument('--out', help='Output directory')

    parser = argparse.ArgumentParser(prog='croplab', description='Object-incompleteness lab for toy diffusion models')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen-data', parents=[common], help='Generate a synthetic dataset')
    gen.add_argument('--n', type=int, help='Number of images')

    train = sub.add_parser('train', parents=[common], help='Train a denoiser')
    train.add_argument('--data', help='Dataset directory written by gen-data')
    train.add_argument('--resume', help='Checkpoint to resume from')

    sample = sub.add_parser('sample', parents=[common], help='Sample images from a checkpoint')
    sample.add_argument('--checkpoint', required=True)
    sample.add_argument('--n', type=int, default=1, help='Number of images')
    sample.add_argument('--guidance', choices=['on', 'off'])
    sample.add_argument('--ablate', choices=['cross', 'self', 'none'], default='none')

    ev = sub.add_parser('eval', parents=[common], help='Incompleteness rate of a PGM directory')
    ev.add_argument('--images', required=True, help='Directory of .pgm images')

    exp = sub.add_parser('experiment', parents=[common], help='Run a headline experiment')
    exp.add_argument('name', choices=EXPERIMENTS)
    exp.add_argument('--checkpoint', help='Trained model (crop_trend: base model)')
    exp.add_argument('--n', type=int, help='Samples per condition')
    exp.add_argument('--guidance', choices=['on', 'off'])
    exp.add_argument('--ablate', choices=['cross', 'self', 'none'], default='none')
    return parser


def parse_overrides(extra: Sequence[str]) -> Dict[str, str]:
    """``--section.key value`` (or ``--section.key=value``) pairs left over by argparse."""
    overrides: Dict[str, str] = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith('--') or '.' not in token:
            raise ConfigError(f"Unrecognized argument '{token}'")
        key, eq, value = token[2:].partition('=')
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(f"Missing value for '{token}'")
            value = extra[i + 1]
            i += 1
        overrides[key] = value
        i += 1
    return overrides


def resolve_config(args: argparse.Namespace, extra: Sequence[str]) -> Tuple[RunConfig, str]:
    """Merge config file, dedicated flags and dotted overrides; returns the config and the output dir."""
    overrides = parse_overrides(extra)
    if args.seed is not None:
        for section in SEEDED_SECTIONS:
            overrides[f'{section}.seed'] = args.seed
    if args.command in ('gen-data', 'experiment') and args.n is not None:
        overrides['experiment.n' if args.command == 'experiment' else 'dataset.n'] = args.n
    if getattr(args, 'guidance', None) is not None:
        overrides['guidance.enabled'] = args.guidance == 'on'
    if args.command == 'experiment' and args.name == 'ablation' and args.ablate != 'none':
        raise ConfigError("--ablate does not apply to the ablation experiment, which runs every variant")
    if getattr(args, 'ablate', 'none') in ('cross', 'self'):
        overrides[f"guidance.use_{args.ablate}"] = False
    if args.out:
        overrides['run.out'] = args.out

    run = load_run_config(args.config, overrides)
    name = args.command if args.command != 'experiment' else os.path.join('experiment', args.name)
    return run, run['run']['out'] or os.path.join(config.output['dir'], name)


def dispatch(args: argparse.Namespace, run: RunConfig, out_dir: str) -> dict:
    if args.command == 'gen-data':
        return pipeline.run_gen_data(run, out_dir)
    if args.command == 'train':
        return pipeline.run_train(run, out_dir, data_dir=args.data, resume=args.resume)
    if args.command == 'sample':
        return pipeline.run_sample(run, out_dir, args.checkpoint, args.n)
    if args.command == 'eval':
        return pipeline.run_eval(run, out_dir, args.images)
    return pipeline.run_experiment(args.name, run, out_dir, checkpoint=args.checkpoint)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        run, out_dir = resolve_config(args, extra)
    except (ConfigError, ValidationError) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    try:
        result = dispatch(args, run, out_dir)
    except (ConfigError, ValidationError) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (CropLabError, OSError) as e:
        logging.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logging.exception(f"{args.command} failed unexpectedly: {e}")
        return EXIT_RUNTIME

    logging.info(f"{args.command} finished: {result.get('output_path') or result.get('checkpoint')}")
    for warning in result.get('warnings', []):
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK
