"""
Experiment run configuration.

A run config is a sectioned ``key = value`` file::

    [dataset]
    mode = random_crop
    n = 2000

    [guidance]
    enabled = true

Every key has a default (see :mod:`croplab.schemas`) and can be overridden from the command
line with ``--section.key value``. A ``run_manifest.json`` written by a previous command is
accepted in place of a config file.
"""

import configparser
import copy
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

from marshmallow import ValidationError

from croplab.denoiser import ModelDims, NoiseSchedule
from croplab.dispel import GuidanceConfig
from croplab.errors import ConfigError, InvalidInputError
from croplab.sampler import SamplerConfig
from croplab.scenes.augment import AugmentPolicy
from croplab.schemas import SECTION_SCHEMAS


@dataclass
class RunConfig:
    """Resolved, typed configuration: one dict per section."""
    sections: Dict[str, Dict[str, Any]]

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.sections[section]

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: SECTION_SCHEMAS[name]().dump(values) for name, values in self.sections.items()}

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'RunConfig':
        raw = self.to_dict()
        for section, key, value in _split_overrides(overrides):
            raw.setdefault(section, {})[key] = value
        return load_sections(raw)

    def augment_policy(self, mode: Optional[str] = None, crop_prob: Optional[float] = None) -> AugmentPolicy:
        ds = self['dataset']
        return AugmentPolicy(
            mode=mode or ds['mode'],
            crop_ratio_range=(ds['crop_lo'], ds['crop_hi']),
            flip_prob=ds['flip_prob'],
            seed=ds['seed'],
            crop_prob=ds['crop_prob'] if crop_prob is None else crop_prob,
        )

    def model_dims(self) -> ModelDims:
        return ModelDims(d_model=self['model']['d_model'], grid=self['model']['grid'],
                         image_size=self['dataset']['size'], n_steps=self['sampler']['T'])

    def schedule(self) -> NoiseSchedule:
        s = self['sampler']
        return NoiseSchedule.linear(s['T'], s['beta_start'], s['beta_end'])

    def guidance_config(self, ablate: Optional[str] = None) -> GuidanceConfig:
        g = {k: v for k, v in self['guidance'].items() if k != 'enabled'}
        if ablate == 'cross':
            g['use_cross'] = False
        elif ablate == 'self':
            g['use_self'] = False
        return GuidanceConfig(grid=self['model']['grid'], **g)

    def sampler_config(self, guidance: Optional[bool] = None, ablate: Optional[str] = None) -> SamplerConfig:
        s = self['sampler']
        enabled = self['guidance']['enabled'] if guidance is None else guidance
        return SamplerConfig(
            schedule=self.schedule(),
            variant=s['variant'],
            seed=s['seed'],
            guidance=self.guidance_config(ablate) if enabled else None,
            snapshot_steps=tuple(s['snapshot_steps']),
        )

    def validate(self) -> 'RunConfig':
        """Cross-section checks; builds every derived object once so errors surface early."""
        try:
            self.model_dims()
            self.guidance_config().check_steps(self['sampler']['T'])
            self.augment_policy()
            self.schedule()
        except InvalidInputError as e:
            raise ConfigError(str(e)) from e
        return self


def _split_overrides(overrides: Mapping[str, Any]) -> Iterable[Tuple[str, str, Any]]:
    for dotted, value in overrides.items():
        section, sep, key = dotted.partition('.')
        if not sep or not key:
            raise ConfigError(f"Override '{dotted}' must have the form section.key")
        yield section, key, value


def load_sections(raw: Mapping[str, Mapping[str, Any]]) -> RunConfig:
    """
    Validate raw section dicts (strings or typed values) into a RunConfig.

    Raises:
        ConfigError: On unknown sections or keys, type errors and range violations
    """
    unknown = sorted(set(raw) - set(SECTION_SCHEMAS))
    if unknown:
        raise ConfigError(f"Unknown config sections: {unknown}")
    sections = {}
    errors = {}
    for name, schema_cls in SECTION_SCHEMAS.items():
        # model precedes guidance, whose bounds depend on the grid
        context = {'grid': sections.get('model', {}).get('grid', 16)}
        try:
            sections[name] = schema_cls(context=context).load(dict(raw.get(name, {})))
        except ValidationError as e:
            errors[name] = e.messages
    if errors:
        logging.error(f"Invalid run configuration: {errors}")
        raise ConfigError(f"Invalid run configuration: {json.dumps(errors, sort_keys=True)}")
    return RunConfig(sections).validate()


def read_sections(path: str) -> Dict[str, Dict[str, Any]]:
    """Raw sections of an INI config file or of a run manifest."""
    try:
        if path.endswith('.json'):
            with open(path, 'r') as f:
                manifest = json.load(f)
            if 'config' not in manifest:
                raise ConfigError(f"{path} is not a run manifest")
            return copy.deepcopy(manifest['config'])
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if not parser.read(path):
            raise ConfigError(f"Config file {path} not found")
        return {name: dict(parser[name]) for name in parser.sections()}
    except (configparser.Error, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e


def load_run_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Resolve a run configuration.

    Args:
        path: INI file or run manifest; None uses the defaults only
        overrides: Dotted ``section.key`` values applied on top

    Returns:
        Validated RunConfig
    """
    raw = read_sections(path) if path else {}
    for section, key, value in _split_overrides(overrides or {}):
        raw.setdefault(section, {})[key] = value
    config = load_sections(raw)
    logging.debug(f"Resolved run config from {path or 'defaults'}")
    return config
