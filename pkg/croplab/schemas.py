from marshmallow import Schema, ValidationError, fields, validate, validates_schema

from croplab.dispel.config import StepDecay
from croplab.scenes.augment import AugmentMode
from croplab.scenes.prompts import OBJECT_CLASSES, TEMPLATES
from croplab.sampler import SamplerVariant


class CommaList(fields.Field):
    """Comma-separated list in config text, a list in Python."""

    def __init__(self, item: fields.Field = None, **kwargs):
        super().__init__(**kwargs)
        self.item = item or fields.String()

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(',') if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ValidationError("Expected a comma-separated list.")
        return [self.item.deserialize(v) for v in value]

    def _serialize(self, value, attr, obj, **kwargs):
        return None if value is None else list(value)


UNIT = validate.Range(min=0.0, max=1.0)
OPEN_UNIT = validate.Range(min=0.0, max=1.0, min_inclusive=False)
SEED = validate.Range(min=0, max=2 ** 64 - 1)


class DatasetSchema(Schema):
    n = fields.Integer(load_default=2000, validate=validate.Range(min=1))
    size = fields.Integer(load_default=32, validate=validate.Range(min=16))
    mode = fields.String(load_default=AugmentMode.NONE.value,
                         validate=validate.OneOf([m.value for m in AugmentMode]))
    crop_lo = fields.Float(load_default=0.5, validate=OPEN_UNIT)
    crop_hi = fields.Float(load_default=0.9, validate=OPEN_UNIT)
    crop_prob = fields.Float(load_default=1.0, validate=UNIT)
    flip_prob = fields.Float(load_default=0.0, validate=UNIT)
    classes = CommaList(load_default=list(OBJECT_CLASSES),
                        validate=validate.ContainsOnly(OBJECT_CLASSES, error="Unknown object class."))
    radius_lo = fields.Float(load_default=0.08, validate=OPEN_UNIT)
    radius_hi = fields.Float(load_default=0.30, validate=OPEN_UNIT)
    templates = CommaList(load_default=['plain'],
                          validate=validate.ContainsOnly(sorted(TEMPLATES), error="Unknown prompt template."))
    seed = fields.Integer(load_default=0, validate=SEED)

    @validates_schema
    def validate_ranges(self, data, **kwargs):
        if data['crop_lo'] > data['crop_hi']:
            raise ValidationError("crop_lo must not exceed crop_hi.", 'crop_lo')
        if data['radius_lo'] >= data['radius_hi']:
            raise ValidationError("radius_lo must be below radius_hi.", 'radius_lo')
        if not data['classes']:
            raise ValidationError("At least one class is required.", 'classes')
        if not data['templates']:
            raise ValidationError("At least one template is required.", 'templates')


class ModelSchema(Schema):
    d_model = fields.Integer(load_default=64, validate=validate.Range(min=2))
    grid = fields.Integer(load_default=16, validate=validate.Range(min=4))
    init_scale = fields.Float(load_default=0.02, validate=validate.Range(min=0.0))
    seed = fields.Integer(load_default=0, validate=SEED)

    @validates_schema
    def validate_width(self, data, **kwargs):
        if data['d_model'] % 2:
            raise ValidationError("d_model must be even.", 'd_model')


class TrainSchema(Schema):
    epochs = fields.Integer(load_default=5, validate=validate.Range(min=0))
    lr = fields.Float(load_default=0.002, validate=validate.Range(min=0.0, min_inclusive=False))
    batch_size = fields.Integer(load_default=32, validate=validate.Range(min=1))
    seed = fields.Integer(load_default=0, validate=SEED)


class SamplerSchema(Schema):
    variant = fields.String(load_default=SamplerVariant.DDIM.value,
                            validate=validate.OneOf([v.value for v in SamplerVariant]))
    T = fields.Integer(load_default=50, validate=validate.Range(min=2))
    beta_start = fields.Float(load_default=1e-4, validate=OPEN_UNIT)
    beta_end = fields.Float(load_default=0.3, validate=validate.Range(min=0.0, max=1.0, min_inclusive=False,
                                                                    max_inclusive=False))
    seed = fields.Integer(load_default=0, validate=SEED)
    trace = fields.Boolean(load_default=False)
    snapshot_steps = CommaList(fields.Integer(), load_default=[])

    @validates_schema
    def validate_betas(self, data, **kwargs):
        if data['beta_start'] > data['beta_end']:
            raise ValidationError("beta_start must not exceed beta_end.", 'beta_start')


class GuidanceSchema(Schema):
    enabled = fields.Boolean(load_default=False)
    alpha = fields.Float(load_default=1.2, validate=validate.Range(min=0.0))
    beta = fields.Float(load_default=0.4, validate=validate.Range(min=0.0))
    K = fields.Integer(load_default=10, validate=validate.Range(min=1))
    T1 = fields.Integer(load_default=45, validate=validate.Range(min=1))
    alpha_t_start = fields.Float(load_default=40.0, validate=validate.Range(min=0.0))
    alpha_t_decay = fields.String(load_default=StepDecay.LINEAR_TO_ZERO_AT_T1.value,
                                  validate=validate.OneOf([d.value for d in StepDecay]))
    sigma = fields.Float(load_default=1.0, validate=validate.Range(min=0.0))
    band_width = fields.Integer(load_default=2, validate=validate.Range(min=1))
    inner_frac = fields.Float(load_default=0.5, validate=OPEN_UNIT)
    min_sep = fields.Integer(load_default=2, validate=validate.Range(min=0))
    use_cross = fields.Boolean(load_default=True)
    use_self = fields.Boolean(load_default=True)
    seed = fields.Integer(load_default=0, validate=SEED)

    @validates_schema
    def validate_geometry(self, data, **kwargs):
        grid = self.context.get('grid', 16)
        widest = (grid - 1) // 2
        if data['band_width'] > widest:
            raise ValidationError(f"band_width must not exceed {widest} on a {grid}x{grid} grid.", 'band_width')
        if data['K'] > grid * grid:
            raise ValidationError(f"K must not exceed {grid * grid} on a {grid}x{grid} grid.", 'K')


class EvalSchema(Schema):
    threshold = fields.Float(load_default=0.5, validate=validate.Range(min=0.0, max=1.0, min_inclusive=False,
                                                                     max_inclusive=False))
    margin = fields.Integer(load_default=1, validate=validate.Range(min=1))


class ExperimentSchema(Schema):
    n = fields.Integer(load_default=500, validate=validate.Range(min=1))
    base_epochs = fields.Integer(load_default=3, validate=validate.Range(min=0))
    base_crop_prob = fields.Float(load_default=0.5, validate=UNIT)
    seen_classes = CommaList(load_default=[],
                             validate=validate.ContainsOnly(OBJECT_CLASSES, error="Unknown object class."))
    workers = fields.Integer(load_default=None, allow_none=True, validate=validate.Range(min=1))


class RunSchema(Schema):
    out = fields.String(load_default='')


SECTION_SCHEMAS = {
    'dataset': DatasetSchema,
    'model': ModelSchema,
    'train': TrainSchema,
    'sampler': SamplerSchema,
    'guidance': GuidanceSchema,
    'eval': EvalSchema,
    'experiment': ExperimentSchema,
    'run': RunSchema,
}
