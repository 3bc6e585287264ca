# Standard library imports
import math

# Third-party imports
import numpy as np
import pytest

# Local imports
from croplab.errors import InvalidInputError
from croplab.metrics import border_contact
from croplab.scenes import (
    OBJECT_CLASSES,
    AugmentPolicy,
    SceneSpec,
    apply_policy,
    crop_resize,
    export_dataset,
    load_dataset_dir,
    make_dataset,
    make_multi_prompt,
    make_prompt,
    random_crop,
    render_scene,
)
from croplab.scenes.prompts import PAD_ID, TOKEN_IDS


def _contact_fraction(items):
    return np.mean([bool(border_contact(item.image)) for item in items])


def test_centered_disc_pixels():
    spec = SceneSpec('disc', (0.5, 0.5), 0.2, foreground_level=0.9, background_level=0.1)
    img = render_scene(spec, 32)
    assert img.shape == (32, 32)
    assert img[16, 16] == pytest.approx(0.9)
    assert img[0, 0] == pytest.approx(0.1)
    assert np.array_equal(img, render_scene(spec, 32))


def test_disc_area_matches_analytic_area():
    spec = SceneSpec('disc', (0.5, 0.5), 0.2)
    area = int((render_scene(spec, 64) == 1.0).sum())
    expected = math.pi * (0.2 * 64) ** 2
    assert abs(area - expected) / expected < 0.15


@pytest.mark.parametrize('object_class', OBJECT_CLASSES)
def test_every_class_renders_an_interior_object(object_class):
    img = render_scene(SceneSpec(object_class, (0.5, 0.5), 0.25), 32)
    assert (img == 1.0).sum() > 0
    assert border_contact(img) is False


@pytest.mark.parametrize('spec, size', [
    (SceneSpec('hexagon', (0.5, 0.5), 0.2), 32),
    (SceneSpec('disc', (0.5, 0.5), 0.5), 32),
    (SceneSpec('disc', (0.05, 0.5), 0.2), 32),
    (SceneSpec('disc', (0.5, 0.5), 0.2, foreground_level=0.6, background_level=0.3), 32),
    (SceneSpec('disc', (0.5, 0.5), 0.2), 8),
])
def test_render_rejects_invalid_scenes(spec, size):
    with pytest.raises(InvalidInputError):
        render_scene(spec, size)


def test_random_crop_ratio_one_is_identity(rng):
    img = render_scene(SceneSpec('square', (0.4, 0.6), 0.2), 32)
    assert np.array_equal(random_crop(img, 1.0, rng), img)


def test_corner_crop_clips_centered_disc():
    img = render_scene(SceneSpec('disc', (0.5, 0.5), 0.3), 32)
    assert border_contact(img) is False
    cropped = crop_resize(img, 0.5, (0, 0))
    assert cropped.shape == img.shape
    assert border_contact(cropped) is True


@pytest.mark.parametrize('ratio', [0.0, -0.2, 1.5])
def test_random_crop_rejects_bad_ratio(ratio, rng):
    with pytest.raises(InvalidInputError):
        random_crop(np.zeros((32, 32), dtype=np.float32), ratio, rng)


def test_crop_raises_border_contact_rate(rng):
    base = make_dataset(300, AugmentPolicy(), seed=5)
    cropped = [random_crop(item.image, 0.7, rng) for item in base]
    assert np.mean([bool(border_contact(img)) for img in cropped]) > _contact_fraction(base)


def test_uncropped_dataset_has_no_border_contact():
    items = make_dataset(100, AugmentPolicy(mode='none'), seed=1)
    assert _contact_fraction(items) == 0.0
    assert all(0.0 <= item.image.min() and item.image.max() <= 1.0 for item in items)


def test_random_crop_dataset_contacts_borders():
    items = make_dataset(400, AugmentPolicy(mode='random_crop', crop_ratio_range=(0.5, 0.9), seed=3), seed=3)
    assert _contact_fraction(items) > 0.15
    assert all(item.cropped for item in items)


def test_contact_rate_grows_as_crops_get_tighter():
    rates = [
        _contact_fraction(make_dataset(400, AugmentPolicy(mode='random_crop', crop_ratio_range=r, seed=9), seed=9))
        for r in [(0.8, 0.9), (0.6, 0.7), (0.4, 0.5)]
    ]
    assert 0 < rates[0] < rates[1] < rates[2]


def test_crop_prob_controls_mixed_policy():
    items = make_dataset(200, AugmentPolicy(mode='random_crop', crop_prob=0.5, seed=2), seed=2)
    assert 0.3 < np.mean([item.cropped for item in items]) < 0.7


def test_flip_policy_mirrors_without_cropping(rng):
    img = render_scene(SceneSpec('triangle', (0.3, 0.6), 0.2), 32)
    flipped, cropped = apply_policy(img, AugmentPolicy(flip_prob=1.0), rng)
    assert not cropped
    assert np.array_equal(flipped, img[:, ::-1])
    unchanged, _ = apply_policy(img, AugmentPolicy(), rng)
    assert np.array_equal(unchanged, img)


def test_make_dataset_is_deterministic_and_class_balanced():
    policy = AugmentPolicy(mode='random_crop', seed=11)
    first, second = make_dataset(40, policy, seed=4), make_dataset(40, policy, seed=4)
    assert all(np.array_equal(a.image, b.image) and a.tokens == b.tokens for a, b in zip(first, second))
    counts = {c: sum(item.spec.object_class == c for item in first) for c in OBJECT_CLASSES}
    assert set(counts.values()) == {10}


def test_make_dataset_validation():
    with pytest.raises(InvalidInputError):
        make_dataset(0, AugmentPolicy())
    with pytest.raises(InvalidInputError):
        make_dataset(5, AugmentPolicy(), classes=['hexagon'])
    with pytest.raises(InvalidInputError):
        AugmentPolicy(mode='random_crop', crop_ratio_range=(0.9, 0.5))


def test_export_and_reload_dataset(tmp_path):
    items = make_dataset(8, AugmentPolicy(mode='random_crop', seed=1), seed=1, templates=('plain', 'complete'))
    manifest = export_dataset(items, str(tmp_path))
    assert (tmp_path / 'manifest.csv').exists()
    assert len(list((tmp_path / 'images').glob('*.pgm'))) == 8
    assert list(manifest.columns[:3]) == ['filename', 'class', 'template']

    loaded = load_dataset_dir(str(tmp_path))
    assert len(loaded) == 8
    for original, back in zip(items, loaded):
        assert np.max(np.abs(original.image - back.image)) <= 0.5 / 255 + 1e-6
        assert back.tokens == original.tokens
        assert back.spec.object_class == original.spec.object_class


def test_pgm_header_is_binary_p5(tmp_path):
    export_dataset(make_dataset(1, AugmentPolicy()), str(tmp_path))
    data = (tmp_path / 'images' / '000000.pgm').read_bytes()
    assert data.startswith(b'P5')
    assert len(data) > 32 * 32
    assert b'#' not in data[:len(data) - 32 * 32]


def test_load_dataset_dir_requires_manifest(tmp_path):
    with pytest.raises(InvalidInputError):
        load_dataset_dir(str(tmp_path))


def test_prompt_object_index_points_at_class_token():
    prompt = make_prompt('disc')
    assert prompt.words == ['a', 'disc', '<pad>', '<pad>']
    assert prompt.object_token_index == 1
    assert prompt.token_ids[prompt.object_token_index] == TOKEN_IDS['disc']
    assert make_prompt('ring', 'complete').object_token_index == 2
    assert make_prompt('ring', 'middle').object_class == 'ring'


def test_multi_prompt_marks_every_object():
    prompt = make_multi_prompt(['disc', 'square'])
    assert prompt.object_indices == (1, 2)
    assert prompt.token_ids[3] == PAD_ID
    with pytest.raises(InvalidInputError):
        make_multi_prompt(['disc', 'square', 'ring', 'triangle'])


def test_prompt_validation():
    with pytest.raises(InvalidInputError):
        make_prompt('hexagon')
    with pytest.raises(InvalidInputError):
        make_prompt('disc', 'shouting')
