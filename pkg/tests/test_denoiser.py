# Third-party imports
import numpy as np
import pytest

# Local imports
from croplab.denoiser import (
    DenoiserParams,
    ModelDims,
    NoiseSchedule,
    Trainer,
    forward,
    forward_batch,
    load_checkpoint,
    q_sample,
    save_checkpoint,
    train,
)
from croplab.errors import InvalidInputError, NumericError, ShapeError, TrainingDivergedError
from croplab.gridmath import DiffTensor, Tape, backward, mul, no_grad, precision, sum as tsum
from croplab.scenes import AugmentPolicy, make_dataset


@pytest.fixture
def small_dataset():
    return make_dataset(12, AugmentPolicy(), seed=0)


def test_linear_schedule_invariants():
    schedule = NoiseSchedule.linear()
    assert schedule.T == 50
    assert np.all(np.diff(schedule.alpha_bars) < 0)
    assert np.all((schedule.alpha_bars > 0) & (schedule.alpha_bars < 1))
    assert schedule.alpha_bar(0) == 1.0
    assert schedule.alpha_bar(50) < 0.01


@pytest.mark.parametrize('betas', [[0.1], [0.0, 0.1], [0.5, 1.0]])
def test_schedule_rejects_bad_betas(betas):
    with pytest.raises(InvalidInputError):
        NoiseSchedule(np.array(betas))


def test_q_sample_limits(rng):
    schedule = NoiseSchedule.linear()
    x0 = rng.random((32, 32)).astype(np.float32)
    noise = rng.standard_normal((32, 32)).astype(np.float32)
    assert np.max(np.abs(q_sample(x0, 1, noise, schedule) - x0)) <= 0.1
    scaled = q_sample(x0, 20, np.zeros_like(x0), schedule)
    np.testing.assert_allclose(scaled, np.sqrt(schedule.alpha_bar(20)) * x0, rtol=1e-6)
    with pytest.raises(InvalidInputError):
        q_sample(x0, 51, noise, schedule)


def test_q_sample_variance_matches_schedule(rng):
    schedule = NoiseSchedule.linear()
    t = 10
    draws = np.array([q_sample(np.zeros(4), t, rng.standard_normal(4), schedule) for _ in range(500)])
    assert draws.var() == pytest.approx(1 - schedule.alpha_bar(t), rel=0.1)


def test_q_sample_accepts_one_step_per_batch_entry(rng):
    schedule = NoiseSchedule.linear(10)
    x0 = np.ones((3, 4, 4))
    out = q_sample(x0, np.array([1, 5, 10]), np.zeros_like(x0), schedule)
    for i, t in enumerate([1, 5, 10]):
        assert np.allclose(out[i], np.sqrt(schedule.alpha_bar(t)))


def test_params_shapes_and_init_determinism(tiny_dims):
    params = DenoiserParams.init(tiny_dims, seed=3)
    assert set(params.names()) == set(tiny_dims.shapes())
    assert params.equals(DenoiserParams.init(tiny_dims, seed=3))
    assert not params.equals(DenoiserParams.init(tiny_dims, seed=4))
    assert all(t.requires_grad for t in params)


def test_model_dims_validation():
    with pytest.raises(InvalidInputError):
        ModelDims(d_model=15)
    with pytest.raises(InvalidInputError):
        ModelDims(image_size=30)


def test_record_rows_are_distributions(tiny_params, disc_prompt, rng):
    z = rng.standard_normal((32, 32))
    with no_grad():
        eps, record = forward(z, 5, disc_prompt, tiny_params)
    assert eps.shape == (32, 32)
    assert record.cross.shape == (4, 16, 16)
    np.testing.assert_allclose(record.cross.sum(axis=0), 1.0, atol=1e-5)
    np.testing.assert_allclose(record.self_maps.sum(axis=(1, 2)), 1.0, atol=1e-5)
    assert np.all(record.cross >= 0)


def test_forward_is_deterministic(tiny_params, disc_prompt, rng):
    z = rng.standard_normal((32, 32))
    with no_grad():
        a, ra = forward(z, 3, disc_prompt, tiny_params)
        b, rb = forward(z, 3, disc_prompt, tiny_params)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(ra.cross, rb.cross)


def test_forward_batch_matches_single_forward(tiny_params, disc_prompt, rng):
    z = rng.standard_normal((2, 32, 32))
    ids = np.array([disc_prompt.token_ids] * 2)
    with no_grad():
        batch, _ = forward_batch(z, [2, 7], ids, tiny_params)
        single, _ = forward(z[1], 7, disc_prompt, tiny_params)
    np.testing.assert_allclose(batch.values[1], single.values, atol=1e-5)


def test_forward_validation(tiny_params, disc_prompt):
    with pytest.raises(InvalidInputError):
        forward(np.zeros((32, 32)), 0, disc_prompt, tiny_params)
    with pytest.raises(InvalidInputError):
        forward(np.zeros((32, 32)), 11, disc_prompt, tiny_params)
    with pytest.raises(ShapeError):
        forward(np.zeros((16, 16)), 1, disc_prompt, tiny_params)
    bad = np.zeros((32, 32))
    bad[3, 3] = np.nan
    with pytest.raises(NumericError):
        forward(bad, 1, disc_prompt, tiny_params)


def test_record_gradient_matches_finite_differences(tiny_params, disc_prompt, rng, fd_gradient, sample_coords):
    region = np.zeros((16, 16))
    region[:2, :] = 1.0
    with precision(np.float64):
        params = tiny_params.astype(np.float64)
        z0 = rng.standard_normal((32, 32))

        def functional(z):
            _, record = forward(z, 4, disc_prompt, params)
            return tsum(mul(record.cross_map(disc_prompt.object_token_index), region))

        z = DiffTensor(z0, requires_grad=True)
        with Tape():
            backward(functional(z))
        assert np.any(z.grad != 0)

        coords = sample_coords((32, 32))
        with no_grad():
            numeric = fd_gradient(lambda x: functional(x).item(), z0, coords)
        analytic = np.array([z.grad[c] for c in coords])
        np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-8)


def test_self_map_gradient_is_nonzero(tiny_params, disc_prompt, rng):
    z = DiffTensor(rng.standard_normal((32, 32)), requires_grad=True)
    with Tape():
        _, record = forward(z, 2, disc_prompt, tiny_params)
        backward(tsum(mul(record.self_rows([0, 17, 200]), record.self_rows([0, 17, 200]))))
    assert np.abs(z.grad).sum() > 0


def test_train_zero_epochs_leaves_params(tiny_params, small_dataset):
    trained, curve = train(small_dataset, tiny_params, epochs=0)
    assert curve == []
    assert trained.equals(tiny_params)


def test_train_is_deterministic_and_leaves_input_untouched(tiny_params, small_dataset):
    before = tiny_params.copy()
    a, curve_a = train(small_dataset, tiny_params, epochs=2, seed=1, batch_size=4)
    b, curve_b = train(small_dataset, tiny_params, epochs=2, seed=1, batch_size=4)
    assert a.equals(b)
    assert curve_a == curve_b
    assert len(curve_a) == 2
    assert tiny_params.equals(before)
    assert not a.equals(before)


def test_trainer_validation(tiny_params, small_dataset):
    with pytest.raises(InvalidInputError):
        Trainer(tiny_params, [], NoiseSchedule.linear(10))
    with pytest.raises(InvalidInputError):
        Trainer(tiny_params, small_dataset, NoiseSchedule.linear(20))


def test_divergence_reports_epoch(tiny_params, small_dataset):
    params = tiny_params.copy()
    params.assign('out.b', np.full(params['out.b'].shape, 1e30, dtype=np.float32))
    trainer = Trainer(params, small_dataset, NoiseSchedule.linear(10))
    with pytest.raises(TrainingDivergedError) as excinfo:
        trainer.fit(1)
    assert excinfo.value.epoch == 1


def test_checkpoint_roundtrip_is_bit_exact(tmp_path, tiny_params, small_dataset):
    trainer = Trainer(tiny_params.copy(), small_dataset, NoiseSchedule.linear(10), batch_size=6)
    trainer.fit(1)
    path = str(tmp_path / 'model.ckpt')
    save_checkpoint(path, trainer.params, trainer.state, trainer.epoch, trainer.loss_curve)

    ckpt = load_checkpoint(path)
    assert ckpt.params.equals(trainer.params)
    assert ckpt.epoch == 1
    assert ckpt.state.step == trainer.state.step
    for name in trainer.params.names():
        assert np.array_equal(ckpt.state.m[name], trainer.state.m[name])
        assert np.array_equal(ckpt.state.v[name], trainer.state.v[name])
    assert ckpt.loss_curve == pytest.approx(trainer.loss_curve, rel=1e-6)


def test_resume_continues_the_same_run(tmp_path, tiny_params, small_dataset):
    schedule = NoiseSchedule.linear(10)
    straight = Trainer(tiny_params.copy(), small_dataset, schedule, batch_size=6)
    straight.fit(2)

    first = Trainer(tiny_params.copy(), small_dataset, schedule, batch_size=6)
    first.fit(1)
    path = str(tmp_path / 'half.ckpt')
    save_checkpoint(path, first.params, first.state, first.epoch, first.loss_curve)
    ckpt = load_checkpoint(path)
    resumed = Trainer(ckpt.params, small_dataset, schedule, batch_size=6,
                      state=ckpt.state, epoch=ckpt.epoch, loss_curve=ckpt.loss_curve)
    resumed.fit(1)

    assert resumed.params.equals(straight.params)
    assert resumed.loss_curve[-1] == straight.loss_curve[-1]
    assert resumed.loss_curve[1] < 2 * resumed.loss_curve[0]


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / 'bogus.ckpt'
    path.write_bytes(b'NOTACKPT' + bytes(16))
    with pytest.raises(InvalidInputError):
        load_checkpoint(str(path))
    truncated = tmp_path / 'short.ckpt'
    truncated.write_bytes(b'CROPLAB\x00\x01\x00\x00\x00\x05\x00\x00\x00')
    with pytest.raises(InvalidInputError):
        load_checkpoint(str(truncated))


@pytest.mark.slow
def test_training_reduces_loss_on_uncropped_data():
    data = make_dataset(2000, AugmentPolicy(), seed=0)
    _, curve = train(data, DenoiserParams.init(ModelDims()), epochs=5, seed=0)
    assert curve[-1] <= 0.7 * curve[0]
