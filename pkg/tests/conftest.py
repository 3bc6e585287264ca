# Standard library imports
import logging

# Third-party imports
import numpy as np
import pytest

# Local imports
from croplab.config.run import load_run_config
from croplab.denoiser import DenoiserParams, ModelDims, NoiseSchedule
from croplab.scenes import make_prompt


@pytest.fixture(autouse=True)
def quiet_logging():
    """Keep test output readable; individual tests can lower the level with caplog."""
    logging.getLogger().setLevel(logging.WARNING)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def tiny_dims():
    """16-wide model over 10 steps on the default 32x32 / 16x16 geometry."""
    return ModelDims(d_model=16, n_steps=10)


@pytest.fixture(scope='session')
def tiny_schedule(tiny_dims):
    return NoiseSchedule.linear(tiny_dims.n_steps)


@pytest.fixture
def tiny_params(tiny_dims):
    return DenoiserParams.init(tiny_dims, seed=0)


@pytest.fixture
def disc_prompt():
    return make_prompt('disc')


@pytest.fixture
def fd_gradient():
    """Central finite differences of a scalar function of an array at chosen coordinates."""
    def gradient(f, x, coords, h=1e-5):
        values = []
        for idx in coords:
            plus, minus = x.copy(), x.copy()
            plus[idx] += h
            minus[idx] -= h
            values.append((f(plus) - f(minus)) / (2 * h))
        return np.array(values)
    return gradient


@pytest.fixture
def sample_coords(rng):
    """Six random coordinates of an array shape."""
    def coords(shape, k=6):
        flat = rng.choice(int(np.prod(shape)), size=k, replace=False)
        return [np.unravel_index(i, shape) for i in flat]
    return coords


TINY_OVERRIDES = {
    'dataset.n': 16,
    'model.d_model': 16,
    'sampler.T': 10,
    'guidance.T1': 7,
    'train.epochs': 1,
    'train.batch_size': 8,
    'experiment.n': 4,
    'experiment.base_epochs': 1,
    'experiment.workers': 1,
}


@pytest.fixture
def tiny_overrides():
    return dict(TINY_OVERRIDES)


@pytest.fixture
def tiny_run(tiny_overrides):
    """Run config small enough to train and sample in about a second."""
    return load_run_config(None, tiny_overrides)
