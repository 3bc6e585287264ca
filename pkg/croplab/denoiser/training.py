import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from croplab.errors import InvalidInputError, TrainingDivergedError
from croplab.gridmath import Tape, backward, mean
from croplab.utils import make_rng
from .model import forward_batch
from .params import DenoiserParams
from .schedule import NoiseSchedule, q_sample

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
CLIP_NORM = 1.0


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name plus the step counter."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, params: DenoiserParams) -> 'AdamState':
        return cls({n: np.zeros(params[n].shape, np.float32) for n in params.names()},
                   {n: np.zeros(params[n].shape, np.float32) for n in params.names()})


def _stack_dataset(dataset: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    """Images (N, H, W) and token ids (N, L) from (image, tokens, ...) items."""
    images = np.stack([np.asarray(item[0], dtype=np.float32) for item in dataset])
    token_ids = np.stack([np.asarray(item[1].token_ids, dtype=np.int64) for item in dataset])
    return images, token_ids


class Trainer:
    """
    Minibatch Adam on the mean-squared noise-prediction loss.

    Each epoch draws its permutation, timesteps and noise from ``derive_seed(seed, 'epoch', e)``
    so that a trainer restored from a checkpoint continues exactly where it stopped.
    """

    def __init__(self, params: DenoiserParams, dataset: Sequence, schedule: NoiseSchedule,
                 lr: float = 2e-3, batch_size: int = 32, seed: int = 0,
                 state: Optional[AdamState] = None, epoch: int = 0,
                 loss_curve: Optional[List[float]] = None):
        if not len(dataset):
            raise InvalidInputError("Cannot train on an empty dataset")
        if schedule.T != params.dims.n_steps:
            raise InvalidInputError(f"schedule has {schedule.T} steps, model expects {params.dims.n_steps}")
        if lr <= 0 or batch_size < 1:
            raise InvalidInputError(f"lr must be > 0 and batch_size >= 1, got {lr}, {batch_size}")
        self.params = params
        self.schedule = schedule
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.images, self.token_ids = _stack_dataset(dataset)
        self.state = state or AdamState.zeros(params)
        self.epoch = epoch
        self.loss_curve = list(loss_curve or [])

    def _adam_update(self) -> None:
        grads = {n: self.params[n].grad for n in self.params.names()}
        total = np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values() if g is not None))
        clip = min(1.0, CLIP_NORM / (total + 1e-12))

        b1, b2 = ADAM_BETAS
        self.state.step += 1
        correction1 = 1.0 - b1 ** self.state.step
        correction2 = 1.0 - b2 ** self.state.step
        for name, g in grads.items():
            if g is None:
                continue
            g = (g * clip).astype(np.float32)
            m = b1 * self.state.m[name] + (1 - b1) * g
            v = b2 * self.state.v[name] + (1 - b2) * g * g
            self.state.m[name], self.state.v[name] = m.astype(np.float32), v.astype(np.float32)
            update = self.lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)
            self.params.assign(name, self.params[name].values - update)

    def run_epoch(self) -> float:
        """Train one epoch and return its sample-weighted mean loss."""
        start = time.time()
        rng = make_rng(self.seed, 'epoch', self.epoch)
        n = len(self.images)
        order = rng.permutation(n)
        total = 0.0
        for offset in range(0, n, self.batch_size):
            idx = order[offset:offset + self.batch_size]
            t = rng.integers(1, self.schedule.T + 1, size=len(idx))
            noise = rng.standard_normal(size=(len(idx),) + self.images.shape[1:]).astype(np.float32)
            x_t = q_sample(self.images[idx], t, noise, self.schedule)

            with Tape():
                eps, _ = forward_batch(x_t, t, self.token_ids[idx], self.params)
                diff = eps - noise
                loss = mean(diff * diff)
                value = loss.item()
                if not np.isfinite(value):
                    logging.error(f"Training diverged in epoch {self.epoch + 1}")
                    raise TrainingDivergedError(self.epoch + 1)
                self.params.zero_grad()
                backward(loss)
            self._adam_update()
            total += value * len(idx)

        self.epoch += 1
        epoch_loss = total / n
        self.loss_curve.append(epoch_loss)
        logging.info(f"Epoch {self.epoch}: loss {epoch_loss:.5f} ({time.time() - start:.2f} seconds)")
        return epoch_loss

    def fit(self, epochs: int) -> List[float]:
        for _ in range(epochs):
            self.run_epoch()
        return self.loss_curve


def train(dataset: Sequence, params: DenoiserParams, epochs: int, lr: float = 2e-3, seed: int = 0,
          batch_size: int = 32, schedule: Optional[NoiseSchedule] = None) -> Tuple[DenoiserParams, List[float]]:
    """
    Train a copy of ``params`` on ``dataset``.

    Args:
        dataset: Items whose first two fields are (image, PromptTokens)
        params: Starting parameters (left untouched)
        epochs: Number of passes over the dataset; 0 returns an unchanged copy
        lr: Adam learning rate
        seed: Root seed of the epoch streams
        batch_size: Minibatch size
        schedule: Noise schedule; defaults to the linear schedule of matching length

    Returns:
        Trained parameters and the per-epoch loss curve

    Raises:
        TrainingDivergedError: If a minibatch loss is non-finite
    """
    schedule = schedule or NoiseSchedule.linear(params.dims.n_steps)
    trainer = Trainer(params.copy(), dataset, schedule, lr=lr, batch_size=batch_size, seed=seed)
    trainer.fit(epochs)
    return trainer.params, trainer.loss_curve
