"""Tiny conditional attention denoiser, its noise schedule, training loop and checkpoints."""

from .schedule import NoiseSchedule, q_sample
from .params import DenoiserParams, ModelDims
from .model import AttentionRecord, forward, forward_batch
from .training import AdamState, Trainer, train
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    'NoiseSchedule', 'q_sample', 'DenoiserParams', 'ModelDims', 'AttentionRecord', 'forward',
    'forward_batch', 'AdamState', 'Trainer', 'train', 'Checkpoint', 'load_checkpoint',
    'save_checkpoint',
]
