import os

# single-threaded BLAS keeps trajectories bit-reproducible across runs
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from samplernn.model import ModelConfig


def toy_config(**overrides):
    base = dict(
        q_levels=16,
        embed_size=4,
        hidden_dim=8,
        n_layers=2,
        cell="lstm",
        frame_size=4,
        sample_rate=16000,
        h0_mode="learned",
        skip_connections=True,
        weight_norm=True,
        seed=3,
    )
    base.update(overrides)
    return ModelConfig(**base)


def make_tone(freq, seconds, sample_rate=16000, amplitude=0.8):
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t)


def best_cyclic_match(generated, reference, period, burn_in=0):
    """Best exact-code match rate of `generated` against cyclic shifts of
    `reference`, scanning one period of offsets."""
    g = generated[burn_in:]
    n = g.size
    best = 0.0
    for offset in range(period):
        rolled = np.take(reference, (offset + np.arange(n)) % reference.size)
        best = max(best, float(np.mean(g == rolled)))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
