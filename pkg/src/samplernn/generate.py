"""Batched autoregressive sampling from trained checkpoints.

All sequences in a batch advance in lockstep, one sample per step, but each
owns a counter-based RNG stream keyed by (seed, sequence index), so a
sequence's output never depends on how the batch is composed. Priming is
frame_size codes of quantized silence.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .audio import AudioBuffer, write_wav
from .autodiff import Tensor
from .checkpoint import load_checkpoint, model_from_checkpoint
from .diagnostics import diagnose_clip
from .errors import (
    CheckpointError,
    ContractError,
    GenerationMemoryError,
    NumericError,
)
from .model import (
    CELL_LSTM,
    H0_LEARNED,
    H0_RANDOM_STD,
    RecurrentState,
    dequantize,
    quantize,
)

log = logging.getLogger("samplernn")

MODE_SOFTMAX = "softmax_sample"
MODE_ARGMAX = "argmax"


@dataclass
class GenConfig:
    n_seq: int = 10
    clip_seconds: float = 30.0
    temperature: float = 1.0
    mode: str = MODE_SOFTMAX
    seed: int = 0
    # generous desk-scale stand-in for a device memory limit
    memory_budget_bytes: int = 1 << 31

    def __post_init__(self):
        if self.n_seq < 1:
            raise ContractError(f"n_seq must be >= 1, got {self.n_seq}")
        if self.clip_seconds <= 0:
            raise ContractError(f"clip_seconds must be positive, got {self.clip_seconds}")
        if self.temperature <= 0:
            raise ContractError(f"temperature must be positive, got {self.temperature}")
        if self.mode not in (MODE_SOFTMAX, MODE_ARGMAX):
            raise ContractError(f"mode must be softmax_sample or argmax, got {self.mode!r}")


def sequence_stream(seed, index):
    """Counter-based RNG stream for one sequence: Philox keyed (seed, index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_categorical(logits, temperature, rng, argmax=False):
    """Draw a code from softmax(logits / temperature) by inverse CDF.

    Argmax mode ignores temperature and returns the smallest index attaining
    the maximum logit.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits in sampler")
    if argmax:
        return int(np.argmax(logits))
    z = logits / temperature
    z -= z.max()
    p = np.exp(z)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), logits.size - 1)


def _initial_rnn_arrays(model, streams):
    """Per-sequence h0: learned broadcasts the trained vectors, randomized
    draws each sequence's vectors from its own stream (batch-independent)."""
    cfg = model.config
    n_seq = len(streams)
    h, c = [], []
    for l in range(cfg.n_layers):
        if cfg.h0_mode == H0_LEARNED:
            h.append(np.repeat(model.params[f"h0.h{l}"].data[None, :], n_seq, axis=0))
            if cfg.cell == CELL_LSTM:
                c.append(np.repeat(model.params[f"h0.c{l}"].data[None, :], n_seq, axis=0))
        else:
            h.append(np.stack([
                s.normal(0.0, H0_RANDOM_STD, cfg.hidden_dim).astype(model.dtype)
                for s in streams
            ]))
            if cfg.cell == CELL_LSTM:
                c.append(np.stack([
                    s.normal(0.0, H0_RANDOM_STD, cfg.hidden_dim).astype(model.dtype)
                    for s in streams
                ]))
    return RecurrentState(
        [Tensor(x) for x in h],
        [Tensor(x) for x in c] if cfg.cell == CELL_LSTM else None,
    )


def generate_batch(model, cfg):
    """Generate cfg.n_seq clips of cfg.clip_seconds in lockstep.

    Returns a list of AudioBuffers, one per sequence, each of exactly
    clip_seconds*sample_rate samples.
    """
    mcfg = model.config
    fs = mcfg.frame_size
    n_samples = int(round(cfg.clip_seconds * mcfg.sample_rate))
    if n_samples < 1:
        raise ContractError("clip too short to generate")

    est_bytes = cfg.n_seq * (
        (n_samples + fs) * 8  # code buffer
        + fs * mcfg.hidden_dim * 8  # conditioning rows
        + 2 * mcfg.n_layers * mcfg.hidden_dim * 8  # recurrent state
    )
    if est_bytes > cfg.memory_budget_bytes:
        raise GenerationMemoryError(
            f"batch of {cfg.n_seq} sequences needs ~{est_bytes} bytes "
            f"(budget {cfg.memory_budget_bytes}); reduce n_seq"
        )

    streams = [sequence_stream(cfg.seed, k) for k in range(cfg.n_seq)]
    argmax = cfg.mode == MODE_ARGMAX
    silence = quantize(0.0, mcfg.q_levels)
    codes = np.full((cfg.n_seq, fs + n_samples), silence, dtype=np.int64)

    with ad.no_grad():
        rnn = _initial_rnn_arrays(model, streams)
        cond = np.zeros((cfg.n_seq, fs, mcfg.hidden_dim), dtype=model.dtype)
        for t in range(fs, fs + n_samples):
            k = t % fs
            if k == 0:  # a new frame of history is complete; advance the tier
                cond_t, rnn = model.frame_tier_forward(codes[:, t - fs : t], rnn)
                cond = cond_t.data.reshape(cfg.n_seq, fs, mcfg.hidden_dim)
            logits = model.sample_tier_forward(
                codes[:, t - fs : t], Tensor(cond[:, k])
            ).data
            for b in range(cfg.n_seq):
                codes[b, t] = sample_categorical(
                    logits[b], cfg.temperature, streams[b], argmax=argmax
                )

    samples = dequantize(codes[:, fs:], mcfg.q_levels).astype(np.float32)
    return [AudioBuffer(samples[b], mcfg.sample_rate) for b in range(cfg.n_seq)]


def generate_from_checkpoint(path, cfg):
    """Load a checkpoint, rebuild the model, and generate a batch."""
    ck = load_checkpoint(path)
    model = model_from_checkpoint(ck)
    return ck, generate_batch(model, cfg)


def checkpoint_generation_schedule(ckpt_dir, cfg, out_dir, report_name="diagnostics.txt"):
    """Generate clips and diagnostics for every checkpoint in a directory.

    Checkpoints are processed in iteration order; unreadable files are
    skipped with a warning. WAVs land in out_dir as ckpt<iter>_seq<k>.wav;
    one report line per clip is appended to the report file and the reports
    are returned in file order.
    """
    candidates = sorted(
        os.path.join(ckpt_dir, f) for f in os.listdir(ckpt_dir) if f.endswith(".srnn")
    )
    loaded = []
    for path in candidates:
        try:
            loaded.append((load_checkpoint(path), path))
        except CheckpointError as exc:
            log.warning("skipping unreadable checkpoint %s: %s", path, exc)
    if not loaded:
        raise CheckpointError(f"no valid checkpoints in {ckpt_dir}")
    loaded.sort(key=lambda pair: pair[0].iteration)

    os.makedirs(out_dir, exist_ok=True)
    reports = []
    report_path = os.path.join(out_dir, report_name)
    with open(report_path, "a", encoding="utf-8") as fh:
        for ck, path in loaded:
            model = model_from_checkpoint(ck)
            clips = generate_batch(model, cfg)
            for k, clip in enumerate(clips):
                name = f"ckpt{ck.iteration}_seq{k}.wav"
                write_wav(clip, os.path.join(out_dir, name))
                report = diagnose_clip(clip, name)
                reports.append(report)
                fh.write(report.line() + "\n")
    return reports
