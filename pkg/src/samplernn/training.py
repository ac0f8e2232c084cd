"""Truncated-BPTT training: Adam updates, gradient clipping, validation.

Chunks are grouped into fixed batches of rows; each row advances through its
chunk segment-by-segment in lockstep, with recurrent state carried across
segments (detached, so no gradient crosses a boundary) and reset to h0 at
chunk boundaries. The batch schedule is a pure function of (seed, group
index), which is what makes resuming from a checkpoint exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt_io
from .audio import read_wav
from .errors import ContractError, DivergenceError
from .model import model_forward_nll, quantize

LN2 = float(np.log(2.0))


@dataclass
class TrainConfig:
    batch_size: int = 128
    tbptt_len: int = 512
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    max_iterations: int = 2000
    checkpoint_every: int = 500
    validate_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.tbptt_len < 1:
            raise ContractError(f"tbptt_len must be >= 1, got {self.tbptt_len}")


class Adam:
    """Bias-corrected Adam over a ParamStore, updating in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self):
        out = {}
        for name in self.params.names():
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, step_count):
        for name in self.params.names():
            self.m[name] = np.array(arrays[f"adam.m.{name}"], copy=True)
            self.v[name] = np.array(arrays[f"adam.v.{name}"], copy=True)
        self.step_count = int(step_count)


def clip_gradients(params, clip_norm):
    """Scale all gradients so their global L2 norm is at most clip_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for _, t in params.items():
        g = t.grad
        total += float(np.vdot(g, g))
    norm = float(np.sqrt(total))
    if clip_norm > 0 and norm > clip_norm:
        scale = clip_norm / norm
        for _, t in params.items():
            t.grad *= scale
    return norm


def tbptt_step(model, optimizer, codes, state, clip_norm=1.0, iteration=0):
    """One truncated-BPTT update over a [batch, tbptt_len] segment.

    Returns (loss in bits/sample, carried state detached from the graph).
    """
    model.params.zero_grad()
    out = model.forward_logits(codes, state)
    loss, _ = ad.softmax_cross_entropy(out.logits, out.targets)
    loss_val = float(loss.data)
    if not np.isfinite(loss_val):
        raise DivergenceError(f"non-finite loss at iteration {iteration}", iteration)
    ad.backward(loss)
    clip_gradients(model.params, clip_norm)
    optimizer.step()
    return loss_val / LN2, out.state.detached()


def validate(model, chunks, segment_len=2048, max_rows=32):
    """Teacher-forced NLL in bits/sample over validation chunks.

    No parameter updates; state resets at every chunk. Long chunks are
    walked segment-by-segment with carried state, so the result equals a
    whole-chunk pass.
    """
    codes = np.asarray(chunks)
    if codes.ndim != 2 or codes.shape[0] == 0:
        raise ContractError("validation split is empty")
    fs = model.config.frame_size
    seg = max(fs * 2, segment_len - segment_len % fs)
    # fixed stream keeps randomized-h0 validation a pure function
    rng = np.random.Generator(np.random.PCG64(0))
    total_nats = 0.0
    total_count = 0
    for row0 in range(0, codes.shape[0], max_rows):
        block = codes[row0 : row0 + max_rows]
        state = model.initial_state(block.shape[0], rng=rng)
        pos = 0
        while pos < block.shape[1]:
            piece = block[:, pos : pos + seg]
            if piece.shape[1] < (fs * 2 if pos == 0 else fs):
                break  # trailing sliver shorter than one frame
            if piece.shape[1] % fs:
                piece = piece[:, : piece.shape[1] - piece.shape[1] % fs]
            bits, state = model_forward_nll(model, piece, state)
            n_pred = block.shape[0] * (piece.shape[1] - (fs if pos == 0 else 0))
            total_nats += bits * LN2 * n_pred
            total_count += n_pred
            pos += piece.shape[1]
    if total_count == 0:
        raise ContractError("validation chunks shorter than two frames")
    return total_nats / total_count / LN2


@dataclass
class ChunkDataset:
    """Quantized chunk codes per split, loaded lazily from manifest sources."""

    manifest: object
    q_levels: int
    _cache: dict = field(default_factory=dict)

    def _file_samples(self, path):
        if path not in self._cache:
            self._cache[path] = read_wav(path).samples
        return self._cache[path]

    def codes(self, split):
        """[n_chunks, chunk_len] int codes for one split, in chunk-id order."""
        ids = set(self.manifest.split_ids(split))
        rows = []
        clen = self.manifest.chunk_length_samples
        for e in self.manifest.entries:
            if e.chunk_id in ids:
                samples = self._file_samples(e.source_file)
                rows.append(
                    quantize(samples[e.offset_samples : e.offset_samples + clen], self.q_levels)
                )
        if not rows:
            return np.zeros((0, clen), dtype=np.int64)
        return np.stack(rows)


def group_chunk_ids(seed, group, batch_size, n_chunks):
    """Chunk ids for one lockstep batch group.

    Groups consume an endless stream of per-epoch permutations (sampling
    without replacement within an epoch); pure in (seed, group), so any
    group can be reconstructed without replaying the stream.
    """
    first = group * batch_size
    out = []
    for k in range(first, first + batch_size):
        epoch, pos = divmod(k, n_chunks)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch])))
        out.append(int(rng.permutation(n_chunks)[pos]))
    return np.asarray(out)


@dataclass
class MetricsRecord:
    iteration: int
    train_bits: float
    val_bits: float
    seconds: float
    epoch: float

    def line(self):
        return (
            f"iter={self.iteration} train_bits={self.train_bits:.4f} "
            f"val_bits={self.val_bits:.4f} secs={self.seconds:.1f}"
        )


@dataclass
class TrainResult:
    checkpoint_paths: list
    metrics: list
    final_checkpoint: str


def train_loop(
    model,
    cfg,
    train_codes,
    val_codes,
    checkpoint_dir,
    metrics_path=None,
    header_lines=(),
    resume_from=None,
    on_checkpoint=None,
):
    """Run TBPTT training to cfg.max_iterations, checkpointing on the way.

    train_codes/val_codes: [n_chunks, chunk_len] int arrays. A metrics line
    is appended every validate_every iterations; a checkpoint is written
    every checkpoint_every iterations and once more at the end. Divergence
    aborts with the last-good checkpoint path attached.
    """
    import os

    fs = model.config.frame_size
    if cfg.tbptt_len % fs:
        raise ContractError(f"tbptt_len {cfg.tbptt_len} not divisible by frame_size {fs}")
    if train_codes.shape[0] == 0:
        raise ContractError("train split is empty")
    chunk_len = train_codes.shape[1]
    segs_per_chunk = chunk_len // cfg.tbptt_len
    if segs_per_chunk == 0:
        raise ContractError(
            f"chunk length {chunk_len} shorter than tbptt_len {cfg.tbptt_len}"
        )
    samples_per_iter = cfg.batch_size * cfg.tbptt_len
    corpus_samples = train_codes.size

    os.makedirs(checkpoint_dir, exist_ok=True)
    optimizer = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    start_iter = 0
    val_history = []
    carry = None

    if resume_from is not None:
        ck = ckpt_io.load_checkpoint(resume_from)
        model.params.load_arrays(ck.params)
        optimizer.load_state_arrays(ck.extra_arrays, ck.adam_step)
        rng.bit_generator.state = ck.rng_state
        start_iter = ck.iteration
        val_history = list(ck.val_history)
        carry = ckpt_io.carry_to_state(ck, model)

    metrics = []
    checkpoint_paths = []
    last_good = resume_from
    t0 = time.monotonic()
    train_bits_acc = []
    group = None
    group_codes = None
    state = carry

    def write_metrics(rec):
        metrics.append(rec)
        if metrics_path:
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(rec.line() + "\n")

    if metrics_path and start_iter == 0:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(f"# samples_per_iteration={samples_per_iter} corpus_samples={corpus_samples}\n")

    for it in range(start_iter, cfg.max_iterations):
        g, s = divmod(it, segs_per_chunk)
        if g != group:
            rows = group_chunk_ids(cfg.seed, g, cfg.batch_size, train_codes.shape[0])
            group_codes = train_codes[rows]
            group = g
            if s == 0 or state is None:
                state = model.initial_state(cfg.batch_size, rng=rng)
        seg = group_codes[:, s * cfg.tbptt_len : (s + 1) * cfg.tbptt_len]
        try:
            bits, state = tbptt_step(
                model, optimizer, seg, state, cfg.clip_norm, iteration=it
            )
        except DivergenceError as exc:
            raise DivergenceError(str(exc), it, last_checkpoint=last_good) from exc
        train_bits_acc.append(bits)
        done = it + 1

        if cfg.validate_every and done % cfg.validate_every == 0:
            val_bits = validate(model, val_codes) if val_codes.shape[0] else float("nan")
            val_history.append((done, val_bits))
            rec = MetricsRecord(
                done,
                float(np.mean(train_bits_acc)),
                val_bits,
                time.monotonic() - t0,
                done * samples_per_iter / corpus_samples,
            )
            train_bits_acc = []
            write_metrics(rec)

        if (cfg.checkpoint_every and done % cfg.checkpoint_every == 0) or done == cfg.max_iterations:
            path = ckpt_io.checkpoint_path(checkpoint_dir, done)
            ckpt_io.save_checkpoint(
                path,
                ckpt_io.Checkpoint.capture(
                    model, cfg, done, optimizer, rng, val_history, state
                ),
            )
            if path not in checkpoint_paths:
                checkpoint_paths.append(path)
            last_good = path
            if on_checkpoint:
                on_checkpoint(path, done)

    return TrainResult(checkpoint_paths, metrics, last_good)
