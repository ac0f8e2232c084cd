"""Binary checkpoint container.

Layout: magic `SRNNCKPT`, u32 version, u64 header length, a plain-text
header of key=value lines (configs, iteration, optimizer step, PRNG state,
validation history), then length-prefixed per-array records, and finally a
64-bit digest of all preceding bytes. Loads verify magic, version, and
digest before touching any payload; writes go through a temp file and an
atomic rename.

Besides parameters and Adam moments, a checkpoint stores the training
carry state (per-layer recurrent vectors plus the last frame's codes and
conditioning), so resuming mid-chunk reproduces the uninterrupted loss
trajectory exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ModelState, RecurrentState, CELL_LSTM
from .autodiff import Tensor

MAGIC = b"SRNNCKPT"
VERSION = 1

_DTYPE_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("<i8"): 3}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def checkpoint_path(directory, iteration):
    return os.path.join(directory, f"ckpt_{iteration:08d}.srnn")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: object
    iteration: int
    params: dict
    extra_arrays: dict  # adam.m.*, adam.v.*, carry.*
    adam_step: int
    rng_state: dict
    val_history: list

    @classmethod
    def capture(cls, model, train_cfg, iteration, optimizer, rng, val_history, carry_state):
        extras = dict(optimizer.state_arrays())
        if carry_state is not None:
            for l, h in enumerate(carry_state.rnn.h):
                extras[f"carry.h{l}"] = h.data
            if carry_state.rnn.c is not None:
                for l, c in enumerate(carry_state.rnn.c):
                    extras[f"carry.c{l}"] = c.data
            if carry_state.prev_codes is not None:
                extras["carry.prev_codes"] = carry_state.prev_codes
                extras["carry.prev_cond"] = carry_state.prev_cond
        return cls(
            model.config,
            train_cfg,
            iteration,
            dict(model.params.arrays()),
            extras,
            optimizer.step_count,
            rng.bit_generator.state,
            list(val_history),
        )


def carry_to_state(ck, model):
    """Rebuild the training carry ModelState stored in a checkpoint, if any."""
    ex = ck.extra_arrays
    if "carry.h0" not in ex:
        return None
    n = model.config.n_layers
    h = [Tensor(ex[f"carry.h{l}"]) for l in range(n)]
    c = None
    if model.config.cell == CELL_LSTM:
        c = [Tensor(ex[f"carry.c{l}"]) for l in range(n)]
    return ModelState(
        RecurrentState(h, c),
        prev_codes=ex.get("carry.prev_codes"),
        prev_cond=ex.get("carry.prev_cond"),
    )


def model_from_checkpoint(ck):
    """Instantiate a model with the checkpoint's exact parameter bytes."""
    from .model import init_params

    dtype = next(iter(ck.params.values())).dtype
    model = init_params(ck.model_config, dtype=dtype)
    model.params.load_arrays(ck.params)
    return model


# -- field (de)serialization -------------------------------------------------


def _encode_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _decode_value(text, kind):
    if kind is bool:
        if text not in ("true", "false"):
            raise CheckpointError(f"bad boolean {text!r}")
        return text == "true"
    return kind(text)


def _encode_config(prefix, cfg):
    return [
        f"{prefix}.{f.name}={_encode_value(getattr(cfg, f.name))}"
        for f in dataclasses.fields(cfg)
    ]


def _decode_config(cls, prefix, mapping):
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{prefix}.{f.name}"
        if key not in mapping:
            raise CheckpointError(f"header missing {key}")
        kwargs[f.name] = _decode_value(mapping[key], type(f.default))
    return cls(**kwargs)


def _write_record(out, name, arr):
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.float32:
        arr = arr.astype("<f4", copy=False)
    elif arr.dtype == np.float64:
        arr = arr.astype("<f8", copy=False)
    elif arr.dtype == np.int64:
        arr = arr.astype("<i8", copy=False)
    else:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for record {name!r}")
    name_b = name.encode("utf-8")
    out.append(struct.pack("<I", len(name_b)))
    out.append(name_b)
    out.append(struct.pack("<BB", _DTYPE_TAGS[arr.dtype], arr.ndim))
    out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    out.append(arr.tobytes())


def save_checkpoint(path, ck):
    """Serialize atomically (temp file + rename); round-trips bitwise."""
    header_lines = _encode_config("model", ck.model_config)
    header_lines += _encode_config("train", ck.train_config)
    header_lines.append(f"iteration={ck.iteration}")
    header_lines.append(f"adam.step={ck.adam_step}")
    st = ck.rng_state
    header_lines.append(f"rng.state={st['state']['state']}")
    header_lines.append(f"rng.inc={st['state']['inc']}")
    header_lines.append(f"rng.has_uint32={st['has_uint32']}")
    header_lines.append(f"rng.uinteger={st['uinteger']}")
    header_lines.append(
        "val_history=" + ",".join(f"{i}:{_encode_value(float(b))}" for i, b in ck.val_history)
    )
    header = ("\n".join(header_lines) + "\n").encode("utf-8")

    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(header)), header]
    for name, arr in ck.params.items():
        _write_record(parts, f"param.{name}", arr)
    for name, arr in ck.extra_arrays.items():
        _write_record(parts, name, arr)
    body = b"".join(parts)
    digest = hashlib.blake2b(body, digest_size=8).digest()

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(body)
            fh.write(digest)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def done(self):
        return self.pos >= len(self.data)


def load_checkpoint(path):
    """Parse and verify a checkpoint file.

    Raises CheckpointError on bad magic, version mismatch, digest mismatch,
    or truncation; a corrupted file never yields partial parameters.
    """
    from .training import TrainConfig

    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 4 + 8 + 8:
        raise CheckpointError(f"{path}: truncated file")
    body, digest = raw[:-8], raw[-8:]
    if body[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    if hashlib.blake2b(body, digest_size=8).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted")

    rd = _Reader(body, path)
    rd.take(len(MAGIC))
    (version,) = struct.unpack("<I", rd.take(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: version {version} unsupported (expected {VERSION})")
    (header_len,) = struct.unpack("<Q", rd.take(8))
    header = rd.take(header_len).decode("utf-8")
    mapping = {}
    for line in header.splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        mapping[key] = value

    model_cfg = _decode_config(ModelConfig, "model", mapping)
    train_cfg = _decode_config(TrainConfig, "train", mapping)
    rng_state = {
        "bit_generator": "PCG64",
        "state": {"state": int(mapping["rng.state"]), "inc": int(mapping["rng.inc"])},
        "has_uint32": int(mapping["rng.has_uint32"]),
        "uinteger": int(mapping["rng.uinteger"]),
    }
    val_history = []
    if mapping.get("val_history"):
        for item in mapping["val_history"].split(","):
            i, _, b = item.partition(":")
            val_history.append((int(i), float(b)))

    params = {}
    extras = {}
    while not rd.done():
        (name_len,) = struct.unpack("<I", rd.take(4))
        name = rd.take(name_len).decode("utf-8")
        tag, ndim = struct.unpack("<BB", rd.take(2))
        if tag not in _TAG_DTYPES:
            raise CheckpointError(f"{path}: unknown dtype tag {tag} in record {name!r}")
        shape = struct.unpack(f"<{ndim}Q", rd.take(8 * ndim))
        dtype = _TAG_DTYPES[tag]
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(rd.take(count * dtype.itemsize), dtype=dtype).reshape(shape)
        if name.startswith("param."):
            params[name[len("param.") :]] = arr
        else:
            extras[name] = arr

    return Checkpoint(
        model_cfg,
        train_cfg,
        int(mapping["iteration"]),
        params,
        extras,
        int(mapping["adam.step"]),
        rng_state,
        val_history,
    )
