"""Two-tier recurrent sample predictor.

The frame tier consumes non-overlapping windows of `frame_size` quantized
samples (dequantized to real amplitudes), advances a deep LSTM/GRU stack one
step per window, and upsamples each step's output into `frame_size`
conditioning vectors. The sample tier embeds the previous `frame_size`
codes, mixes them with the matching conditioning vector, and emits logits
over the quantization levels.

Carried state is explicit: the recurrent vectors plus the last frame's codes
and conditioning rows, which is exactly what makes segment-by-segment
processing equal to one whole-sequence pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .errors import ContractError, FramingError, ShapeError

CELL_LSTM = "lstm"
CELL_GRU = "gru"
H0_LEARNED = "learned"
H0_RANDOMIZED = "randomized"

# std of per-sequence h0 draws in randomized mode (variance 0.01: small
# enough not to saturate gates)
H0_RANDOM_STD = 0.1


@dataclass
class ModelConfig:
    q_levels: int = 256
    embed_size: int = 256
    hidden_dim: int = 1024
    n_layers: int = 5
    cell: str = CELL_LSTM
    frame_size: int = 16
    sample_rate: int = 16000
    h0_mode: str = H0_LEARNED
    skip_connections: bool = True
    weight_norm: bool = True
    forget_bias_init: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.q_levels < 2:
            raise ContractError(f"q_levels must be >= 2, got {self.q_levels}")
        if self.frame_size < 2:
            raise ContractError(f"frame_size must be >= 2, got {self.frame_size}")
        if not 1 <= self.n_layers <= 9:
            raise ContractError(f"n_layers must be in [1, 9], got {self.n_layers}")
        if self.embed_size < 1 or self.hidden_dim < 1:
            raise ContractError("embed_size and hidden_dim must be >= 1")
        if self.cell not in (CELL_LSTM, CELL_GRU):
            raise ContractError(f"cell must be lstm or gru, got {self.cell!r}")
        if self.h0_mode not in (H0_LEARNED, H0_RANDOMIZED):
            raise ContractError(f"h0_mode must be learned or randomized, got {self.h0_mode!r}")
        if self.sample_rate <= 0:
            raise ContractError(f"sample_rate must be positive, got {self.sample_rate}")


def quantize(x, q_levels=256):
    """Map amplitudes to integer codes in [0, q_levels) via equal-width bins.

    Values outside [-1, 1] are clamped first; the map is monotone
    non-decreasing. Scalars in, scalar out; arrays in, arrays out.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("quantize requires finite amplitudes")
    arr = np.clip(arr, -1.0, 1.0)
    codes = np.clip(np.floor((arr + 1.0) * (q_levels / 2.0)), 0, q_levels - 1)
    return int(codes) if np.ndim(x) == 0 else codes.astype(np.int64)


def dequantize(codes, q_levels=256):
    """Bin-midpoint amplitude of each code: 2*(code + 0.5)/q_levels - 1."""
    arr = np.asarray(codes)
    if arr.size and (arr.min() < 0 or arr.max() >= q_levels):
        raise IndexError(
            f"code out of range [0, {q_levels}): min={arr.min()}, max={arr.max()}"
        )
    out = 2.0 * (arr + 0.5) / q_levels - 1.0
    return float(out) if np.ndim(codes) == 0 else out


@dataclass
class CellWeights:
    """Effective (post weight-norm) affine maps for one recurrent layer."""

    w: Tensor  # lstm: [in+H, 4H]; gru: update/reset [in+H, 2H]
    b: Tensor
    w2: Tensor | None = None  # gru candidate map [in+H, H]
    b2: Tensor | None = None


def lstm_cell(x, state, weights):
    """One LSTM step: gate order i, f, g, o along the fused affine output.

    c' = f*c + i*g, h' = o*tanh(c'). Returns (h', c').
    """
    h, c = state
    hidden = h.shape[1]
    z = ad.affine(ad.concat([x, h], axis=1), weights.w, weights.b)
    if z.shape[1] != 4 * hidden:
        raise ShapeError(f"lstm gates shape {z.shape} != [B, {4 * hidden}]")
    i = ad.sigmoid(ad.narrow(z, 1, 0, hidden))
    f = ad.sigmoid(ad.narrow(z, 1, hidden, hidden))
    g = ad.tanh(ad.narrow(z, 1, 2 * hidden, hidden))
    o = ad.sigmoid(ad.narrow(z, 1, 3 * hidden, hidden))
    c2 = ad.add(ad.mul(f, c), ad.mul(i, g))
    h2 = ad.mul(o, ad.tanh(c2))
    return h2, c2


def gru_cell(x, h, weights):
    """One GRU step: h' = (1-z)*h + z*h~ with h~ = tanh(W [x, r*h] + b)."""
    hidden = h.shape[1]
    zr = ad.affine(ad.concat([x, h], axis=1), weights.w, weights.b)
    if zr.shape[1] != 2 * hidden:
        raise ShapeError(f"gru update/reset shape {zr.shape} != [B, {2 * hidden}]")
    z = ad.sigmoid(ad.narrow(zr, 1, 0, hidden))
    r = ad.sigmoid(ad.narrow(zr, 1, hidden, hidden))
    cand = ad.tanh(ad.affine(ad.concat([x, ad.mul(r, h)], axis=1), weights.w2, weights.b2))
    return ad.add(ad.mul(ad.scale_shift(z, -1.0, 1.0), h), ad.mul(z, cand))


@dataclass
class RecurrentState:
    """Per-layer hidden vectors (plus cell vectors for LSTM), batch-major."""

    h: list
    c: list | None = None

    def detached(self):
        return RecurrentState(
            [t.detach() for t in self.h],
            None if self.c is None else [t.detach() for t in self.c],
        )


@dataclass
class ModelState:
    """Everything carried between consecutive segments of one sequence."""

    rnn: RecurrentState
    prev_codes: np.ndarray | None = None  # [B, frame_size] int64
    prev_cond: np.ndarray | None = None  # [B, frame_size, hidden] values

    @property
    def warm(self):
        return self.prev_codes is not None

    def detached(self):
        return ModelState(self.rnn.detached(), self.prev_codes, self.prev_cond)


@dataclass
class ForwardResult:
    logits: Tensor  # [B*P, q_levels]
    targets: np.ndarray  # [B*P]
    batch: int
    count: int  # P = predicted positions per row
    start: int  # first predicted position within the segment
    state: ModelState

    def logits_per_position(self):
        """Values reshaped to [B, P, q_levels]."""
        b, p = self.batch, self.count
        return self.logits.data.reshape(b, p, -1)


class SampleRnnModel:
    """Parameter store plus configuration for the two-tier architecture."""

    def __init__(self, config, params):
        self.config = config
        self.params = params
        self.dtype = params["embed"].dtype

    # -- parameter plumbing -------------------------------------------------

    def _weight(self, name):
        if self.config.weight_norm:
            return ad.weight_norm_apply(self.params[name + ".v"], self.params[name + ".g"])
        return self.params[name + ".w"]

    def _linear(self, name):
        return self._weight(name), self.params[name + ".b"]

    def _cell_weights(self, layer):
        if self.config.cell == CELL_LSTM:
            w, b = self._linear(f"rnn{layer}.gates")
            return CellWeights(w, b)
        wz, bz = self._linear(f"rnn{layer}.zr")
        wc, bc = self._linear(f"rnn{layer}.cand")
        return CellWeights(wz, bz, wc, bc)

    # -- state --------------------------------------------------------------

    def initial_state(self, batch_size, rng=None):
        """Cold state: h0 per layer, no code history, no conditioning.

        learned mode broadcasts the trainable h0 vectors (gradients flow
        back into them); randomized mode draws N(0, 0.01) from `rng`.
        """
        cfg = self.config
        if cfg.h0_mode == H0_LEARNED:
            h = [ad.tile_rows(self.params[f"h0.h{l}"], batch_size) for l in range(cfg.n_layers)]
            c = None
            if cfg.cell == CELL_LSTM:
                c = [ad.tile_rows(self.params[f"h0.c{l}"], batch_size) for l in range(cfg.n_layers)]
        else:
            if rng is None:
                raise ContractError("randomized h0 needs an rng stream")
            shape = (batch_size, cfg.hidden_dim)
            h = [Tensor(rng.normal(0.0, H0_RANDOM_STD, shape).astype(self.dtype))
                 for _ in range(cfg.n_layers)]
            c = None
            if cfg.cell == CELL_LSTM:
                c = [Tensor(rng.normal(0.0, H0_RANDOM_STD, shape).astype(self.dtype))
                     for _ in range(cfg.n_layers)]
        return ModelState(RecurrentState(h, c))

    # -- frame tier ---------------------------------------------------------

    def frame_tier_forward(self, codes, rnn_state):
        """Advance the stack one step per frame of codes.

        codes: int [B, T*frame_size]. Returns (conditioning [B, T,
        frame_size, hidden] as a Tensor, new RecurrentState). Each frame's
        output is mapped through frame_size distinct linear maps, one per
        intra-frame position.
        """
        cfg = self.config
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[1] == 0 or codes.shape[1] % cfg.frame_size:
            raise FramingError(
                f"frame input length {codes.shape} not divisible by frame_size={cfg.frame_size}"
            )
        b = codes.shape[0]
        t_steps = codes.shape[1] // cfg.frame_size
        frames = dequantize(codes, cfg.q_levels).astype(self.dtype).reshape(
            b, t_steps, cfg.frame_size
        )

        w_in, b_in = self._linear("frame_in")
        cells = [self._cell_weights(l) for l in range(cfg.n_layers)]
        skips = (
            [self._linear(f"skip{l}") for l in range(cfg.n_layers)]
            if cfg.skip_connections
            else None
        )
        ups = [self._linear(f"up{k}") for k in range(cfg.frame_size)]

        h = list(rnn_state.h)
        c = list(rnn_state.c) if rnn_state.c is not None else None
        outs = []
        for t in range(t_steps):
            x = ad.affine(Tensor(frames[:, t]), w_in, b_in)
            acc = None
            for l in range(cfg.n_layers):
                if cfg.cell == CELL_LSTM:
                    h[l], c[l] = lstm_cell(x, (h[l], c[l]), cells[l])
                else:
                    h[l] = gru_cell(x, h[l], cells[l])
                x = h[l]
                if skips is not None:
                    proj = ad.affine(h[l], *skips[l])
                    acc = proj if acc is None else ad.add(acc, proj)
            outs.append(acc if skips is not None else h[-1])

        flat = ad.reshape(
            ad.concat([ad.reshape(o, (b, 1, cfg.hidden_dim)) for o in outs], axis=1),
            (b * t_steps, cfg.hidden_dim),
        )
        per_pos = [
            ad.reshape(ad.affine(flat, w, bias), (b, t_steps, 1, cfg.hidden_dim))
            for w, bias in ups
        ]
        cond = ad.concat(per_pos, axis=2)
        return cond, RecurrentState(h, c)

    # -- sample tier ----------------------------------------------------------

    def sample_tier_forward(self, windows, cond):
        """Logits over codes from a window of previous codes plus conditioning.

        windows: int [..., frame_size]; cond: Tensor [..., hidden] with the
        same leading shape. Returns logits [..., q_levels].
        """
        cfg = self.config
        windows = np.asarray(windows)
        if windows.shape[-1] != cfg.frame_size:
            raise ShapeError(
                f"window length {windows.shape[-1]} != frame_size {cfg.frame_size}"
            )
        lead = windows.shape[:-1]
        if tuple(cond.shape[:-1]) != lead or cond.shape[-1] != cfg.hidden_dim:
            raise ShapeError(f"conditioning shape {cond.shape} does not match windows {windows.shape}")
        n = int(np.prod(lead, dtype=np.int64)) if lead else 1

        emb = ad.reshape(
            ad.embedding(self.params["embed"], windows.reshape(n, cfg.frame_size)),
            (n, cfg.frame_size * cfg.embed_size),
        )
        u = ad.add(
            ad.affine(emb, *self._linear("samp.in")),
            ad.reshape(cond, (n, cfg.hidden_dim)),
        )
        h1 = ad.relu(ad.affine(u, *self._linear("samp.h1")))
        h2 = ad.relu(ad.affine(h1, *self._linear("samp.h2")))
        logits = ad.affine(h2, *self._linear("samp.out"))
        return ad.reshape(logits, lead + (cfg.q_levels,))

    # -- full forward ---------------------------------------------------------

    def forward_logits(self, codes, state):
        """Teacher-forced logits for every predictable position of a segment.

        With a cold state the first frame_size positions lack history and are
        skipped; with a warm state (prev_codes/prev_cond carried from the
        preceding segment) every position is predicted.
        """
        cfg = self.config
        fs = cfg.frame_size
        codes = np.asarray(codes)
        if codes.ndim != 2:
            raise ShapeError(f"codes must be [B, L], got {codes.shape}")
        b, length = codes.shape
        if length % fs:
            raise FramingError(f"segment length {length} not divisible by frame_size {fs}")
        if not state.warm and length < 2 * fs:
            raise ContractError(
                f"cold segment needs at least {2 * fs} samples, got {length}"
            )

        cond, rnn = self.frame_tier_forward(codes, state.rnn)
        t_steps = length // fs

        if state.warm:
            start = 0
            prev = Tensor(state.prev_cond)
            usable = ad.concat(
                [ad.reshape(prev, (b, 1, fs, cfg.hidden_dim)), ad.narrow(cond, 1, 0, t_steps - 1)],
                axis=1,
            )
            ext = np.concatenate([state.prev_codes, codes], axis=1)
        else:
            start = fs
            usable = ad.narrow(cond, 1, 0, t_steps - 1)
            ext = codes

        count = length - start
        cond_flat = ad.reshape(usable, (b * count, cfg.hidden_dim))
        # window for position t is ext[:, t+off-fs : t+off); sliding windows
        # starting at 0 line up with the first predicted position either way
        wins = np.lib.stride_tricks.sliding_window_view(ext, fs, axis=1)[:, :count]
        logits = self.sample_tier_forward(wins.reshape(b * count, fs), cond_flat)
        targets = codes[:, start:].reshape(-1)

        new_state = ModelState(
            rnn,
            prev_codes=codes[:, -fs:].copy(),
            prev_cond=cond.data[:, t_steps - 1].copy(),
        )
        return ForwardResult(logits, targets, b, count, start, new_state)


def model_forward_nll(model, codes, state):
    """Mean teacher-forced NLL in bits/sample over a segment; no gradients.

    Returns (bits, detached new state).
    """
    with ad.no_grad():
        out = model.forward_logits(codes, state)
        loss, _ = ad.softmax_cross_entropy(out.logits, out.targets)
    return float(loss.data) / np.log(2.0), out.state.detached()


# ---------------------------------------------------------------------------
# initialization


def _uniform_fan(rng, shape, dtype):
    a = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-a, a, shape).astype(dtype)


def init_params(config, dtype=np.float32):
    """Build a SampleRnnModel with freshly initialized parameters.

    Weights draw from uniform(-a, a), a = sqrt(6/(fan_in+fan_out)); biases
    start at zero except LSTM forget gates (forget_bias_init); with weight
    norm enabled the gains start at the column norms so the effective weight
    equals the drawn direction matrix. Deterministic for a fixed seed.
    """
    cfg = config
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = ParamStore()

    def linear(name, fan_in, fan_out, bias=None):
        w = _uniform_fan(rng, (fan_in, fan_out), dtype)
        if cfg.weight_norm:
            params.add(name + ".v", w)
            params.add(name + ".g", np.sqrt((w * w).sum(axis=0)).astype(dtype))
        else:
            params.add(name + ".w", w)
        b = np.zeros(fan_out, dtype=dtype)
        if bias is not None:
            b[:] = bias
        params.add(name + ".b", b)

    params.add("embed", _uniform_fan(rng, (cfg.q_levels, cfg.embed_size), dtype))
    linear("frame_in", cfg.frame_size, cfg.hidden_dim)

    h = cfg.hidden_dim
    for l in range(cfg.n_layers):
        if cfg.cell == CELL_LSTM:
            gate_bias = np.zeros(4 * h, dtype=dtype)
            gate_bias[h : 2 * h] = cfg.forget_bias_init
            linear(f"rnn{l}.gates", 2 * h, 4 * h, bias=gate_bias)
        else:
            linear(f"rnn{l}.zr", 2 * h, 2 * h)
            linear(f"rnn{l}.cand", 2 * h, h)
    if cfg.skip_connections:
        for l in range(cfg.n_layers):
            linear(f"skip{l}", h, h)
    for k in range(cfg.frame_size):
        linear(f"up{k}", h, h)

    linear("samp.in", cfg.frame_size * cfg.embed_size, h)
    linear("samp.h1", h, h)
    linear("samp.h2", h, h)
    linear("samp.out", h, cfg.q_levels)

    if cfg.h0_mode == H0_LEARNED:
        for l in range(cfg.n_layers):
            params.add(f"h0.h{l}", np.zeros(h, dtype=dtype))
            if cfg.cell == CELL_LSTM:
                params.add(f"h0.c{l}", np.zeros(h, dtype=dtype))

    return SampleRnnModel(cfg, params)
