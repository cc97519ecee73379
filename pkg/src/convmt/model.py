"""Convolutional encoder-decoder with GLU gating, residual connections,
learned positional embeddings, per-layer attention over encoder states,
and a final projection to vocabulary logits.

Shapes are ``[batch, time, channels]``.  Padded batches carry explicit
0/1 masks; embeddings and per-layer states are re-zeroed at pad
positions so a padded batch forward equals the per-sentence forward,
and attention is masked so pad source positions get zero weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .errors import ShapeError, DataError, ConfigError
from .subword import BOS_ID

RESIDUAL_SCALE = math.sqrt(0.5)
ATTENTION_MASK_BIAS = -1e9


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    The full-scale configuration uses 512-dim embeddings/hidden units,
    width-3 filters and 20 layers per side with dropout 0.1; the default
    here is a small configuration that trains on a CPU budget.
    """

    source_vocab: int
    target_vocab: int
    embed_dim: int = 64
    hidden_dim: int = 64
    kernel_width: int = 3
    layers: int = 2
    dropout: float = 0.1
    max_positions: int = 256
    dtype: str = "float32"
    residual_scaling: bool = True
    attention_every_layer: bool = True

    def __post_init__(self):
        if self.kernel_width < 1 or self.kernel_width % 2 == 0:
            raise ConfigError("kernel_width must be odd and >= 1")
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        for name in ("source_vocab", "target_vocab", "embed_dim",
                     "hidden_dim", "max_positions"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _uniform_fan_in(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_parameters(config: ModelConfig, seed: int = 0) -> dict[str, T.Tensor]:
    """Fresh parameter set: embeddings N(0, 0.1), matrices/filters uniform
    scaled by fan-in, zero biases."""
    rng = np.random.default_rng(seed)
    dt = config.np_dtype
    e, h, w = config.embed_dim, config.hidden_dim, config.kernel_width
    params: dict[str, np.ndarray] = {}

    def emb(rows):
        return (rng.normal(0.0, 0.1, size=(rows, e))).astype(dt)

    params["src_embed"] = emb(config.source_vocab)
    params["tgt_embed"] = emb(config.target_vocab)
    params["src_pos"] = emb(config.max_positions)
    params["tgt_pos"] = emb(config.max_positions)
    if e != h:
        params["enc_in_proj"] = _uniform_fan_in(rng, (e, h), e, dt)
        params["dec_in_proj"] = _uniform_fan_in(rng, (e, h), e, dt)
    for i in range(config.layers):
        params[f"enc.{i}.conv"] = _uniform_fan_in(rng, (w, h, 2 * h), w * h, dt)
        params[f"enc.{i}.bias"] = np.zeros(2 * h, dtype=dt)
        params[f"dec.{i}.conv"] = _uniform_fan_in(rng, (w, h, 2 * h), w * h, dt)
        params[f"dec.{i}.bias"] = np.zeros(2 * h, dtype=dt)
        if config.attention_every_layer or i == config.layers - 1:
            params[f"dec.{i}.attn_q"] = _uniform_fan_in(rng, (h, h), h, dt)
            params[f"dec.{i}.attn_b"] = np.zeros(h, dtype=dt)
    params["out_proj"] = _uniform_fan_in(rng, (h, config.target_vocab), h, dt)
    params["out_bias"] = np.zeros(config.target_vocab, dtype=dt)
    return {name: T.parameter(arr, name=name) for name, arr in params.items()}


def glu(a: T.Tensor, b: T.Tensor) -> T.Tensor:
    """Gated linear unit: a * sigmoid(b)."""
    if a.shape != b.shape:
        raise ShapeError(f"glu: shapes differ, {a.shape} vs {b.shape}")
    return T.mul(a, T.sigmoid(b))


def receptive_field(w: int, k: int) -> int:
    """Input span influencing one output of k stacked width-w convs."""
    if w < 1 or k < 1:
        raise ShapeError("width and depth must be >= 1")
    return k * (w - 1) + 1


def _conv_block(x, conv, bias, hidden, mode):
    y = T.add(T.conv1d(x, conv, pad_mode=mode), bias)
    a = T.slice_axis(y, -1, 0, hidden)
    b = T.slice_axis(y, -1, hidden, 2 * hidden)
    return glu(a, b)


def _residual(h, x, scaling: bool):
    out = T.add(h, x)
    return T.scale(out, RESIDUAL_SCALE) if scaling else out


def _dropout_mask(rng, shape, keep, dtype):
    return (rng.random(shape) < keep).astype(dtype)


def _check_ids(ids: np.ndarray, vocab: int, max_positions: int, what: str):
    if ids.ndim != 2:
        raise ShapeError(f"{what} ids must be [batch, time]")
    if ids.shape[1] == 0:
        raise ShapeError(f"{what} has zero length")
    if ids.shape[1] > max_positions:
        raise ShapeError(f"{what} length {ids.shape[1]} exceeds "
                         f"max positions {max_positions}")
    if ids.min() < 0 or ids.max() >= vocab:
        raise DataError(f"{what} ids out of range [0, {vocab})")


@dataclass
class EncoderStates:
    """Per-position attention keys and key+embedding values."""

    keys: T.Tensor     # [B, Ts, H]
    values: T.Tensor   # [B, Ts, H]
    mask: np.ndarray   # [B, Ts, 1] float 0/1


def encode(params: dict[str, T.Tensor], config: ModelConfig,
           source_ids: np.ndarray, source_mask: np.ndarray | None = None,
           train: bool = False, rng=None) -> EncoderStates:
    """Run the convolutional encoder over a (possibly padded) batch."""
    ids = np.asarray(source_ids, dtype=np.int64)
    _check_ids(ids, config.source_vocab, config.max_positions, "source")
    b, ts = ids.shape
    if source_mask is None:
        source_mask = np.ones((b, ts), dtype=config.np_dtype)
    mask = np.asarray(source_mask, dtype=config.np_dtype).reshape(b, ts, 1)

    positions = np.broadcast_to(np.arange(ts), (b, ts))
    x = T.add(T.embedding(params["src_embed"], ids),
              T.embedding(params["src_pos"], positions))
    x = T.mul_const(x, mask)
    if train and config.dropout > 0:
        keep = 1.0 - config.dropout
        x = T.dropout(x, _dropout_mask(rng, x.shape, keep, config.np_dtype), keep)
    if "enc_in_proj" in params:
        x = T.matmul(x, params["enc_in_proj"])
    x0 = x
    for i in range(config.layers):
        h = _conv_block(x, params[f"enc.{i}.conv"], params[f"enc.{i}.bias"],
                        config.hidden_dim, "same")
        x = _residual(h, x, config.residual_scaling)
        x = T.mul_const(x, mask)
    keys = x
    values = T.mul_const(T.add(x, x0), mask)
    return EncoderStates(keys=keys, values=values, mask=mask)


def decode_forward(params: dict[str, T.Tensor], config: ModelConfig,
                   enc: EncoderStates, prefix_ids: np.ndarray,
                   target_mask: np.ndarray | None = None,
                   train: bool = False, rng=None,
                   return_attention: bool = False):
    """Logits over the target vocabulary for every prefix position.

    ``prefix_ids`` must begin with bos.  Causal convolutions plus
    encoder-only attention make logits at step t depend only on target
    ids <= t.
    """
    ids = np.asarray(prefix_ids, dtype=np.int64)
    _check_ids(ids, config.target_vocab, config.max_positions, "target prefix")
    if not np.all(ids[:, 0] == BOS_ID):
        raise DataError("target prefix must begin with bos")
    b, tt = ids.shape
    if target_mask is None:
        target_mask = np.ones((b, tt), dtype=config.np_dtype)
    tmask = np.asarray(target_mask, dtype=config.np_dtype).reshape(b, tt, 1)
    attn_bias = (1.0 - np.swapaxes(enc.mask, 1, 2)) * ATTENTION_MASK_BIAS

    positions = np.broadcast_to(np.arange(tt), (b, tt))
    x = T.add(T.embedding(params["tgt_embed"], ids),
              T.embedding(params["tgt_pos"], positions))
    x = T.mul_const(x, tmask)
    if train and config.dropout > 0:
        keep = 1.0 - config.dropout
        x = T.dropout(x, _dropout_mask(rng, x.shape, keep, config.np_dtype), keep)
    if "dec_in_proj" in params:
        x = T.matmul(x, params["dec_in_proj"])
    x0 = x
    attention_maps = []
    for i in range(config.layers):
        h = _conv_block(x, params[f"dec.{i}.conv"], params[f"dec.{i}.bias"],
                        config.hidden_dim, "causal")
        if f"dec.{i}.attn_q" in params:
            q = T.add(T.add(T.matmul(h, params[f"dec.{i}.attn_q"]),
                            params[f"dec.{i}.attn_b"]), x0)
            scores = T.matmul(q, T.swap_last_axes(enc.keys))  # [B, Tt, Ts]
            scores = T.add_const(scores, attn_bias)
            weights = T.softmax(scores, axis=-1)
            if return_attention:
                attention_maps.append(weights.data)
            context = T.matmul(weights, enc.values)
            h = T.add(h, context)
        x = _residual(h, x, config.residual_scaling)
        x = T.mul_const(x, tmask)
    logits = T.add(T.matmul(x, params["out_proj"]), params["out_bias"])
    if return_attention:
        return logits, attention_maps
    return logits


def forward_logits(params, config, source_ids, prefix_ids,
                   source_mask=None, target_mask=None,
                   train=False, rng=None) -> T.Tensor:
    """Encoder + decoder in one call."""
    enc = encode(params, config, source_ids, source_mask, train=train, rng=rng)
    return decode_forward(params, config, enc, prefix_ids, target_mask,
                          train=train, rng=rng)
