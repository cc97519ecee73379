"""Training: token-level cross-entropy, Nesterov momentum, learning-rate
schedules, delayed gradient updates, early stopping, checkpointing and
checkpoint averaging.

The training loop is single-writer: parameters and optimizer state are
mutated only here, between pure forward/backward passes.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from . import tensor as T
from .corpus import pack_batches
from .errors import ConfigError, DataError, FormatError, ShapeError
from .subword import PAD_ID, BOS_ID, EOS_ID

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"CONVMTCK"
CHECKPOINT_VERSION = 1

DEFAULT_MOMENTUM = 0.99
DEFAULT_CLIP_NORM = 0.1


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def cross_entropy_loss(logits: T.Tensor, targets, pad_id: int = PAD_ID,
                       reduction: str = "mean") -> tuple[T.Tensor, int]:
    """Token-level categorical cross-entropy over non-pad positions.

    Returns ``(loss, n_tokens)``; pad positions contribute nothing to
    loss or gradient.  ``reduction`` is ``mean`` or ``sum`` (the sum form
    is what gradient accumulation combines before rescaling).
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"targets shape {targets.shape} does not match "
                         f"logits {logits.shape}")
    mask = (targets != pad_id).astype(logits.data.dtype)
    n_tokens = int(mask.sum())
    if n_tokens == 0:
        raise DataError("cross_entropy_loss: all positions are padding")
    picked = T.take_last_axis(T.log_softmax(logits, axis=-1), targets)
    loss_sum = T.scale(T.sum_all(T.mul_const(picked, mask)), -1.0)
    if reduction == "sum":
        return loss_sum, n_tokens
    if reduction == "mean":
        return T.scale(loss_sum, 1.0 / n_tokens), n_tokens
    raise ConfigError(f"unknown reduction {reduction!r}")


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Nesterov momentum state: per-parameter velocities and step count."""

    velocities: dict[str, np.ndarray]
    momentum: float = DEFAULT_MOMENTUM
    step: int = 0

    @classmethod
    def fresh(cls, params: dict[str, T.Tensor],
              momentum: float = DEFAULT_MOMENTUM) -> "OptimizerState":
        if not 0 <= momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        return cls({name: np.zeros_like(p.data) for name, p in params.items()},
                   momentum)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global norm is <= max_norm.
    Returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        factor = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * factor
    return norm


def nesterov_step(params: dict[str, T.Tensor], grad_fn, state: OptimizerState,
                  lr: float, clip_norm: float | None = None) -> None:
    """One Nesterov update in lookahead form:
    v <- mu*v - lr*grad(theta + mu*v);  theta <- theta + v.

    ``grad_fn`` maps a lookahead parameter dict to a gradient dict; a
    non-finite gradient rejects the step.
    """
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    mu = state.momentum
    if mu == 0.0:
        look = params
    else:
        look = {name: T.parameter(p.data + mu * state.velocities[name],
                                  name=name)
                for name, p in params.items()}
    grads = grad_fn(look)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DataError(f"non-finite gradient for {name}; step rejected")
    if clip_norm is not None:
        clip_gradients(grads, clip_norm)
    for name, p in params.items():
        v = mu * state.velocities[name] - lr * grads[name]
        state.velocities[name] = v.astype(p.data.dtype)
        p.data = p.data + state.velocities[name]
    state.step += 1


# ---------------------------------------------------------------------------
# learning-rate schedule
# ---------------------------------------------------------------------------

@dataclass
class Schedule:
    """``fixed`` holds base_lr forever; ``warmup-exp-decay`` holds base_lr
    for warmup_steps, then decays by decay_rate per step."""

    kind: str = "fixed"
    base_lr: float = 0.25
    warmup_steps: int = 16000
    decay_rate: float = 0.9995

    def __post_init__(self):
        if self.kind not in ("fixed", "warmup-exp-decay"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.base_lr <= 0 or not 0 < self.decay_rate <= 1:
            raise ConfigError("schedule requires base_lr > 0, decay in (0,1]")


def lr_schedule(step: int, s: Schedule) -> float:
    if step < 0:
        raise ConfigError("step must be >= 0")
    if s.kind == "fixed" or step < s.warmup_steps:
        return s.base_lr
    return s.base_lr * s.decay_rate ** (step - s.warmup_steps)


# ---------------------------------------------------------------------------
# early stopping
# ---------------------------------------------------------------------------

def early_stop(validation_losses: list[float], patience: int = 3) -> bool:
    """True once the best loss has not strictly improved for ``patience``
    consecutive completed epochs."""
    if patience < 1:
        raise ConfigError("patience must be >= 1")
    if len(validation_losses) <= patience:
        return False
    best_idx = min(range(len(validation_losses)),
                   key=lambda i: (validation_losses[i], i))
    return len(validation_losses) - 1 - best_idx >= patience


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


@dataclass
class Checkpoint:
    """Versioned snapshot of parameters plus optimizer/schedule state."""

    config: M.ModelConfig
    parameters: dict[str, np.ndarray]
    velocities: dict[str, np.ndarray]
    momentum: float = DEFAULT_MOMENTUM
    step: int = 0
    epoch: int = 0
    validation_losses: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def capture(cls, config, params: dict[str, T.Tensor],
                state: OptimizerState, epoch: int,
                validation_losses: list[float],
                metadata: dict | None = None) -> "Checkpoint":
        return cls(config=config,
                   parameters={k: p.data.copy() for k, p in params.items()},
                   velocities={k: v.copy() for k, v in state.velocities.items()},
                   momentum=state.momentum, step=state.step, epoch=epoch,
                   validation_losses=list(validation_losses),
                   metadata=dict(metadata or {}))

    def restore_params(self) -> dict[str, T.Tensor]:
        return {k: T.parameter(v.copy(), name=k)
                for k, v in self.parameters.items()}

    def restore_state(self) -> OptimizerState:
        return OptimizerState({k: v.copy() for k, v in self.velocities.items()},
                              self.momentum, self.step)

    # -- binary serialization ------------------------------------------

    def save(self, path) -> None:
        tensors = [("p:" + k, v) for k, v in self.parameters.items()]
        tensors += [("v:" + k, v) for k, v in self.velocities.items()]
        meta = {
            "config": self.config.to_dict(),
            "momentum": self.momentum,
            "step": self.step,
            "epoch": self.epoch,
            "validation_losses": self.validation_losses,
            "metadata": self.metadata,
            "tensors": [name for name, _ in tensors],
        }
        meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<Q", len(meta_bytes)))
            fh.write(meta_bytes)
            for name, arr in tensors:
                tag = _DTYPE_TAGS.get(arr.dtype)
                if tag is None:
                    raise FormatError(f"tensor {name} has unsupported dtype "
                                      f"{arr.dtype}")
                fh.write(struct.pack("<BI", tag, arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
                fh.write(np.ascontiguousarray(arr).astype(arr.dtype)
                         .tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise FormatError(f"{path}: not a checkpoint file")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != CHECKPOINT_VERSION:
                raise FormatError(f"{path}: unsupported checkpoint version "
                                  f"{version}")
            (meta_len,) = struct.unpack("<Q", fh.read(8))
            meta = json.loads(fh.read(meta_len).decode("utf-8"))
            tensors = {}
            for name in meta["tensors"]:
                tag, ndim = struct.unpack("<BI", fh.read(5))
                shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
                dtype = _TAG_DTYPES.get(tag)
                if dtype is None:
                    raise FormatError(f"{path}: unknown dtype tag {tag}")
                count = int(np.prod(shape)) if shape else 1
                arr = np.frombuffer(fh.read(count * dtype.itemsize),
                                    dtype=dtype).reshape(shape).copy()
                tensors[name] = arr
        return cls(
            config=M.ModelConfig.from_dict(meta["config"]),
            parameters={k[2:]: v for k, v in tensors.items()
                        if k.startswith("p:")},
            velocities={k[2:]: v for k, v in tensors.items()
                        if k.startswith("v:")},
            momentum=meta["momentum"], step=meta["step"], epoch=meta["epoch"],
            validation_losses=meta["validation_losses"],
            metadata=meta["metadata"])


def average_checkpoints(checkpoints: list[Checkpoint]) -> Checkpoint:
    """Elementwise mean of parameters; optimizer state from the latest
    checkpoint; metadata records the sources."""
    if not checkpoints:
        raise DataError("average_checkpoints needs at least one checkpoint")
    first = checkpoints[0]
    for i, c in enumerate(checkpoints[1:], start=1):
        if c.config != first.config:
            raise ShapeError(f"checkpoint {i} has a different model config")
        for name, arr in first.parameters.items():
            other = c.parameters.get(name)
            if other is None or other.shape != arr.shape:
                raise ShapeError(
                    f"checkpoint {i}: parameter {name!r} missing or shaped "
                    f"{None if other is None else other.shape}, "
                    f"expected {arr.shape}")
    n = len(checkpoints)
    averaged = {}
    for name, arr in first.parameters.items():
        acc = np.zeros_like(arr, dtype=np.float64)
        for c in checkpoints:
            acc += c.parameters[name]
        averaged[name] = (acc / n).astype(arr.dtype)
    latest = max(checkpoints, key=lambda c: (c.step, c.epoch))
    return Checkpoint(
        config=first.config,
        parameters=averaged,
        velocities={k: v.copy() for k, v in latest.velocities.items()},
        momentum=latest.momentum, step=latest.step, epoch=latest.epoch,
        validation_losses=list(latest.validation_losses),
        metadata={"averaged_from": [{"epoch": c.epoch, "step": c.step}
                                    for c in checkpoints]})


# ---------------------------------------------------------------------------
# batch assembly
# ---------------------------------------------------------------------------

def assemble_batch(pairs: list[tuple[list[int], list[int]]], dtype=np.float32):
    """Pad a list of (source token ids, target token ids) into arrays.

    Source gets a trailing eos; the decoder input is bos + target and the
    prediction target is target + eos.  Returns (src, src_mask, tgt_in,
    tgt_mask, tgt_out).
    """
    if not pairs:
        raise DataError("empty batch")
    srcs = [list(s) + [EOS_ID] for s, _ in pairs]
    tgt_ins = [[BOS_ID] + list(t) for _, t in pairs]
    tgt_outs = [list(t) + [EOS_ID] for _, t in pairs]
    b = len(pairs)
    ts = max(len(s) for s in srcs)
    tt = max(len(t) for t in tgt_ins)
    src = np.full((b, ts), PAD_ID, dtype=np.int64)
    tgt_in = np.full((b, tt), PAD_ID, dtype=np.int64)
    tgt_out = np.full((b, tt), PAD_ID, dtype=np.int64)
    src_mask = np.zeros((b, ts), dtype=dtype)
    tgt_mask = np.zeros((b, tt), dtype=dtype)
    for i, (s, ti, to) in enumerate(zip(srcs, tgt_ins, tgt_outs)):
        src[i, :len(s)] = s
        src_mask[i, :len(s)] = 1.0
        tgt_in[i, :len(ti)] = ti
        tgt_out[i, :len(to)] = to
        tgt_mask[i, :len(ti)] = 1.0
    # bos in tgt_in at position 0 predicts the first real token; pads in
    # tgt_out mask themselves out of the loss
    tgt_in[:, 0] = BOS_ID
    return src, src_mask, tgt_in, tgt_mask, tgt_out


def batch_loss(params, config: M.ModelConfig,
               pairs: list[tuple[list[int], list[int]]],
               train: bool = False, rng=None,
               reduction: str = "mean") -> tuple[T.Tensor, int]:
    """Cross-entropy of one padded batch under the current parameters."""
    src, src_mask, tgt_in, tgt_mask, tgt_out = assemble_batch(
        pairs, dtype=config.np_dtype)
    logits = M.forward_logits(params, config, src, tgt_in,
                              source_mask=src_mask, target_mask=tgt_mask,
                              train=train, rng=rng)
    return cross_entropy_loss(logits, tgt_out, PAD_ID, reduction=reduction)


def accumulated_gradients(params, config,
                          micro_batches: list[list[tuple[list[int], list[int]]]],
                          train: bool = False, rng=None
                          ) -> tuple[dict[str, np.ndarray], int]:
    """Delayed gradient updates: sum token-sum gradients over the
    micro-batches, then rescale by the total non-pad token count.

    With a token-mean loss this equals the single-large-batch gradient up
    to floating-point reordering.
    """
    if not micro_batches:
        raise DataError("no micro-batches")
    total: dict[str, np.ndarray] | None = None
    n_tokens = 0
    for mb in micro_batches:
        loss_sum, tokens = batch_loss(params, config, mb, train=train,
                                      rng=rng, reduction="sum")
        grads = T.gradients(loss_sum, params)
        n_tokens += tokens
        if total is None:
            total = grads
        else:
            for name in total:
                total[name] = total[name] + grads[name]
    assert total is not None
    for name in total:
        total[name] = total[name] / n_tokens
    return total, n_tokens


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainSettings:
    max_epochs: int = 50
    patience: int = 3
    batch_token_budget: int = 4000
    seed: int = 0
    momentum: float = DEFAULT_MOMENTUM
    clip_norm: float | None = DEFAULT_CLIP_NORM
    schedule: Schedule = field(default_factory=Schedule)
    accumulation: int = 1
    checkpoint_dir: str | None = None


@dataclass
class TrainResult:
    params: dict[str, T.Tensor]       # best-validation parameters
    final_params: dict[str, T.Tensor]
    state: OptimizerState
    validation_losses: list[float]
    best_epoch: int
    epoch_checkpoints: list[Checkpoint]


def validation_loss(params, config, pairs, token_budget: int) -> float:
    """Token-mean cross-entropy over a held-out set (dropout off)."""
    lengths = [(len(s) + 1, len(t) + 1) for s, t in pairs]
    total = 0.0
    tokens = 0
    for batch in pack_batches(lengths, token_budget, seed=0):
        chunk = [pairs[i] for i in batch.pair_ids]
        loss_sum, n = batch_loss(params, config, chunk, train=False,
                                 reduction="sum")
        total += loss_sum.item()
        tokens += n
    return total / tokens


def train_model(config: M.ModelConfig,
                train_pairs: list[tuple[list[int], list[int]]],
                val_pairs: list[tuple[list[int], list[int]]],
                settings: TrainSettings,
                params: dict[str, T.Tensor] | None = None,
                keep_epoch_checkpoints: bool = False) -> TrainResult:
    """Early-stopped training with per-epoch validation and checkpoints.

    Deterministic given (config, data, settings): initialization,
    batching, dropout and update order are all seeded.
    """
    if not train_pairs:
        raise DataError("empty training set")
    if params is None:
        params = M.init_parameters(config, seed=settings.seed)
    state = OptimizerState.fresh(params, settings.momentum)
    drop_rng = np.random.default_rng(settings.seed + 1)
    lengths = [(len(s) + 1, len(t) + 1) for s, t in train_pairs]

    val_losses: list[float] = []
    best_loss = float("inf")
    best_epoch = -1
    best_params: dict[str, T.Tensor] | None = None
    epoch_checkpoints: list[Checkpoint] = []

    for epoch in range(settings.max_epochs):
        batches = pack_batches(lengths, settings.batch_token_budget,
                               seed=settings.seed * 100003 + epoch)
        for batch in batches:
            chunk = [train_pairs[i] for i in batch.pair_ids]
            if settings.accumulation > 1:
                micro = _split_chunks(chunk, settings.accumulation)
            else:
                micro = [chunk]

            def grad_fn(look):
                grads, _ = accumulated_gradients(look, config, micro,
                                                 train=True, rng=drop_rng)
                return grads

            lr = lr_schedule(state.step, settings.schedule)
            nesterov_step(params, grad_fn, state, lr,
                          clip_norm=settings.clip_norm)

        vloss = validation_loss(params, config, val_pairs,
                                settings.batch_token_budget)
        val_losses.append(vloss)
        logger.info("epoch %d: validation loss %.6f", epoch, vloss)
        if vloss < best_loss:
            best_loss = vloss
            best_epoch = epoch
            best_params = {k: T.parameter(p.data.copy(), name=k)
                           for k, p in params.items()}
        ckpt = Checkpoint.capture(config, params, state, epoch, val_losses)
        if keep_epoch_checkpoints:
            epoch_checkpoints.append(ckpt)
        if settings.checkpoint_dir is not None:
            out = Path(settings.checkpoint_dir)
            out.mkdir(parents=True, exist_ok=True)
            ckpt.save(out / f"epoch{epoch:04d}.ckpt")
            if best_epoch == epoch:
                ckpt.save(out / "best.ckpt")
        if early_stop(val_losses, settings.patience):
            logger.info("early stop after epoch %d", epoch)
            break

    assert best_params is not None
    return TrainResult(params=best_params, final_params=params, state=state,
                       validation_losses=val_losses, best_epoch=best_epoch,
                       epoch_checkpoints=epoch_checkpoints)


def _split_chunks(items: list, n: int) -> list[list]:
    n = min(n, len(items))
    size = (len(items) + n - 1) // n
    return [items[i:i + size] for i in range(0, len(items), size)]
