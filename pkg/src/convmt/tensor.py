"""Dense-tensor arithmetic with reverse-mode automatic differentiation.

The primitive set is the minimal closure needed by the convolutional
encoder-decoder: matmul, 1-D convolution, elementwise arithmetic,
sigmoid/tanh/softmax, embedding gather, dropout masking, concat/slice and
reductions.  Every primitive has an analytic gradient that is verified
against central finite differences (see :func:`finite_difference_check`).

Tensors are immutable values once created; only ``Tensor.data`` of
parameters is mutated, and only by the training loop's update step.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError, DataError

__all__ = [
    "Tensor",
    "ComputationRecord",
    "parameter",
    "constant",
    "backward",
    "gradients",
    "finite_difference_check",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "add_const",
    "mul_const",
    "matmul",
    "conv1d",
    "sigmoid",
    "tanh",
    "softmax",
    "log_softmax",
    "embedding",
    "dropout",
    "concat",
    "slice_axis",
    "swap_last_axes",
    "take_last_axis",
    "sum_all",
    "mean_all",
]


class Tensor:
    """A node in the computation graph.

    ``data`` is a numpy array (float32 for training runs, float64 for
    gradient checks).  Non-leaf tensors record their parents, a forward
    closure (for trace replay) and a backward closure (for reverse-mode
    accumulation).
    """

    __slots__ = ("data", "parents", "grad", "requires_grad", "name",
                 "_forward", "_backward")

    def __init__(self, data, parents=(), forward=None, backward=None,
                 requires_grad=False, name=None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.parents = tuple(parents)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in self.parents)
        self.name = name
        self._forward = forward
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise DataError(f"tensor {self.name or '<anon>'} contains NaN/Inf")

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    # small operator sugar; the named functions below are the primitives
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name=None) -> Tensor:
    """A learnable leaf tensor."""
    return Tensor(np.asarray(data), requires_grad=True, name=name)


def constant(data, name=None) -> Tensor:
    """A non-learnable leaf tensor (inputs, masks)."""
    return Tensor(np.asarray(data), requires_grad=False, name=name)


# ---------------------------------------------------------------------------
# graph traversal / backward
# ---------------------------------------------------------------------------

class ComputationRecord:
    """Topologically ordered trace of the primitives below a scalar loss.

    ``nodes`` lists every reachable tensor, inputs before consumers.
    ``replay`` re-executes each recorded forward closure and checks that
    the stored outputs are reproduced bit-identically.
    """

    def __init__(self, nodes: list[Tensor], loss: Tensor):
        self.nodes = nodes
        self.loss = loss

    @classmethod
    def trace(cls, loss: Tensor) -> "ComputationRecord":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(loss, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
            else:
                stack.append((node, True))
                for p in node.parents:
                    if id(p) not in seen:
                        stack.append((p, False))
        return cls(order, loss)

    def replay(self) -> bool:
        for node in self.nodes:
            if node._forward is None:
                continue
            redone = node._forward()
            if redone.shape != node.data.shape or not np.array_equal(
                    redone, node.data):
                return False
        return True


def backward(loss: Tensor) -> ComputationRecord:
    """Reverse-mode sweep; populates ``.grad`` on every reachable tensor
    that requires gradient.  ``loss`` must be scalar."""
    if loss.data.shape != ():
        raise ShapeError(
            f"backward requires a scalar loss, got shape {loss.data.shape}")
    record = ComputationRecord.trace(loss)
    for node in record.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(record.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    return record


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradient of a scalar loss w.r.t. each named parameter.

    Parameters not reachable from the loss receive a zero gradient of the
    same shape.
    """
    backward(loss)
    out = {}
    for name, p in params.items():
        out[name] = np.zeros_like(p.data) if p.grad is None else p.grad
    return out


def _accumulate(parent: Tensor, g: np.ndarray) -> None:
    if not parent.requires_grad:
        return
    # accumulation always rebinds (never writes in place), so sharing an
    # array with the child's grad is safe
    if parent.grad is None:
        parent.grad = g
    else:
        parent.grad = parent.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so ``g`` matches ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, (a, b), lambda: a.data + b.data, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return Tensor(out_data, (a, b), lambda: a.data - b.data, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, (a, b), lambda: a.data * b.data, bwd)


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda: -a.data, lambda g: _accumulate(a, -g))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return Tensor(a.data * s, (a,), lambda: a.data * s,
                  lambda g: _accumulate(a, g * s))


def add_const(a: Tensor, c) -> Tensor:
    """Add a fixed (non-differentiable) array, e.g. an attention mask."""
    c = np.asarray(c, dtype=a.data.dtype)
    return Tensor(a.data + c, (a,), lambda: a.data + c,
                  lambda g: _accumulate(a, _unbroadcast(g, a.data.shape)))


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a fixed array, e.g. a padding mask."""
    c = np.asarray(c, dtype=a.data.dtype)
    return Tensor(a.data * c, (a,), lambda: a.data * c,
                  lambda g: _accumulate(a, _unbroadcast(g * c, a.data.shape)))


def sigmoid(a: Tensor) -> Tensor:
    def f(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    out_data = f(a.data)

    def bwd(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, (a,), lambda: f(a.data), bwd)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bwd(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return Tensor(out_data, (a,), lambda: np.tanh(a.data), bwd)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    out_data = _softmax(a.data, axis)

    def bwd(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, out_data * (g - dot))

    return Tensor(out_data, (a,), lambda: _softmax(a.data, axis), bwd)


def _log_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    out_data = _log_softmax(a.data, axis)

    def bwd(g):
        sm = np.exp(out_data)
        _accumulate(a, g - sm * g.sum(axis=axis, keepdims=True))

    return Tensor(out_data, (a,), lambda: _log_softmax(a.data, axis), bwd)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.data.shape))
        _accumulate(b, _unbroadcast(gb, b.data.shape))

    return Tensor(out_data, (a, b), lambda: a.data @ b.data, bwd)


def swap_last_axes(a: Tensor) -> Tensor:
    out_data = np.swapaxes(a.data, -1, -2)

    def bwd(g):
        _accumulate(a, np.swapaxes(g, -1, -2))

    return Tensor(out_data, (a,), lambda: np.swapaxes(a.data, -1, -2), bwd)


def conv1d(x: Tensor, filters: Tensor, pad_mode: str = "causal") -> Tensor:
    """1-D convolution over the time axis.

    ``x`` is ``[..., time, in_ch]``, ``filters`` is ``[width, in_ch, out_ch]``.
    ``causal`` left-pads with zeros so output position t depends only on
    input positions <= t; ``same`` pads symmetrically (odd width required).
    """
    if filters.data.ndim != 3:
        raise ShapeError(f"filters must be [width, in_ch, out_ch], "
                         f"got shape {filters.data.shape}")
    w, cin, cout = filters.data.shape
    if w < 1:
        raise ShapeError("filter width must be >= 1")
    if x.data.ndim < 2:
        raise ShapeError("conv1d input must be at least [time, channels]")
    t = x.data.shape[-2]
    if t == 0:
        raise ShapeError("conv1d: zero-length time axis")
    if x.data.shape[-1] != cin:
        raise ShapeError(f"conv1d: input has {x.data.shape[-1]} channels, "
                         f"filters expect {cin}")
    if pad_mode == "causal":
        left, right = w - 1, 0
    elif pad_mode == "same":
        if w % 2 == 0:
            raise ShapeError("same-padded conv1d requires odd width")
        left = right = (w - 1) // 2
    else:
        raise ValueError(f"unknown pad_mode {pad_mode!r}")

    pad_spec = [(0, 0)] * (x.data.ndim - 2) + [(left, right), (0, 0)]

    def fwd():
        xp = np.pad(x.data, pad_spec)
        out = np.zeros(x.data.shape[:-1] + (cout,), dtype=x.data.dtype)
        for j in range(w):
            out += xp[..., j:j + t, :] @ filters.data[j]
        return out

    out_data = fwd()

    def bwd(g):
        xp = np.pad(x.data, pad_spec)
        gxp = np.zeros_like(xp)
        gf = np.zeros_like(filters.data)
        lead = tuple(range(g.ndim - 1))
        for j in range(w):
            gxp[..., j:j + t, :] += g @ filters.data[j].T
            gf[j] = np.tensordot(xp[..., j:j + t, :], g, axes=(lead, lead))
        _accumulate(x, gxp[..., left:left + t, :])
        _accumulate(filters, gf)

    return Tensor(out_data, (x, filters), fwd, bwd)


# ---------------------------------------------------------------------------
# indexing / structure
# ---------------------------------------------------------------------------

def embedding(table: Tensor, ids) -> Tensor:
    """Row gather: ``table[ids]``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embedding ids out of range [0, {table.data.shape[0]})")

    out_data = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        _accumulate(table, gt)

    return Tensor(out_data, (table,), lambda: table.data[ids], bwd)


def take_last_axis(x: Tensor, idx) -> Tensor:
    """Pick one entry along the last axis per position (e.g. the target
    token's log-probability out of a vocab-sized axis)."""
    idx = np.asarray(idx, dtype=np.int64)
    expanded = idx[..., None]
    out_data = np.take_along_axis(x.data, expanded, axis=-1)[..., 0]

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, expanded, g[..., None], axis=-1)
        _accumulate(x, gx)

    return Tensor(out_data, (x,),
                  lambda: np.take_along_axis(x.data, expanded, axis=-1)[..., 0],
                  bwd)


def dropout(x: Tensor, mask, keep_prob: float) -> Tensor:
    """Inverted-scaling dropout with a precomputed 0/1 mask.

    The mask is drawn outside the graph (seeded), which keeps the traced
    function deterministic and finite-difference checkable.
    """
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    factor = np.asarray(mask, dtype=x.data.dtype) / keep_prob
    return mul_const(x, factor)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return Tensor(out_data, tuple(tensors),
                  lambda: np.concatenate([t.data for t in tensors], axis=axis),
                  bwd)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out_data = x.data[index]

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        _accumulate(x, gx)

    return Tensor(out_data, (x,), lambda: x.data[index], bwd)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    out_data = x.data.sum()

    def bwd(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape).astype(x.data.dtype))

    return Tensor(out_data, (x,), lambda: x.data.sum(), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out_data = x.data.mean()

    def bwd(g):
        _accumulate(x, np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype))

    return Tensor(out_data, (x,), lambda: x.data.mean(), bwd)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_difference_check(f: Callable[[Tensor], Tensor],
                            theta: np.ndarray,
                            eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a parameter tensor to a scalar loss tensor and must be
    deterministic (checked by evaluating it twice).  Run at float64;
    finite differences are unreliable at float32.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.asarray(theta, dtype=np.float64)

    p = parameter(theta.copy())
    loss = f(p)
    if loss.data.shape != ():
        raise ShapeError("finite_difference_check: f must return a scalar")
    second = f(parameter(theta.copy()))
    if not np.array_equal(loss.data, second.data):
        raise DataError("finite_difference_check: f is not deterministic")

    backward(loss)
    analytic = np.zeros_like(theta) if p.grad is None else p.grad

    flat = theta.ravel()
    max_err = 0.0
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + eps
        hi = f(parameter(bumped.reshape(theta.shape))).item()
        bumped[i] = flat[i] - eps
        lo = f(parameter(bumped.reshape(theta.shape))).item()
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic.ravel()[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
        max_err = max(max_err, err)
    return max_err
