"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tape records tensors in creation order, which is already a valid
topological order of the compute graph. backward() walks that list in
reverse, so every node receives its full upstream gradient before its
own backward rule fires. Gradients accumulate additively, which makes
fan-out (one tensor consumed by several ops) correct for free.

Everything runs in float64. Ops are free functions returning new
Tensors; tensors built without a tape are constants and collect no
gradient.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not line up."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def stable_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax with max subtraction, safe for large logits."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def stable_log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Sigmoid computed without overflowing exp for either sign."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def stable_log_sigmoid(x: np.ndarray) -> np.ndarray:
    """log(sigmoid(x)) = -log(1 + exp(-x)), finite for any float input."""
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


class Tensor:
    """Array node in the compute graph.

    grad is filled in by Tape.backward and has the same shape as data.
    Constants (no tape) keep grad = None.
    """

    __slots__ = ("data", "grad", "_tape", "_backward")

    def __init__(self, data, tape: "Tape | None" = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self._tape = tape
        self._backward = None
        if tape is not None:
            tape._nodes.append(self)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, taped={self._tape is not None})"

    # -- arithmetic sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return multiply(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported; divide by a scalar")
        return scale(self, 1.0 / float(other))

    def item(self) -> float:
        return float(self.data)


class Tape:
    """Creation-order record of tensors for one forward pass."""

    def __init__(self):
        self._nodes: list[Tensor] = []

    def watch(self, data) -> Tensor:
        """Register a leaf whose gradient should be collected."""
        return Tensor(data, tape=self)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(node) into .grad of every taped tensor.

        loss must be a scalar produced under this tape.
        """
        if loss._tape is not self:
            raise ValueError("loss tensor was not produced under this tape")
        if loss.data.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        for node in self._nodes:
            node.grad = None
        loss.grad = np.ones((), dtype=np.float64)
        for node in reversed(self._nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)


def _result_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t._tape is None:
            continue
        if tape is None:
            tape = t._tape
        elif tape is not t._tape:
            raise ValueError("operands were recorded on different tapes")
    return tape


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t._tape is None:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# elementwise and arithmetic ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    """a + b where b is a Tensor of identical shape or a python scalar."""
    if isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
        out = Tensor(a.data + b.data, tape=_result_tape(a, b))

        def backward(g):
            _accumulate(a, g)
            _accumulate(b, g)

    else:
        out = Tensor(a.data + float(b), tape=_result_tape(a))

        def backward(g):
            _accumulate(a, g)

    out._backward = backward
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar."""
    c = float(c)
    out = Tensor(a.data * c, tape=_result_tape(a))

    def backward(g):
        _accumulate(a, g * c)

    out._backward = backward
    return out


def multiply(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"multiply: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data * b.data, tape=_result_tape(a, b))

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), tape=_result_tape(x))

    def backward(g):
        _accumulate(x, g * (x.data > 0))

    out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = stable_sigmoid(x.data)
    out = Tensor(s, tape=_result_tape(x))

    def backward(g):
        _accumulate(x, g * s * (1.0 - s))

    out._backward = backward
    return out


def log_sigmoid(x: Tensor) -> Tensor:
    out = Tensor(stable_log_sigmoid(x.data), tape=_result_tape(x))
    s = stable_sigmoid(x.data)

    def backward(g):
        _accumulate(x, g * (1.0 - s))

    out._backward = backward
    return out


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    s = stable_softmax(x.data, axis=-1)
    out = Tensor(s, tape=_result_tape(x))

    def backward(g):
        inner = np.sum(g * s, axis=-1, keepdims=True)
        _accumulate(x, s * (g - inner))

    out._backward = backward
    return out


def log_softmax(x: Tensor) -> Tensor:
    """Log-softmax over the last axis; preferred over log(softmax(x))."""
    out = Tensor(stable_log_softmax(x.data, axis=-1), tape=_result_tape(x))
    s = stable_softmax(x.data, axis=-1)

    def backward(g):
        _accumulate(x, g - s * np.sum(g, axis=-1, keepdims=True))

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b applied over the last axis of x.

    x: [..., Din], w: [Din, Dout], b: [Dout]. Leading axes of x are
    flattened for the matmul and restored afterwards.
    """
    din = x.data.shape[-1]
    if w.data.ndim != 2 or w.data.shape[0] != din:
        raise ShapeError(f"linear: x has feature size {din}, weight is {w.data.shape}")
    dout = w.data.shape[1]
    if b.data.shape != (dout,):
        raise ShapeError(f"linear: bias shape {b.data.shape} does not match output size {dout}")
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, din)
    out = Tensor((x2 @ w.data + b.data).reshape(*lead, dout), tape=_result_tape(x, w, b))

    def backward(g):
        g2 = g.reshape(-1, dout)
        _accumulate(x, (g2 @ w.data.T).reshape(x.data.shape))
        _accumulate(w, x2.T @ g2)
        _accumulate(b, g2.sum(axis=0))

    out._backward = backward
    return out


def conv1d_same(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Temporal convolution with zero padding, output length == input length.

    x: [N, T, Din], kernel: [kw, Din, Dout] with odd kw, bias: [Dout].
    Output frame t sums kernel taps over frames t - kw//2 .. t + kw//2;
    taps falling outside the sequence contribute zero.
    """
    if x.data.ndim != 3:
        raise ShapeError(f"conv1d_same: input must be [N, T, Din], got {x.data.shape}")
    kw, din, dout = kernel.data.shape
    if kw % 2 == 0:
        raise ShapeError(f"conv1d_same: kernel width must be odd, got {kw}")
    if din != x.data.shape[2]:
        raise ShapeError(
            f"conv1d_same: input feature size {x.data.shape[2]} vs kernel in-size {din}")
    if bias.data.shape != (dout,):
        raise ShapeError(f"conv1d_same: bias shape {bias.data.shape}, expected ({dout},)")
    n, t, _ = x.data.shape
    half = kw // 2
    out_data = np.zeros((n, t, dout), dtype=np.float64)
    spans = []
    for j in range(kw):
        off = j - half
        ts, te = max(0, -off), t - max(0, off)
        xs, xe = max(0, off), t - max(0, -off)
        spans.append((j, ts, te, xs, xe))
        if ts < te:
            out_data[:, ts:te] += x.data[:, xs:xe] @ kernel.data[j]
    out_data += bias.data
    out = Tensor(out_data, tape=_result_tape(x, kernel, bias))

    def backward(g):
        gx = np.zeros_like(x.data)
        gk = np.zeros_like(kernel.data)
        for j, ts, te, xs, xe in spans:
            if ts >= te:
                continue
            gx[:, xs:xe] += g[:, ts:te] @ kernel.data[j].T
            x2 = x.data[:, xs:xe].reshape(-1, din)
            g2 = g[:, ts:te].reshape(-1, dout)
            gk[j] = x2.T @ g2
        _accumulate(x, gx)
        _accumulate(kernel, gk)
        _accumulate(bias, g.sum(axis=(0, 1)))

    out._backward = backward
    return out


def mask_frames(x: Tensor, mask: np.ndarray) -> Tensor:
    """Zero out padded frames of a [N, T] or [N, T, C] tensor.

    Keeps stacked temporal convolutions honest: without this, a conv
    writes nonzero values into padded positions (its window overlaps
    real frames) and the next conv reads them back into real frames,
    so real-frame outputs would depend on how much padding a batch
    happens to carry.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.data.shape[:2]:
        raise ShapeError(
            f"mask_frames: mask shape {mask.shape} vs leading dims {x.data.shape[:2]}")
    m = mask.astype(np.float64).reshape(mask.shape + (1,) * (x.data.ndim - 2))
    out = Tensor(x.data * m, tape=_result_tape(x))

    def backward(g):
        _accumulate(x, g * m)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# gather / slice ops
# ---------------------------------------------------------------------------

def take_frames(x: Tensor, videos: np.ndarray, frames: np.ndarray) -> Tensor:
    """Gather rows x[videos[i], frames[i]] from a [N, T, ...] tensor."""
    videos = np.asarray(videos, dtype=np.intp)
    frames = np.asarray(frames, dtype=np.intp)
    if videos.shape != frames.shape or videos.ndim != 1:
        raise ShapeError("take_frames: index arrays must be equal-length 1-D")
    out = Tensor(x.data[videos, frames], tape=_result_tape(x))

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (videos, frames), g)
        _accumulate(x, gx)

    out._backward = backward
    return out


def take_classes(x: Tensor, classes: np.ndarray) -> Tensor:
    """Pick one column per row: out[i] = x[i, classes[i]] for a [K, C] tensor."""
    classes = np.asarray(classes, dtype=np.intp)
    if x.data.ndim != 2:
        raise ShapeError(f"take_classes: expected [K, C], got {x.data.shape}")
    k = x.data.shape[0]
    if classes.shape != (k,):
        raise ShapeError(f"take_classes: index length {classes.shape} vs {k} rows")
    rows = np.arange(k)
    out = Tensor(x.data[rows, classes], tape=_result_tape(x))

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, classes), g)
        _accumulate(x, gx)

    out._backward = backward
    return out


def time_slice(x: Tensor, video: int, length: int) -> Tensor:
    """First `length` frames of one video from a [N, T, ...] tensor."""
    if not 0 <= video < x.data.shape[0]:
        raise ShapeError(f"time_slice: video {video} out of range {x.data.shape[0]}")
    if not 0 < length <= x.data.shape[1]:
        raise ShapeError(f"time_slice: length {length} out of range {x.data.shape[1]}")
    out = Tensor(x.data[video, :length], tape=_result_tape(x))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[video, :length] = g
        _accumulate(x, gx)

    out._backward = backward
    return out


def squeeze_last(x: Tensor) -> Tensor:
    """Drop a trailing axis of size one."""
    if x.data.shape[-1] != 1:
        raise ShapeError(f"squeeze_last: trailing axis is {x.data.shape[-1]}, not 1")
    out = Tensor(x.data[..., 0], tape=_result_tape(x))

    def backward(g):
        _accumulate(x, g[..., None])

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    out = Tensor(x.data.sum(), tape=_result_tape(x))

    def backward(g):
        _accumulate(x, np.full_like(x.data, float(g)))

    out._backward = backward
    return out


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    if n == 0:
        raise ShapeError("mean_all: empty tensor")
    out = Tensor(x.data.mean(), tape=_result_tape(x))

    def backward(g):
        _accumulate(x, np.full_like(x.data, float(g) / n))

    out._backward = backward
    return out


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """sum(x * weights) with constant (non-differentiated) weights."""
    weights = _as_array(weights)
    if weights.shape != x.data.shape:
        raise ShapeError(f"weighted_sum: weights {weights.shape} vs data {x.data.shape}")
    out = Tensor(float((x.data * weights).sum()), tape=_result_tape(x))

    def backward(g):
        _accumulate(x, float(g) * weights)

    out._backward = backward
    return out


def topk_mean(x: Tensor, k: int) -> Tensor:
    """Mean of the k largest entries of a 1-D tensor.

    Ties resolve to the lower index (stable sort on descending value),
    so the subgradient routes to the earliest of equal entries.
    """
    if x.data.ndim != 1:
        raise ShapeError(f"topk_mean: expected 1-D tensor, got {x.data.shape}")
    if not 1 <= k <= x.data.shape[0]:
        raise ValueError(f"topk_mean: k={k} out of range for length {x.data.shape[0]}")
    idx = np.argsort(-x.data, kind="stable")[:k]
    out = Tensor(x.data[idx].mean(), tape=_result_tape(x))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[idx] = float(g) / k
        _accumulate(x, gx)

    out._backward = backward
    return out


def topk_mean_columns(x: Tensor, k: int) -> Tensor:
    """Column-wise mean of the k largest entries of a [T, C] tensor -> [C].

    Same lower-index tie rule as topk_mean, applied per column.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"topk_mean_columns: expected [T, C], got {x.data.shape}")
    t, c = x.data.shape
    if not 1 <= k <= t:
        raise ValueError(f"topk_mean_columns: k={k} out of range for {t} rows")
    idx = np.argsort(-x.data, axis=0, kind="stable")[:k]  # [k, C]
    cols = np.broadcast_to(np.arange(c), (k, c))
    out = Tensor(x.data[idx, cols].mean(axis=0), tape=_result_tape(x))

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (idx, cols), g / k)
        _accumulate(x, gx)

    out._backward = backward
    return out
