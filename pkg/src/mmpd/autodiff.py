"""Reverse-mode automatic differentiation over numpy arrays.

Dynamic-tape design: every kernel output records its parent tensors and a
closure mapping the output gradient to parent-gradient contributions; the
tape is the DAG reachable from the loss, walked once in reverse topological
order by ``backward``.

Conventions shared by all kernels:

* axis 0 is the "element" axis (graph edges, graph nodes, or sequence
  steps); extra axes (batch, feature) broadcast through unchanged,
  which keeps message-passing code free of transposes;
* every kernel checks its output for NaN/Inf and raises
  :class:`NumericsError` naming the offending kernel;
* reductions use numpy's native ordering (pairwise summation); tests
  compare with tolerances, not bit-exactness, across shape layouts.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericsError",
    "Tensor",
    "SegmentIndex",
    "no_grad",
    "as_tensor",
    "add",
    "subtract",
    "multiply",
    "concat_last",
    "linear",
    "silu",
    "gelu",
    "sigmoid",
    "softplus",
    "exp",
    "layer_norm",
    "segment_softmax",
    "gather",
    "scatter_add",
    "ssm_scan",
    "reverse",
    "depthwise_causal_conv",
    "reshape",
    "transpose",
    "total_sum",
    "backward",
    "zero_grad",
    "finite_difference_check",
]


class NumericsError(RuntimeError):
    """A kernel produced (or was handed) non-finite values."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the context (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float array plus the tape bookkeeping for reverse mode."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.array(data, dtype=dtype, copy=True)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not np.isfinite(arr).all():
            raise NumericsError("non-finite values in tensor constructor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return (f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, "
                f"op={self.op!r}, requires_grad={self.requires_grad})")

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return multiply(self, -1.0)


def as_tensor(x) -> Tensor:
    """Wrap plain arrays/scalars as constant tensors; pass tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, out: np.ndarray, parents, backward_fn) -> Tensor:
    if not np.isfinite(out).all():
        raise NumericsError(f"kernel '{op}' produced non-finite values")
    record = _grad_enabled and any(p.requires_grad for p in parents)
    t = Tensor.__new__(Tensor)
    t.data = out
    t.requires_grad = record
    t.grad = None
    t.op = op
    t._parents = tuple(parents) if record else ()
    t._backward = backward_fn if record else None
    return t


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make("add", out, (a, b), backward_fn)


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make("subtract", out, (a, b), backward_fn)


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(over="ignore", invalid="ignore"):
        out = a.data * b.data

    def backward_fn(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make("multiply", out, (a, b), backward_fn)


def concat_last(tensors) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat_last needs at least one tensor")
    out = np.concatenate([t.data for t in ts], axis=-1)
    sizes = np.cumsum([0] + [t.data.shape[-1] for t in ts])

    def backward_fn(g):
        for t, lo, hi in zip(ts, sizes[:-1], sizes[1:]):
            _accum(t, g[..., lo:hi])

    return _make("concat_last", out, tuple(ts), backward_fn)


def linear(x, w, b=None) -> Tensor:
    """y = x @ w.T (+ b); w has shape (out_features, in_features)."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.data.shape[-1] != w.data.shape[1]:
        raise ValueError(
            f"linear shape mismatch: x {x.data.shape} vs w {w.data.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = x.data @ w.data.T
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.data.shape != (w.data.shape[0],):
            raise ValueError(
                f"linear bias shape {b.data.shape} != ({w.data.shape[0]},)")
        out = out + b.data
        parents.append(b)
    n_out, n_in = w.data.shape

    def backward_fn(g):
        if x.requires_grad:
            _accum(x, g @ w.data)
        if w.requires_grad:
            _accum(w, g.reshape(-1, n_out).T @ x.data.reshape(-1, n_in))
        if b is not None and b.requires_grad:
            _accum(b, g.reshape(-1, n_out).sum(axis=0))

    return _make("linear", out, tuple(parents), backward_fn)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid_np(x.data)
    out = x.data * s

    def backward_fn(g):
        _accum(x, g * (s + x.data * s * (1.0 - s)))

    return _make("silu", out, (x,), backward_fn)


_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def gelu(x) -> Tensor:
    """tanh-approximation GELU: 0.5x(1 + tanh(√(2/π)(x + 0.044715x³)))."""
    x = as_tensor(x)
    u = _GELU_C * (x.data + _GELU_A * x.data**3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def backward_fn(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x.data**2)
        _accum(x, g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du))

    return _make("gelu", out, (x,), backward_fn)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid_np(x.data)

    def backward_fn(g):
        _accum(x, g * s * (1.0 - s))

    return _make("sigmoid", s, (x,), backward_fn)


def softplus(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))

    def backward_fn(g):
        _accum(x, g * _sigmoid_np(x.data))

    return _make("softplus", out, (x,), backward_fn)


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def backward_fn(g):
        _accum(x, g * out)

    return _make("exp", out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ValueError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} "
            f"!= ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward_fn(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gy = g * gain.data
            m1 = gy.mean(axis=-1, keepdims=True)
            m2 = (gy * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (gy - m1 - xhat * m2))

    return _make("layer_norm", out, (x, gain, bias), backward_fn)


# ---------------------------------------------------------------------------
# graph kernels: segments, gather, scatter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentIndex:
    """Maps element positions (axis 0) to dense segment ids."""

    segment_of: np.ndarray
    segment_count: int

    def __post_init__(self):
        seg = np.asarray(self.segment_of, dtype=np.int64)
        object.__setattr__(self, "segment_of", seg)
        if seg.ndim != 1:
            raise ValueError("segment_of must be 1-D")
        if self.segment_count <= 0:
            raise ValueError("segment_count must be positive")
        if seg.size and (seg.min() < 0 or seg.max() >= self.segment_count):
            raise ValueError("segment ids out of range")
        counts = np.bincount(seg, minlength=self.segment_count)
        empty = np.nonzero(counts == 0)[0]
        if empty.size:
            raise ValueError(f"segment {int(empty[0])} has no elements")


def segment_softmax(scores, seg: SegmentIndex) -> Tensor:
    """Softmax over axis-0 groups; extra axes are independent problems."""
    scores = as_tensor(scores)
    ids = seg.segment_of
    if scores.data.shape[0] != ids.shape[0]:
        raise ValueError(
            f"segment_softmax: {scores.data.shape[0]} scores vs "
            f"{ids.shape[0]} segment ids")
    counts = np.bincount(ids, minlength=seg.segment_count)
    if (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"segment_softmax: segment {empty} is empty")
    tail = scores.data.shape[1:]
    mx = np.full((seg.segment_count,) + tail, -np.inf, dtype=scores.dtype)
    np.maximum.at(mx, ids, scores.data)
    ex = np.exp(scores.data - mx[ids])
    denom = np.zeros_like(mx)
    np.add.at(denom, ids, ex)
    out = ex / denom[ids]

    def backward_fn(g):
        pg = out * g
        s = np.zeros_like(mx)
        np.add.at(s, ids, pg)
        _accum(scores, pg - out * s[ids])

    return _make("segment_softmax", out, (scores,), backward_fn)


def _check_index(index: np.ndarray, bound: int, op: str) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise ValueError(f"{op}: index must be 1-D")
    if index.size and (index.min() < 0 or index.max() >= bound):
        raise ValueError(f"{op}: index out of range [0, {bound})")
    return index


def gather(x, index) -> Tensor:
    """out[e] = x[index[e]] along axis 0."""
    x = as_tensor(x)
    index = _check_index(index, x.data.shape[0], "gather")
    out = x.data[index]

    def backward_fn(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, index, g)
        _accum(x, dx)

    return _make("gather", out, (x,), backward_fn)


def scatter_add(x, index, size: int) -> Tensor:
    """out[s] = Σ_{e: index[e]=s} x[e] along axis 0; out has `size` rows."""
    x = as_tensor(x)
    index = _check_index(index, size, "scatter_add")
    if index.shape[0] != x.data.shape[0]:
        raise ValueError(
            f"scatter_add: {x.data.shape[0]} rows vs {index.shape[0]} indices")
    out = np.zeros((size,) + x.data.shape[1:], dtype=x.dtype)
    np.add.at(out, index, x.data)

    def backward_fn(g):
        _accum(x, g[index])

    return _make("scatter_add", out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# sequence kernels
# ---------------------------------------------------------------------------


def ssm_scan(a_bar, b_bar_x, c, d_skip, x) -> Tensor:
    """Linear state recurrence along axis 0.

    h_t = a_bar_t ⊙ h_{t-1} + b_bar_x_t  (h_0 = 0)
    y_t[d] = Σ_n c_t[n]·h_t[d,n] + d_skip[d]·x_t[d]

    Shapes: a_bar, b_bar_x (L, ..., D, N); c (L, ..., N); d_skip (D,);
    x (L, ..., D); output (L, ..., D).  Any middle axes broadcast as batch.
    """
    a_bar, b_bar_x = as_tensor(a_bar), as_tensor(b_bar_x)
    c, d_skip, x = as_tensor(c), as_tensor(d_skip), as_tensor(x)
    if a_bar.data.shape != b_bar_x.data.shape:
        raise ValueError("ssm_scan: a_bar and b_bar_x shapes differ")
    if a_bar.ndim < 2:
        raise ValueError("ssm_scan: a_bar needs at least (L, D, N) axes")
    L = a_bar.data.shape[0]
    n_state = a_bar.data.shape[-1]
    dim = a_bar.data.shape[-2]
    if c.data.shape != a_bar.data.shape[:-2] + (n_state,):
        raise ValueError(
            f"ssm_scan: c shape {c.data.shape} incompatible with "
            f"a_bar {a_bar.data.shape}")
    if x.data.shape != a_bar.data.shape[:-2] + (dim,):
        raise ValueError(
            f"ssm_scan: x shape {x.data.shape} incompatible with "
            f"a_bar {a_bar.data.shape}")
    if d_skip.data.shape != (dim,):
        raise ValueError(f"ssm_scan: d_skip shape {d_skip.data.shape} != ({dim},)")

    hs = np.empty_like(a_bar.data)
    h = np.zeros(a_bar.data.shape[1:], dtype=a_bar.dtype)
    for t in range(L):
        h = a_bar.data[t] * h + b_bar_x.data[t]
        hs[t] = h
    y = (hs * c.data[..., None, :]).sum(axis=-1)
    out = y + d_skip.data * x.data

    def backward_fn(g):
        if d_skip.requires_grad:
            _accum(d_skip, (g * x.data).reshape(-1, dim).sum(axis=0))
        if x.requires_grad:
            _accum(x, g * d_skip.data)
        if c.requires_grad:
            _accum(c, (g[..., None] * hs).sum(axis=-2))
        dh_y = g[..., None] * c.data[..., None, :]
        da = np.empty_like(hs)
        dbx = np.empty_like(hs)
        carry = np.zeros(hs.shape[1:], dtype=hs.dtype)
        for t in range(L - 1, -1, -1):
            tot = dh_y[t] + carry
            dbx[t] = tot
            da[t] = tot * hs[t - 1] if t > 0 else 0.0
            carry = tot * a_bar.data[t]
        _accum(a_bar, da)
        _accum(b_bar_x, dbx)

    return _make("ssm_scan", out, (a_bar, b_bar_x, c, d_skip, x), backward_fn)


def reverse(x) -> Tensor:
    """Flip axis 0 (sequence reversal)."""
    x = as_tensor(x)
    out = np.ascontiguousarray(np.flip(x.data, axis=0))

    def backward_fn(g):
        _accum(x, np.flip(g, axis=0))

    return _make("reverse", out, (x,), backward_fn)


def depthwise_causal_conv(x, kernel) -> Tensor:
    """Per-channel causal convolution along axis 0.

    x: (L, ..., C); kernel: (K, C).  Output t depends on x[t-K+1 … t]
    (zero padding before the sequence start); no mixing across channels.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 2:
        raise ValueError("depthwise_causal_conv: kernel must be (K, C)")
    k_len, channels = kernel.data.shape
    if x.data.shape[-1] != channels:
        raise ValueError(
            f"depthwise_causal_conv: {x.data.shape[-1]} channels vs kernel "
            f"{channels}")
    L = x.data.shape[0]
    pad = [(k_len - 1, 0)] + [(0, 0)] * (x.ndim - 1)
    xp = np.pad(x.data, pad)
    out = np.zeros_like(x.data)
    for j in range(k_len):
        out += kernel.data[j] * xp[j:j + L]

    def backward_fn(g):
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for j in range(k_len):
                dxp[j:j + L] += g * kernel.data[j]
            _accum(x, dxp[k_len - 1:])
        if kernel.requires_grad:
            dk = np.empty_like(kernel.data)
            for j in range(k_len):
                dk[j] = (g * xp[j:j + L]).reshape(-1, channels).sum(axis=0)
            _accum(kernel, dk)

    return _make("depthwise_causal_conv", out, (x, kernel), backward_fn)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def backward_fn(g):
        _accum(x, g.reshape(x.data.shape))

    return _make("reshape", out, (x,), backward_fn)


def transpose(x, axis_a: int = 0, axis_b: int = 1) -> Tensor:
    x = as_tensor(x)
    out = np.ascontiguousarray(np.swapaxes(x.data, axis_a, axis_b))

    def backward_fn(g):
        _accum(x, np.swapaxes(g, axis_a, axis_b))

    return _make("transpose", out, (x,), backward_fn)


def total_sum(x) -> Tensor:
    """Sum every element down to a scalar."""
    x = as_tensor(x)
    out = x.data.sum()

    def backward_fn(g):
        _accum(x, np.broadcast_to(g, x.data.shape).astype(x.dtype, copy=False))

    return _make("total_sum", np.asarray(out), (x,), backward_fn)


# ---------------------------------------------------------------------------
# tape walk
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into t.grad for every reachable tensor."""
    if loss.data.shape != ():
        raise ValueError(f"backward expects a scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad (no tape recorded)")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones((), dtype=loss.dtype)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(tensors) -> None:
    for t in tensors:
        t.grad = None


def finite_difference_check(f, tensors, h: float = 1e-5) -> float:
    """Compare reverse-mode gradients of f against central differences.

    f is a zero-argument callable returning a scalar Tensor computed from
    `tensors` (a Tensor or list of Tensors, float64, perturbed in place).
    Returns max over coordinates of |fd − grad| / max(1, |grad|).
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-6, 1e-3]")
    ts = [tensors] if isinstance(tensors, Tensor) else list(tensors)
    for t in ts:
        if t.dtype != np.float64:
            raise ValueError("finite differences require float64 tensors")
    zero_grad(ts)
    backward(f())
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
             for t in ts]
    max_rel = 0.0
    for t, g in zip(ts, grads):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                fp = float(f().data)
            flat[i] = orig - h
            with no_grad():
                fm = float(f().data)
            flat[i] = orig
            fd = (fp - fm) / (2.0 * h)
            rel = abs(fd - gflat[i]) / max(1.0, abs(gflat[i]))
            max_rel = max(max_rel, rel)
    zero_grad(ts)
    return max_rel
