"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Every model computation in this package is expressed through the primitives
below, so gradient correctness is testable once (see ``gradcheck``).

Design notes:

- The graph is built eagerly during the forward pass (a backward closure plus
  parent references per output tensor) and is discarded once the tensors go
  out of scope.  There is no graph reuse and no higher-order differentiation.
- Elementwise broadcasting is deliberately limited to the scalar case and the
  trailing-suffix case (e.g. ``(C,)`` against ``(T, C)``); everything else
  must go through an explicit :func:`broadcast_to`.
- Tensors are immutable after creation except for gradient accumulation.
  A graph and its tensors must stay on one thread during forward/backward;
  detached tensors may move freely between threads.
- Repeated ``backward`` calls accumulate into ``grad``; callers reset via
  :func:`zero_grad` (or ``tensor.grad = None``) between steps.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import GraphError, NumericError, ShapeError

__all__ = [
    "Tensor",
    "add", "subtract", "multiply", "scale", "matmul", "transpose", "reshape",
    "concat", "slice_along", "reduce_sum", "reduce_mean", "relu", "gelu",
    "exp", "log", "sigmoid", "tanh", "softmax", "broadcast_to", "gather",
    "apply_mask", "pad_constant", "conv1d", "reciprocal", "sqrt",
    "primitive_forward", "PRIMITIVES", "set_strict", "strict_enabled",
    "zero_grad",
]

_STRICT = False


def set_strict(flag: bool) -> None:
    """Enable/disable strict mode: primitives reject non-finite inputs."""
    global _STRICT
    _STRICT = bool(flag)


def strict_enabled() -> bool:
    return _STRICT


def _as_array(data, like: Optional[np.ndarray] = None) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype == np.float32 or arr.dtype == np.float64:
        return arr
    if like is not None:
        return arr.astype(like.dtype)
    return arr.astype(np.float64)


class Tensor:
    """Dense float32/float64 array participating in a reverse-mode graph."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[], None]] = None
        self._op: str = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, op={self._op}{req}{nm})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=False, name=self.name)

    def _ensure_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)

    # --- autograd entry point ---
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        ``self`` must be a scalar (shape ``()``) attached to a graph.
        """
        if self.data.shape != ():
            raise GraphError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            raise GraphError("backward on a tensor detached from any graph")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self._ensure_grad()
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # --- operator sugar ---
    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return subtract(self, _wrap(other, self))

    def __rsub__(self, other):
        return subtract(_wrap(other, self), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, _wrap(other, self))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _wrap(other, self))

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, axes=None) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(_as_array(value, like.data))


def zero_grad(params: Iterable[Tensor]) -> None:
    """Reset accumulated gradients before a fresh backward pass."""
    for p in params:
        p.grad = None


def _check_finite(op: str, *tensors: Tensor) -> None:
    if not _STRICT:
        return
    for t in tensors:
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"{op}: non-finite input in strict mode")


def _node(op: str, data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[["Tensor"], Callable[[], None]]) -> Tensor:
    """Build the output tensor, recording a graph node when grads are needed."""
    out = Tensor(data)
    out._op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward(out)
    return out


def _accum(t: Tensor, delta: np.ndarray) -> None:
    if t.requires_grad:
        t._ensure_grad()
        t.grad += delta


# ---------------------------------------------------------------------------
# broadcasting helpers (scalar + trailing-suffix only for elementwise ops)
# ---------------------------------------------------------------------------

def _ew_shapes_ok(a: tuple, b: tuple) -> bool:
    if a == b or a == () or b == ():
        return True
    if len(a) > len(b):
        return a[len(a) - len(b):] == b
    if len(b) > len(a):
        return b[len(b) - len(a):] == a
    return False


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out the leading axes a scalar/suffix broadcast introduced."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    extra = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(extra)))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Invert a full numpy broadcast from ``shape`` up to ``grad.shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("add", a, b)
    if not _ew_shapes_ok(a.shape, b.shape):
        raise ShapeError("add", "shapes are not equal/scalar/trailing-suffix", a.shape, b.shape)
    def bw(out):
        def run():
            _accum(a, _reduce_to(out.grad, a.shape))
            _accum(b, _reduce_to(out.grad, b.shape))
        return run
    return _node("add", a.data + b.data, (a, b), bw)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("subtract", a, b)
    if not _ew_shapes_ok(a.shape, b.shape):
        raise ShapeError("subtract", "shapes are not equal/scalar/trailing-suffix", a.shape, b.shape)
    def bw(out):
        def run():
            _accum(a, _reduce_to(out.grad, a.shape))
            _accum(b, -_reduce_to(out.grad, b.shape))
        return run
    return _node("subtract", a.data - b.data, (a, b), bw)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    _check_finite("multiply", a, b)
    if not _ew_shapes_ok(a.shape, b.shape):
        raise ShapeError("multiply", "shapes are not equal/scalar/trailing-suffix", a.shape, b.shape)
    def bw(out):
        def run():
            _accum(a, _reduce_to(out.grad * b.data, a.shape))
            _accum(b, _reduce_to(out.grad * a.data, b.shape))
        return run
    return _node("multiply", a.data * b.data, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a plain Python scalar (not a graph value)."""
    _check_finite("scale", a)
    s = float(s)
    def bw(out):
        def run():
            _accum(a, out.grad * np.asarray(s, dtype=a.dtype))
        return run
    return _node("scale", a.data * np.asarray(s, dtype=a.dtype), (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra / structure
# ---------------------------------------------------------------------------

def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the trailing two axes; leading axes must match or be absent."""
    _check_finite("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", "operands must be at least rank 2", a.shape, b.shape)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", "inner dimensions differ", a.shape, b.shape)
    la, lb = a.shape[:-2], b.shape[:-2]
    if not (la == lb or la == () or lb == ()):
        raise ShapeError("matmul", "leading (batch) dimensions must match or be absent",
                         a.shape, b.shape)
    def bw(out):
        def run():
            _accum(a, _reduce_to(out.grad @ _swap_last(b.data), a.shape))
            _accum(b, _reduce_to(_swap_last(a.data) @ out.grad, b.shape))
        return run
    return _node("matmul", a.data @ b.data, (a, b), bw)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        perm = tuple(reversed(range(a.ndim)))
    else:
        perm = tuple(int(ax) for ax in axes)
        if sorted(perm) != list(range(a.ndim)):
            raise ShapeError("transpose", f"axes {perm} is not a permutation of rank {a.ndim}", a.shape)
    inv = tuple(np.argsort(perm))
    def bw(out):
        def run():
            _accum(a, out.grad.transpose(inv))
        return run
    return _node("transpose", a.data.transpose(perm), (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in (shape if isinstance(shape, (tuple, list)) else (shape,)))
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape to {shape}", a.shape) from None
    def bw(out):
        def run():
            _accum(a, out.grad.reshape(a.shape))
        return run
    return _node("reshape", data, (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat", "needs at least one input")
    _check_finite("concat", *tensors)
    rank = tensors[0].ndim
    axis = axis % rank
    for t in tensors[1:]:
        if t.ndim != rank:
            raise ShapeError("concat", "rank mismatch", *(x.shape for x in tensors))
        for d in range(rank):
            if d != axis and t.shape[d] != tensors[0].shape[d]:
                raise ShapeError("concat", f"off-axis extent mismatch at axis {d}",
                                 *(x.shape for x in tensors))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def bw(out):
        def run():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * rank
                idx[axis] = slice(int(lo), int(hi))
                _accum(t, out.grad[tuple(idx)])
        return run
    return _node("concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def slice_along(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % a.ndim
    dim = a.shape[axis]
    if not (0 <= start <= stop <= dim):
        raise ShapeError("slice", f"range [{start}, {stop}) out of bounds for extent {dim}", a.shape)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    def bw(out):
        def run():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                g[idx] = out.grad
                _accum(a, g)
        return run
    return _node("slice", a.data[idx].copy(), (a,), bw)


def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    return axis % ndim


def reduce_sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, a.ndim)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    def bw(out):
        def run():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.shape))
        return run
    return _node("sum", data, (a,), bw)


def reduce_mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, a.ndim)
    count = a.data.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean", "reduction over zero elements", a.shape)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    def bw(out):
        def run():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.shape) / count)
        return run
    return _node("mean", data, (a,), bw)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    _check_finite("relu", a)
    def bw(out):
        def run():
            _accum(a, out.grad * (a.data > 0))
        return run
    return _node("relu", np.maximum(a.data, 0), (a,), bw)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation GELU (the configurable alternative to relu)."""
    _check_finite("gelu", a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)
    def bw(out):
        def run():
            dinner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
            _accum(a, out.grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner))
        return run
    return _node("gelu", data, (a,), bw)


def exp(a: Tensor) -> Tensor:
    _check_finite("exp", a)
    data = np.exp(a.data)
    def bw(out):
        def run():
            _accum(a, out.grad * data)
        return run
    return _node("exp", data, (a,), bw)


def log(a: Tensor) -> Tensor:
    _check_finite("log", a)
    def bw(out):
        def run():
            _accum(a, out.grad / a.data)
        return run
    return _node("log", np.log(a.data), (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    _check_finite("sigmoid", a)
    data = expit(a.data).astype(a.dtype, copy=False)
    def bw(out):
        def run():
            _accum(a, out.grad * data * (1.0 - data))
        return run
    return _node("sigmoid", data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    _check_finite("tanh", a)
    data = np.tanh(a.data)
    def bw(out):
        def run():
            _accum(a, out.grad * (1.0 - data ** 2))
        return run
    return _node("tanh", data, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    _check_finite("softmax", a)
    axis = _norm_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)
    def bw(out):
        def run():
            dot = (out.grad * data).sum(axis=axis, keepdims=True)
            _accum(a, data * (out.grad - dot))
        return run
    return _node("softmax", data, (a,), bw)


def reciprocal(a: Tensor) -> Tensor:
    _check_finite("reciprocal", a)
    data = 1.0 / a.data
    def bw(out):
        def run():
            _accum(a, -out.grad * data * data)
        return run
    return _node("reciprocal", data, (a,), bw)


def sqrt(a: Tensor) -> Tensor:
    _check_finite("sqrt", a)
    data = np.sqrt(a.data)
    def bw(out):
        def run():
            _accum(a, out.grad / (2.0 * data))
        return run
    return _node("sqrt", data, (a,), bw)


# ---------------------------------------------------------------------------
# structure / indexing
# ---------------------------------------------------------------------------

def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast", f"cannot broadcast to {shape}", a.shape) from None
    def bw(out):
        def run():
            _accum(a, _unbroadcast(out.grad, a.shape))
        return run
    return _node("broadcast", data, (a,), bw)


def gather(a: Tensor, indices, axis: int = 0) -> Tensor:
    """Select slices by integer index along one axis (embedding-free gather)."""
    axis = axis % a.ndim
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("gather", f"indices must be 1-D, got rank {idx.ndim}", a.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[axis]):
        raise ShapeError("gather", f"index out of range for extent {a.shape[axis]}", a.shape)
    def bw(out):
        def run():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                gm = np.moveaxis(g, axis, 0)
                np.add.at(gm, idx, np.moveaxis(out.grad, axis, 0))
                _accum(a, g)
        return run
    return _node("gather", np.take(a.data, idx, axis=axis), (a,), bw)


def apply_mask(a: Tensor, mask: np.ndarray) -> Tensor:
    """Elementwise multiply by a constant mask (dropout-mask-apply)."""
    mask = np.asarray(mask, dtype=a.dtype)
    if mask.shape != a.shape:
        raise ShapeError("apply_mask", "mask shape must equal input shape", a.shape, mask.shape)
    def bw(out):
        def run():
            _accum(a, out.grad * mask)
        return run
    return _node("apply_mask", a.data * mask, (a,), bw)


def pad_constant(a: Tensor, pad_width, value: float = 0.0) -> Tensor:
    pad_width = tuple((int(lo), int(hi)) for lo, hi in pad_width)
    if len(pad_width) != a.ndim:
        raise ShapeError("pad", f"pad_width must cover all {a.ndim} axes", a.shape)
    if any(lo < 0 or hi < 0 for lo, hi in pad_width):
        raise ShapeError("pad", "pad amounts must be non-negative", a.shape)
    inner = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.shape))
    def bw(out):
        def run():
            _accum(a, out.grad[inner])
        return run
    return _node("pad", np.pad(a.data, pad_width, constant_values=value), (a,), bw)


def conv1d(x: Tensor, kernel: Tensor, stride: int = 1, dilation: int = 1) -> Tensor:
    """Strided/dilated 1-D convolution core (valid padding, no bias).

    ``x`` is ``(T, C_in)`` or ``(B, T, C_in)``; ``kernel`` is
    ``(C_out, C_in, K)`` with tap ``k`` applied to the ``k``-th oldest frame
    in each window.  Output length is ``(T - (K-1)*dilation - 1)//stride + 1``.
    """
    _check_finite("conv1d", x, kernel)
    if x.ndim not in (2, 3):
        raise ShapeError("conv1d", "input must be (T, C_in) or (B, T, C_in)", x.shape)
    if kernel.ndim != 3:
        raise ShapeError("conv1d", "kernel must be (C_out, C_in, K)", kernel.shape)
    if stride < 1 or dilation < 1:
        raise ShapeError("conv1d", f"stride/dilation must be >= 1, got {stride}/{dilation}")
    T, c_in = x.shape[-2], x.shape[-1]
    c_out, kc, K = kernel.shape
    if kc != c_in:
        raise ShapeError("conv1d", "kernel input channels mismatch", x.shape, kernel.shape)
    span = (K - 1) * dilation + 1
    if T < span:
        raise ShapeError("conv1d", f"input length {T} shorter than receptive span {span}", x.shape)
    t_out = (T - span) // stride + 1
    idx = np.arange(t_out)[:, None] * stride + np.arange(K)[None, :] * dilation  # (t_out, K)
    win = x.data[..., idx, :]                       # (..., t_out, K, C_in)
    wmat = kernel.data.transpose(2, 1, 0).reshape(K * c_in, c_out)
    out_data = win.reshape(*x.shape[:-2], t_out, K * c_in) @ wmat

    def bw(out):
        def run():
            g = out.grad                            # (..., t_out, C_out)
            if kernel.requires_grad:
                gw = win.reshape(-1, K * c_in).T @ g.reshape(-1, c_out)
                _accum(kernel, gw.reshape(K, c_in, c_out).transpose(2, 1, 0))
            if x.requires_grad:
                gwin = (g @ wmat.T).reshape(*g.shape[:-1], K, c_in)
                gx = np.zeros_like(x.data)
                if x.ndim == 2:
                    np.add.at(gx, idx, gwin)
                else:
                    B = x.shape[0]
                    flat = gx.reshape(B * T, c_in)
                    offs = (np.arange(B) * T)[:, None, None]
                    np.add.at(flat, idx[None, :, :] + offs, gwin)
                _accum(x, gx)
        return run
    return _node("conv1d", out_data, (x, kernel), bw)


# ---------------------------------------------------------------------------
# primitive dispatch table (useful for shape-algebra property tests)
# ---------------------------------------------------------------------------

PRIMITIVES: dict[str, Callable] = {
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "scale": scale,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "slice": slice_along,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "relu": relu,
    "gelu": gelu,
    "exp": exp,
    "log": log,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softmax": softmax,
    "broadcast": broadcast_to,
    "gather": gather,
    "apply_mask": apply_mask,
    "pad": pad_constant,
    "conv1d": conv1d,
    "reciprocal": reciprocal,
    "sqrt": sqrt,
}


def primitive_forward(op: str, inputs: Sequence[Tensor], attrs: Optional[dict] = None) -> Tensor:
    """Dispatch a primitive by name. ``inputs`` are positional, ``attrs`` keyword."""
    if op not in PRIMITIVES:
        raise KeyError(f"unknown primitive {op!r}")
    fn = PRIMITIVES[op]
    attrs = attrs or {}
    if op == "concat":
        return fn(list(inputs), **attrs)
    return fn(*inputs, **attrs)
