"""Dense tensors with reverse-mode autodiff on numpy arrays.

Design notes:
  * Tensors hold float32 or float64 data of rank <= 4.
  * Ops build the graph eagerly; ``no_grad()`` suppresses graph capture so
    inference runs without closure overhead.
  * Gradients accumulate only on leaves (parameters and explicit inputs).
  * Convolutions lower to a strided im2col view plus one batched matmul, so
    the heavy lifting stays inside BLAS.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ConfigError, InputError, ShapeError

__all__ = [
    "Tensor",
    "no_grad",
    "add", "sub", "mul", "div", "neg",
    "relu", "sigmoid", "tanh", "softmax", "log", "exp", "sqrt",
    "clamp_min", "t_sum", "t_mean", "reshape", "concat", "narrow",
    "broadcast_to", "linear", "conv1d", "conv2d", "batchnorm",
    "mean_over_time",
]

_FLOATS = (np.float32, np.float64)
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph capture inside the block (inference / stat updates)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOATS:
            arr = arr.astype(np.float32)
        if arr.ndim > 4:
            raise ShapeError(f"tensors are limited to rank 4, got rank {arr.ndim}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        return out

    # -- basic introspection --------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    # -- autodiff ---------------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor to all reachable leaves."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError("seed gradient shape must match tensor shape")

        # Iterative topological order; training graphs are deep enough that
        # recursion would flirt with the interpreter limit.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self.dtype))

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return t_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return t_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _wants_grad(*tensors: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in tensors)


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gdim, sdim) in enumerate(zip(g.shape, shape)):
        if sdim == 1 and gdim != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    if not _wants_grad(a, b):
        return Tensor(data)

    def backward(g):
        return _sum_to(g, a.data.shape), _sum_to(g, b.data.shape)

    return Tensor._result(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    if not _wants_grad(a, b):
        return Tensor(data)

    def backward(g):
        return _sum_to(g, a.data.shape), _sum_to(-g, b.data.shape)

    return Tensor._result(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    if not _wants_grad(a, b):
        return Tensor(data)

    def backward(g):
        return _sum_to(g * b.data, a.data.shape), _sum_to(g * a.data, b.data.shape)

    return Tensor._result(data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data
    if not _wants_grad(a, b):
        return Tensor(data)

    def backward(g):
        ga = _sum_to(g / b.data, a.data.shape)
        gb = _sum_to(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return Tensor._result(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    data = -a.data
    if not _wants_grad(a):
        return Tensor(data)
    return Tensor._result(data, (a,), lambda g: (-g,))


# -- pointwise nonlinearities ---------------------------------------------------


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)
    if not _wants_grad(a):
        return Tensor(data)
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor._result(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # Split by sign to keep exp() off the overflow path.
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        return (g * data * (1.0 - data),)

    return Tensor._result(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        return (g * (1.0 - data * data),)

    return Tensor._result(data, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    ax = axis if axis >= 0 else a.data.ndim + axis
    if ax < 0 or ax >= a.data.ndim or a.data.shape[ax] == 0:
        raise ConfigError(f"softmax axis {axis} is empty or out of range for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=ax, keepdims=True)
    ex = np.exp(shifted)
    data = ex / ex.sum(axis=ax, keepdims=True)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        inner = (g * data).sum(axis=ax, keepdims=True)
        return (data * (g - inner),)

    return Tensor._result(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        return (g / a.data,)

    return Tensor._result(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        return (g * data,)

    return Tensor._result(data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        return (g * (0.5 / data),)

    return Tensor._result(data, (a,), backward)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient passes only where a > floor."""
    data = np.maximum(a.data, floor)
    if not _wants_grad(a):
        return Tensor(data)
    mask = a.data > floor

    def backward(g):
        return (g * mask,)

    return Tensor._result(data, (a,), backward)


# -- reductions and shape ops ----------------------------------------------------


def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a if a >= 0 else ndim + a for a in axis)


def t_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.data.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axes)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return Tensor._result(np.asarray(data), (a,), backward)


def t_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.data.ndim)
    count = 1
    for ax in axes:
        count *= a.data.shape[ax]
    data = a.data.mean(axis=axes, keepdims=keepdims)
    if not _wants_grad(a):
        return Tensor(np.asarray(data))

    def backward(g):
        gg = g / count
        if not keepdims:
            gg = np.expand_dims(gg, axes)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return Tensor._result(np.asarray(data), (a,), backward)


def mean_over_time(a: Tensor) -> Tensor:
    """Global average pool over the trailing (time) axis."""
    return t_mean(a, axis=-1)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    data = a.data.reshape(shape)
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return Tensor._result(data, (a,), backward)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    data = np.broadcast_to(a.data, shape).copy()
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        return (_sum_to(g, a.data.shape),)

    return Tensor._result(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    if not _wants_grad(*tensors):
        return Tensor(data)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._result(data, tuple(tensors), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis (used for channel-group splits)."""
    ax = axis if axis >= 0 else a.data.ndim + axis
    index = [slice(None)] * a.data.ndim
    index[ax] = slice(start, start + length)
    index = tuple(index)
    data = a.data[index].copy()
    if not _wants_grad(a):
        return Tensor(data)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return Tensor._result(data, (a,), backward)


# -- linear map --------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x @ weight.T + bias, with x of shape [F] or [B, F]."""
    squeeze = x.data.ndim == 1
    xd = x.data[None, :] if squeeze else x.data
    if xd.ndim != 2 or weight.data.ndim != 2 or xd.shape[1] != weight.data.shape[1]:
        raise ShapeError(
            f"linear expects [B,F] x [O,F], got {x.data.shape} and {weight.data.shape}")
    out = xd @ weight.data.T
    if bias is not None:
        out = out + bias.data
    if squeeze:
        out = out[0]
    parents = (x, weight) if bias is None else (x, weight, bias)
    if not _wants_grad(*parents):
        return Tensor(out)

    def backward(g):
        gd = g[None, :] if squeeze else g
        gx = gd @ weight.data
        if squeeze:
            gx = gx[0]
        gw = gd.T @ xd
        if bias is None:
            return gx, gw
        return gx, gw, gd.sum(axis=0)

    return Tensor._result(out, parents, backward)


# -- convolutions -------------------------------------------------------------------


def _check_conv_args(kernel: int, dilation: int, stride: int) -> None:
    if kernel % 2 == 0:
        raise ConfigError(f"same-size convolutions need an odd kernel, got {kernel}")
    if dilation < 1 or stride < 1:
        raise ConfigError("dilation and stride must be >= 1")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           dilation: int = 1, stride: int = 1) -> Tensor:
    """Cross-correlation over time with symmetric zero padding.

    x: [Cin, L] or [B, Cin, L]; weight: [Cout, Cin, k]. Padding keeps the
    output length at ceil(L / stride).
    """
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3:
        raise ShapeError(f"conv1d expects [B,Cin,L], got shape {x.data.shape}")
    b_, cin, length = xd.shape
    cout, cin_w, k = weight.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv1d channel mismatch: input {cin} vs weight {cin_w}")
    _check_conv_args(k, dilation, stride)

    pad = (k - 1) * dilation // 2
    l_out = (length - 1) // stride + 1
    xp = np.zeros((b_, cin, length + 2 * pad), dtype=xd.dtype)
    xp[:, :, pad:pad + length] = xd
    sb, sc, sl = xp.strides
    cols = as_strided(xp, (b_, cin, k, l_out), (sb, sc, dilation * sl, stride * sl))
    cols = np.ascontiguousarray(cols).reshape(b_, cin * k, l_out)
    w2 = weight.data.reshape(cout, cin * k)
    out = np.matmul(w2[None], cols)
    if bias is not None:
        out = out + bias.data[None, :, None]
    if squeeze:
        out_t = out[0]
    else:
        out_t = out
    parents = (x, weight) if bias is None else (x, weight, bias)
    if not _wants_grad(*parents):
        return Tensor(out_t)

    def backward(g):
        gd = g[None] if squeeze else g
        gw = np.matmul(gd, cols.transpose(0, 2, 1)).sum(axis=0).reshape(cout, cin, k)
        gcols = np.matmul(w2.T[None], gd).reshape(b_, cin, k, l_out)
        gxp = np.zeros_like(xp)
        span = stride * l_out
        for tap in range(k):
            off = tap * dilation
            gxp[:, :, off:off + span:stride] += gcols[:, :, tap, :]
        gx = gxp[:, :, pad:pad + length]
        if squeeze:
            gx = gx[0]
        if bias is None:
            return gx, gw
        return gx, gw, gd.sum(axis=(0, 2))

    return Tensor._result(out_t, parents, backward)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: tuple[int, int] = (1, 1)) -> Tensor:
    """2-D cross-correlation on [B, Cin, D, L] (or [Cin, D, L]) maps.

    Symmetric zero padding is applied before striding, so each spatial
    extent maps to ceil(extent / stride).
    """
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d expects [B,Cin,D,L], got shape {x.data.shape}")
    b_, cin, d_in, l_in = xd.shape
    cout, cin_w, kd, kl = weight.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d channel mismatch: input {cin} vs weight {cin_w}")
    sd_, sl_ = stride
    _check_conv_args(kd, 1, sd_)
    _check_conv_args(kl, 1, sl_)

    pd, pl = (kd - 1) // 2, (kl - 1) // 2
    d_out = (d_in - 1) // sd_ + 1
    l_out = (l_in - 1) // sl_ + 1
    xp = np.zeros((b_, cin, d_in + 2 * pd, l_in + 2 * pl), dtype=xd.dtype)
    xp[:, :, pd:pd + d_in, pl:pl + l_in] = xd
    sb, sc, sd, sl = xp.strides
    cols = as_strided(
        xp,
        (b_, cin, kd, kl, d_out, l_out),
        (sb, sc, sd, sl, sd_ * sd, sl_ * sl),
    )
    cols = np.ascontiguousarray(cols).reshape(b_, cin * kd * kl, d_out * l_out)
    w2 = weight.data.reshape(cout, cin * kd * kl)
    out = np.matmul(w2[None], cols).reshape(b_, cout, d_out, l_out)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out_t = out[0] if squeeze else out
    parents = (x, weight) if bias is None else (x, weight, bias)
    if not _wants_grad(*parents):
        return Tensor(out_t)

    def backward(g):
        gd = g[None] if squeeze else g
        gflat = gd.reshape(b_, cout, d_out * l_out)
        gw = np.matmul(gflat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.data.shape)
        gcols = np.matmul(w2.T[None], gflat).reshape(b_, cin, kd, kl, d_out, l_out)
        gxp = np.zeros_like(xp)
        dspan, lspan = sd_ * d_out, sl_ * l_out
        for i in range(kd):
            for j in range(kl):
                gxp[:, :, i:i + dspan:sd_, j:j + lspan:sl_] += gcols[:, :, i, j, :, :]
        gx = gxp[:, :, pd:pd + d_in, pl:pl + l_in]
        if squeeze:
            gx = gx[0]
        if bias is None:
            return gx, gw
        return gx, gw, gd.sum(axis=(0, 2, 3))

    return Tensor._result(out_t, parents, backward)


# -- batch normalization ---------------------------------------------------------


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor,
              running_mean: np.ndarray, running_var: np.ndarray,
              training: bool, momentum: float = 0.9, eps: float = 1e-5) -> Tensor:
    """Normalize per channel (axis 1); remaining axes are reduced.

    Training mode uses batch statistics and updates the running buffers in
    place with ``running = momentum * running + (1 - momentum) * batch``.
    Eval mode reads the buffers and never mutates them.
    """
    xd = x.data
    if xd.ndim < 2:
        raise ShapeError(f"batchnorm expects channels on axis 1, got shape {xd.shape}")
    axes = (0,) + tuple(range(2, xd.ndim))
    count = 1
    for ax in axes:
        count *= xd.shape[ax]
    cshape = (1, xd.shape[1]) + (1,) * (xd.ndim - 2)

    if training:
        if count < 2:
            raise InputError(
                f"batchnorm in training mode needs more than one value per channel, got {xd.shape}")
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean.astype(xd.dtype)
        var = running_var.astype(xd.dtype)

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean.reshape(cshape)) * inv.reshape(cshape)
    out = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)
    if not _wants_grad(x, gamma, beta):
        return Tensor(out)

    def backward(g):
        gbeta = g.sum(axis=axes)
        ggamma = (g * xhat).sum(axis=axes)
        gxhat = g * gamma.data.reshape(cshape)
        if training:
            gx = (inv.reshape(cshape) / count) * (
                count * gxhat
                - gxhat.sum(axis=axes).reshape(cshape)
                - xhat * (gxhat * xhat).sum(axis=axes).reshape(cshape)
            )
        else:
            gx = gxhat * inv.reshape(cshape)
        return gx, ggamma, gbeta

    return Tensor._result(out, (x, gamma, beta), backward)
