"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable operation creates a node that remembers its parents, the
intermediates it needs and a closure mapping the output gradient to parent
gradients. Node ids are drawn from a global counter, so ids increase along
any path of the graph and sorting reachable nodes by id (descending) yields a
valid reverse-topological order for :func:`backward`.

Only tensors reachable from a ``requires_grad`` leaf are recorded; tensors
built from constants stay plain values and can be shared freely.
"""
from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

_node_ids = itertools.count(1)


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward", "_op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) or data.dtype != np.float64 else data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node_id = next(_node_ids) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self.name = name

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return NotImplemented

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float)) and like is not None:
        return Tensor(np.full(like.shape, float(x)))
    return Tensor(np.asarray(x, dtype=np.float64))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node_id = next(_node_ids)
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _check_same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        return _node(a.data + b, (a,), lambda g: (g,), "add_scalar")
    b = as_tensor(b)
    _check_same(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        return _node(a.data - b, (a,), lambda g: (g,), "sub_scalar")
    b = as_tensor(b)
    _check_same(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    """Hadamard product (or scaling by a Python number)."""
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    b = as_tensor(b)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _node(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def relu(a: Tensor) -> Tensor:
    m = a.data > 0
    return _node(a.data * m, (a,), lambda g: (g * m,), "relu")


def tabs(a: Tensor) -> Tensor:
    sgn = np.sign(a.data)
    return _node(np.abs(a.data), (a,), lambda g: (g * sgn,), "abs")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _node(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def tsqrt(a: Tensor) -> Tensor:
    r = np.sqrt(a.data)

    def back(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(r > 0, 0.5 / r, 0.0)
        return (g * d,)

    return _node(r, (a,), back, "sqrt")


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch by name: add, sub, mul, sigmoid, tanh."""
    table = {"add": add, "sub": sub, "mul": mul, "sigmoid": sigmoid, "tanh": tanh}
    if op not in table:
        raise ConfigError(f"unknown elementwise op {op!r}")
    return table[op](*operands)


# -------------------------------------------------------------- reductions


def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def tmean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _node(np.array(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),), "mean")


# ------------------------------------------------------------- structural


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def take(a: Tensor, index: int, axis: int) -> Tensor:
    """Select one position along ``axis`` (the axis is dropped)."""
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return _node(np.take(a.data, index, axis=axis), (a,), back, "take")


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _node(a.data[..., start:stop], (a,), back, "slice")


def split_last(a: Tensor, n: int) -> list[Tensor]:
    width = a.shape[-1] // n
    return [slice_last(a, k * width, (k + 1) * width) for k in range(n)]


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def back(g):
        return tuple(np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis) for k in range(len(tensors)))

    return _node(data, tensors, back, "concat")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack channels (last axis) of two maps with equal leading dims, order (a, b)."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_channels: spatial mismatch {a.shape} vs {b.shape}")
    if b.shape[-1] == 0:
        return a
    if a.shape[-1] == 0:
        return b
    return concat([a, b], axis=-1)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def back(g):
        return tuple(np.take(g, k, axis=axis) for k in range(len(tensors)))

    return _node(data, tensors, back, "stack")


# ------------------------------------------------------------------ linear


def matmul(x: Tensor, w: Tensor) -> Tensor:
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"matmul: {x.shape} @ {w.shape}")
    xd, wd = x.data, w.data
    return _node(xd @ wd, (x, w), lambda g: (g @ wd.T, xd.T @ g), "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x W + b``. ``x`` may be (n,) or (batch, ...) flattened to (batch, n)."""
    single = x.ndim == 1
    x2 = reshape(x, (1, x.size)) if single else reshape(x, (x.shape[0], -1))
    if x2.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"linear: x{x.shape} W{w.shape} b{b.shape}")
    xd, wd = x2.data, w.data
    out = xd @ wd + b.data
    node = _node(out, (x2, w, b), lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)), "linear")
    return reshape(node, (w.shape[1],)) if single else node


# ------------------------------------------------------------ convolution


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    b, h, w, c = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    cols = np.empty((b, h, w, k, k, c))
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i:i + h, j:j + w, :]
    return cols.reshape(b, h, w, k * k * c)


def _col2im(dcols: np.ndarray, shape, k: int) -> np.ndarray:
    b, h, w, c = shape
    p = (k - 1) // 2
    dcols = dcols.reshape(b, h, w, k, k, c)
    dxp = np.zeros((b, h + 2 * p, w + 2 * p, c))
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
    return dxp[:, p:p + h, p:p + w, :]


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """'Same' cross-correlation; x is (B, H, W, Cin) or (H, W, Cin), kernel (k, k, Cin, Cout)."""
    k = kernel.shape[0]
    if k % 2 == 0 or kernel.shape[1] != k:
        raise ConfigError(f"conv2d needs an odd square kernel, got {kernel.shape[:2]}")
    single = x.ndim == 3
    if single:
        x = reshape(x, (1,) + x.shape)
    if x.shape[-1] != kernel.shape[2]:
        raise ShapeError(f"conv2d: input channels {x.shape[-1]} vs kernel {kernel.shape[2]}")
    cout = kernel.shape[3]
    if bias is None:
        bias = Tensor(np.zeros(cout))
    xshape = x.shape
    cols = _im2col(x.data, k)
    wmat = kernel.data.reshape(-1, cout)
    out = cols @ wmat + bias.data

    def back(g):
        g2 = g.reshape(-1, cout)
        dw = (cols.reshape(-1, cols.shape[-1]).T @ g2).reshape(kernel.shape)
        dx = _col2im(g @ wmat.T, xshape, k)
        return dx, dw, g2.sum(axis=0)

    node = _node(out, (x, kernel, bias), back, "conv2d")
    return reshape(node, node.shape[1:]) if single else node


# ----------------------------------------------------- normalisation, noise


@dataclass
class BatchNormState:
    """Running statistics (not trained by gradient)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: str = "train",
               mask: np.ndarray | None = None) -> Tensor:
    """Per-channel standardisation over every axis but the last.

    ``mask`` (broadcastable to ``x.shape[:-1]``) restricts statistics to the
    masked positions; the output is zero outside the mask.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError("batch_norm: scale/shift must match channel count")
    xd = x.data
    if mask is None:
        m = np.ones(xd.shape[:-1] + (1,))
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=np.float64), xd.shape[:-1])[..., None]
    axes = tuple(range(xd.ndim - 1))
    if mode == "train":
        if xd.shape[0] < 2:
            raise ConfigError("batch_norm in train mode needs a batch of at least 2")
        count = float(m.sum())
        mu = (xd * m).sum(axis=axes) / count
        var = (((xd - mu) ** 2) * m).sum(axis=axes) / count
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mu
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * var
    elif mode == "eval":
        mu, var = state.running_mean, state.running_var
        count = None
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (xd - mu) * inv
    gd = gamma.data
    out = (xhat * gd + beta.data) * m

    def back(g):
        gm = g * m
        dgamma = (gm * xhat).sum(axis=axes)
        dbeta = gm.sum(axis=axes)
        dxhat = gm * gd
        if mode == "eval":
            return dxhat * inv, dgamma, dbeta
        s1 = dxhat.sum(axis=axes)
        s2 = (dxhat * xhat).sum(axis=axes)
        dx = (inv / count) * (count * dxhat - s1 - xhat * s2) * m
        return dx, dgamma, dbeta

    return _node(out, (x, gamma, beta), back, "batch_norm")


def dropout(x: Tensor, p: float, mode: str, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout in train mode; identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- backward


def _reachable(loss: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack_ = [loss]
    while stack_:
        t = stack_.pop()
        if id(t) in seen or not t.requires_grad:
            continue
        seen[id(t)] = t
        stack_.extend(t._parents)
    return sorted(seen.values(), key=lambda t: t.node_id, reverse=True)


def tape_of(loss: Tensor) -> list[tuple[int, str, tuple[int, ...]]]:
    """The recorded operations feeding ``loss`` as (node id, op, input ids), forward order."""
    nodes = _reachable(loss)[::-1]
    return [(t.node_id, t._op, tuple(p.node_id for p in t._parents if p.requires_grad)) for t in nodes]


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor requiring grad")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for t in _reachable(loss):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t._backward is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        for parent, pg in zip(t._parents, t._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# -------------------------------------------------------------- parameters


class Param(Tensor):
    """Trainable leaf with Adam moment buffers."""

    __slots__ = ("m", "v", "step")

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def zero_grad(self):
        self.grad = None


def zero_grad(params: Iterable[Param]) -> None:
    for p in params:
        p.grad = None


def adam_step(params: Iterable[Param], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; parameters without gradient are skipped."""
    for p in params:
        if p.grad is None:
            continue
        g = p.grad
        p.step += 1
        p.m = beta1 * p.m + (1 - beta1) * g
        p.v = beta2 * p.v + (1 - beta2) * g * g
        mhat = p.m / (1 - beta1 ** p.step)
        vhat = p.v / (1 - beta2 ** p.step)
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str | None
    worst_index: tuple[int, ...] | None


def grad_check(fn: Callable[[], Tensor], params: Sequence[Param], step: float = 1e-6) -> GradCheckResult:
    """Compare backward() against central differences over every coordinate.

    The error is ``max|a - n| / max(1e-12, max(|a| + |n|))`` taken over all
    coordinates of all parameters; the worst coordinate is reported.
    """
    zero_grad(params)
    loss = fn()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    numeric = []
    for p in params:
        num = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            fp = fn().item()
            flat[i] = old - step
            fm = fn().item()
            flat[i] = old
            num.reshape(-1)[i] = (fp - fm) / (2 * step)
        numeric.append(num)
    worst, worst_p, worst_i, denom = -1.0, None, None, 1e-12
    for p, a, n in zip(params, analytic, numeric):
        if a.size == 0:
            continue
        diff = np.abs(a - n)
        denom = max(denom, float((np.abs(a) + np.abs(n)).max()))
        k = int(np.argmax(diff))
        if diff.reshape(-1)[k] > worst:
            worst = float(diff.reshape(-1)[k])
            worst_p = p.name
            worst_i = tuple(int(v) for v in np.unravel_index(k, a.shape))
    zero_grad(params)
    return GradCheckResult(max(worst, 0.0) / denom, worst_p, worst_i)


# -------------------------------------------------------------- checkpoint

CKPT_MAGIC = "HEXCAST-CKPT v1"


def save_checkpoint(path, arrays: "OrderedDict[str, np.ndarray] | dict[str, np.ndarray]") -> None:
    """Text header, then per entry: name line, shape line, raw little-endian float64."""
    with open(path, "wb") as fh:
        fh.write((CKPT_MAGIC + "\n").encode("ascii"))
        for name, arr in arrays.items():
            if "\n" in name or not name:
                raise ValueError(f"bad parameter name {name!r}")
            arr = np.asarray(arr, dtype="<f8")
            fh.write((name + "\n").encode("utf-8"))
            fh.write((" ".join(str(d) for d in arr.shape) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(arr).tobytes(order="C"))


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    with open(path, "rb") as fh:
        if fh.readline().decode("ascii").rstrip("\n") != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        while True:
            name = fh.readline()
            if not name:
                break
            name = name.decode("utf-8").rstrip("\n")
            shape_line = fh.readline().decode("ascii").strip()
            shape = tuple(int(s) for s in shape_line.split()) if shape_line else ()
            n = math.prod(shape)
            payload = fh.read(8 * n)
            if len(payload) != 8 * n:
                raise ValueError(f"{path}: truncated payload for {name}")
            out[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return out
