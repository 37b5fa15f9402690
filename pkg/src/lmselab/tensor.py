"""Dense float64 tensors with reverse-mode automatic differentiation.

Each op records a backward closure on its output. ``Tensor.backward`` walks
the graph in reverse topological order and accumulates gradients into leaf
tensors created with ``requires_grad=True``.
"""
from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "DimensionError",
    "no_grad",
    "tensor",
    "matmul",
    "conv2d",
    "conv2d_transpose",
    "relu",
    "sigmoid",
    "activation",
    "log",
    "exp",
    "absolute",
    "backward",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested op."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class _Node:
    __slots__ = ("parents", "backward", "op")

    def __init__(self, parents, backward, op):
        self.parents = parents
        self.backward = backward
        self.op = op


class Tensor:
    """An n-d float64 array, optionally tracked for gradients."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: _Node | None = None

    # -- basics -----------------------------------------------------------
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
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def backward(self, accumulate: bool = True) -> None:
        backward(self, accumulate=accumulate)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, -_as_tensor(other))

    def __rsub__(self, other):
        return _add(_as_tensor(other), -self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return _mul(self, _pow(other, -1.0))
        c = np.asarray(other, dtype=np.float64)
        shape = self.shape
        # true division keeps x / x == 1 exactly
        return _make(self.data / c, (self,), lambda g: (_unbroadcast(g / c, shape),), "div")

    def __rtruediv__(self, other):
        return _mul(_as_tensor(other), _pow(self, -1.0))

    def __neg__(self):
        out = self.data * -1.0
        return _make(out, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent):
        return _pow(self, float(exponent))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> Tensor:
        shape = self.shape
        return _make(self.data.sum(), (self,), lambda g: (np.broadcast_to(g, shape),), "sum")

    def mean(self) -> Tensor:
        shape, n = self.shape, self.size
        return _make(
            self.data.mean(), (self,), lambda g: (np.broadcast_to(g / n, shape),), "mean"
        )

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return _make(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape")


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(parents) -> bool:
    return _grad_enabled and any(p.requires_grad for p in parents)


def _make(data, parents, backward_fn, op) -> Tensor:
    out = Tensor(data)
    if _tracked(parents):
        out.requires_grad = True
        out.node = _Node(parents, backward_fn, op)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        "add",
    )


def _mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def _pow(a: Tensor, p: float) -> Tensor:
    x = a.data
    if p == 2.0:
        out = x * x
        return _make(out, (a,), lambda g: (g * 2.0 * x,), "square")
    out = x**p
    return _make(out, (a,), lambda g: (g * p * x ** (p - 1.0),), "pow")


def log(x: Tensor) -> Tensor:
    """Natural log."""
    x = _as_tensor(x)
    d = x.data
    return _make(np.log(d), (x,), lambda g: (g / d,), "log")


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def absolute(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    return _make(np.abs(d), (x,), lambda g: (g * np.sign(d),), "abs")


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def activation(x: Tensor, kind: str) -> Tensor:
    kind = kind.lower()
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


# -- convolution kernels (numpy, no graph) --------------------------------

def _out_extent(h: int, k: int, stride: int, padding: int) -> int:
    return (h + 2 * padding - k) // stride + 1


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """View of ``xp`` (N,C,Hp,Wp) as (N,C,Ho,Wo,K,K) patches."""
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(xp.shape[0], xp.shape[1], ho, wo, k, k),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    n, c, h, wd = x.shape
    o, i, k, _ = w.shape
    ho, wo = _out_extent(h, k, stride, padding), _out_extent(wd, k, stride, padding)
    cols = _windows(_pad(x, padding), k, stride, ho, wo)
    y = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # N,Ho,Wo,O
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv_backward_input(g: np.ndarray, w: np.ndarray, x_shape, stride: int, padding: int) -> np.ndarray:
    """Adjoint of ``conv_forward`` with respect to its input."""
    n, c, h, wd = x_shape
    _, _, k, _ = w.shape
    ho, wo = g.shape[2], g.shape[3]
    gcols = np.tensordot(g, w, axes=([1], [0]))  # N,Ho,Wo,C,K,K
    gcols = gcols.transpose(0, 3, 1, 2, 4, 5)
    hp, wp = h + 2 * padding, wd + 2 * padding
    # room for the last window even when it overhangs the unpadded input
    hp = max(hp, (ho - 1) * stride + k)
    wp = max(wp, (wo - 1) * stride + k)
    gx = np.zeros((n, c, hp, wp))
    for i in range(k):
        for j in range(k):
            gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[..., i, j]
    return np.ascontiguousarray(gx[:, :, padding : padding + h, padding : padding + wd])


def conv_backward_weight(x: np.ndarray, g: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    ho, wo = g.shape[2], g.shape[3]
    cols = _windows(_pad(x, padding), k, stride, ho, wo)
    return np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))  # O,C,K,K


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation. ``x`` is NCHW, ``kernel`` is (out, in, K, K)."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError("conv2d expects NCHW input and OIKK kernel")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    k = kernel.shape[2]
    if k < 1 or kernel.shape[3] != k:
        raise DimensionError(f"kernel must be square with K >= 1, got {kernel.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise DimensionError(f"input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}")
    ho = _out_extent(x.shape[2], k, stride, padding)
    wo = _out_extent(x.shape[3], k, stride, padding)
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d output extent {ho}x{wo} is empty")
    xd, wd, xs = x.data, kernel.data, x.shape

    def bw(g):
        return (
            conv_backward_input(g, wd, xs, stride, padding),
            conv_backward_weight(xd, g, k, stride, padding),
        )

    return _make(conv_forward(xd, wd, stride, padding), (x, kernel), bw, "conv2d")


def conv2d_transpose(
    x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0, output_padding: int = 0
) -> Tensor:
    """Transposed convolution (adjoint of ``conv2d``).

    ``kernel`` is (in, out, K, K). Output extent is
    ``(H - 1) * stride - 2 * padding + K + output_padding``.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError("conv2d_transpose expects NCHW input and IOKK kernel")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    if output_padding < 0 or output_padding >= stride:
        raise ValueError("output_padding must be smaller than stride")
    k = kernel.shape[2]
    if k < 1 or kernel.shape[3] != k:
        raise DimensionError(f"kernel must be square with K >= 1, got {kernel.shape}")
    if x.shape[1] != kernel.shape[0]:
        raise DimensionError(f"input has {x.shape[1]} channels, kernel expects {kernel.shape[0]}")
    n, _, h, wd = x.shape
    ho = (h - 1) * stride - 2 * padding + k + output_padding
    wo = (wd - 1) * stride - 2 * padding + k + output_padding
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d_transpose output extent {ho}x{wo} is empty")
    out_shape = (n, kernel.shape[1], ho, wo)
    xd, kd = x.data, kernel.data

    def bw(g):
        return (
            conv_forward(g, kd, stride, padding),
            conv_backward_weight(g, xd, k, stride, padding),
        )

    out = conv_backward_input(xd, kd, out_shape, stride, padding)
    return _make(out, (x, kernel), bw, "conv2d_transpose")


# -- graph traversal -------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss: Tensor, accumulate: bool = True) -> None:
    """Populate ``.grad`` on every tracked leaf reachable from ``loss``.

    Gradients add onto existing buffers; call ``zero_grad`` on parameters (or
    pass ``accumulate=False``) to start fresh.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tracked tensor")
    grads = {id(loss): np.ones_like(loss.data)}
    for t in reversed(_topo_order(loss)):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.grad is None or not accumulate:
                t.grad = np.array(g, dtype=np.float64)
            else:
                t.grad = t.grad + g
            continue
        for p, pg in zip(t.node.parents, t.node.backward(g)):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g

