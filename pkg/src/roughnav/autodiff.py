"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

Define-by-run: every operation records its inputs and a backward closure on
the produced tensor; ``Tensor.backward()`` topologically sorts the recorded
graph and accumulates gradients into every ``requires_grad`` leaf, visiting
each node exactly once.

Supported surface (all that the barrier network and its loss need):
elementwise add/sub/mul, scalar ops, relu, softplus, 2D cross-correlation,
affine (dense) layers, reshape, and sum/mean reductions. Shapes must match
exactly; the only broadcast is the bias addition inside conv2d/dense.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError

__all__ = [
    "Tensor",
    "conv2d",
    "dense",
    "relu",
    "softplus",
    "tsum",
    "tmean",
    "AdamState",
    "adam_step",
]


class Tensor:
    """A float64 array plus the autodiff bookkeeping attached to it."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValidationError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self):
        """Populate grad = d(self)/d(leaf) for every requires_grad leaf."""
        if self.data.size != 1:
            raise ValidationError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __rsub__(self, other):
        return add(_as_tensor(other), -self)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, *shape):
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _check_elementwise(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ValidationError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} do not match "
            "(only scalar operands broadcast)"
        )


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "add")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g if a.data.shape == g.shape else g.sum().reshape(a.data.shape))
        if b.requires_grad:
            b._accum(g if b.data.shape == g.shape else g.sum().reshape(b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "mul")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            ga = g * b.data
            a._accum(ga if a.data.shape == ga.shape else ga.sum().reshape(a.data.shape))
        if b.requires_grad:
            gb = g * a.data
            b._accum(gb if b.data.shape == gb.shape else gb.sum().reshape(b.data.shape))

    return _node(out_data, (a, b), backward)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out_data = np.maximum(x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x._accum(g * (x.data > 0.0))

    return _node(out_data, (x,), backward)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(x) -> Tensor:
    """log(1 + exp(x)), evaluated overflow-free."""
    x = _as_tensor(x)
    out_data = np.logaddexp(0.0, x.data)

    def backward(g):
        if x.requires_grad:
            x._accum(g * _sigmoid(x.data))

    return _node(out_data, (x,), backward)


def tsum(x) -> Tensor:
    x = _as_tensor(x)
    out_data = np.asarray(x.data.sum())

    def backward(g):
        if x.requires_grad:
            x._accum(np.full_like(x.data, float(g)))

    return _node(out_data, (x,), backward)


def tmean(x) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    out_data = np.asarray(x.data.mean())

    def backward(g):
        if x.requires_grad:
            x._accum(np.full_like(x.data, float(g) / n))

    return _node(out_data, (x,), backward)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accum(g.reshape(x.data.shape))

    return _node(out_data, (x,), backward)


def narrow(x, start: int, length: int) -> Tensor:
    """Contiguous slice x[start : start + length] along the leading axis."""
    x = _as_tensor(x)
    if x.data.ndim < 1 or start < 0 or start + length > x.data.shape[0]:
        raise ValidationError(
            f"narrow: [{start}, {start + length}) out of range for {x.data.shape}"
        )
    out_data = x.data[start : start + length]

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[start : start + length] = g
            x._accum(full)

    return _node(out_data, (x,), backward)


# -- dense layer ---------------------------------------------------------

def _dense_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    out = x @ w
    if b is not None:
        out = out + b
    return out


def dense(x, w, b=None) -> Tensor:
    """Affine map: x [N, F] (or [F]) times w [F, O] plus bias [O]."""
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(b) if b is not None else None
    squeeze = x.data.ndim == 1
    xd = x.data[None, :] if squeeze else x.data
    if xd.ndim != 2 or w.data.ndim != 2 or xd.shape[1] != w.data.shape[0]:
        raise ValidationError(
            f"dense: input {x.data.shape} incompatible with weights {w.data.shape}"
        )
    if b is not None and b.data.shape != (w.data.shape[1],):
        raise ValidationError(
            f"dense: bias {b.data.shape} incompatible with weights {w.data.shape}"
        )
    out_data = _dense_fwd(xd, w.data, None if b is None else b.data)
    if squeeze:
        out_data = out_data[0]

    def backward(g):
        g2 = g[None, :] if squeeze else g
        if x.requires_grad:
            gx = g2 @ w.data.T
            x._accum(gx[0] if squeeze else gx)
        if w.requires_grad:
            w._accum(xd.T @ g2)
        if b is not None and b.requires_grad:
            b._accum(g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out_data, parents, backward)


# -- 2D convolution (cross-correlation) -----------------------------------

def _conv_shapes(x_shape, w_shape, stride: int, padding: int):
    n, c, h, wdt = x_shape
    co, ci, kh, kw = w_shape
    if ci != c:
        raise ValidationError(f"conv2d: input channels {c} != kernel channels {ci}")
    if stride < 1 or padding < 0:
        raise ValidationError("conv2d: need stride >= 1 and padding >= 0")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wdt + 2 * padding - kw) // stride + 1
    if h + 2 * padding < kh or wdt + 2 * padding < kw:
        raise ValidationError(
            f"conv2d: kernel ({kh}, {kw}) larger than padded input "
            f"({h + 2 * padding}, {wdt + 2 * padding})"
        )
    return oh, ow


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Sliding windows of x [N, C, H, W] as a [N*OH*OW, C*kh*kw] matrix."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    view = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow = view.shape[:4]
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)


def _conv_fwd(
    x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int, padding: int
):
    """Returns (out [N, O, OH, OW], cols) with cols saved for the backward pass."""
    n = x.shape[0]
    co, _, kh, kw = w.shape
    oh, ow = _conv_shapes(x.shape, w.shape, stride, padding)
    cols = _im2col(x, kh, kw, stride, padding)
    out = cols @ w.reshape(co, -1).T
    if b is not None:
        out = out + b
    # transposed view; consumers (relu, im2col, reshape) copy as needed
    out = out.reshape(n, oh, ow, co).transpose(0, 3, 1, 2)
    return out, cols


_COL2IM_INDEX_CACHE: dict[tuple, np.ndarray] = {}


def _col2im_index(c, hp, wp, kh, kw, stride, oh, ow) -> np.ndarray:
    """Per-sample flat scatter index: column layout (oh, ow, c, kh, kw) into
    an image of shape (c, hp, wp). Cached; the batch dim is offset at use."""
    key = (c, hp, wp, kh, kw, stride, oh, ow)
    idx = _COL2IM_INDEX_CACHE.get(key)
    if idx is None:
        ohi, owi, ci, ki, kj = np.meshgrid(
            np.arange(oh), np.arange(ow), np.arange(c),
            np.arange(kh), np.arange(kw), indexing="ij",
        )
        idx = ((ci * hp + (ohi * stride + ki)) * wp + (owi * stride + kj)).ravel()
        _COL2IM_INDEX_CACHE[key] = idx
    return idx


def _conv_bwd_x(
    grad_cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, padding: int
) -> np.ndarray:
    """Scatter column gradients back onto the (padded) input grid."""
    n, c, h, wdt = x_shape
    hp, wp = h + 2 * padding, wdt + 2 * padding
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    idx1 = _col2im_index(c, hp, wp, kh, kw, stride, oh, ow)
    per = c * hp * wp
    offsets = np.arange(n, dtype=np.int64) * per
    idx = (idx1[None, :] + offsets[:, None]).ravel()
    flat = np.bincount(idx, weights=grad_cols.ravel(), minlength=n * per)
    gxp = flat.reshape(n, c, hp, wp)
    if padding:
        return gxp[:, :, padding:-padding, padding:-padding]
    return gxp


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of x [C, H, W] or [N, C, H, W] with kernels
    w [O, C, kh, kw]; output spatial dims follow floor((H + 2p - kh)/s) + 1."""
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(b) if b is not None else None
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.data.ndim != 4:
        raise ValidationError(
            f"conv2d: need [N, C, H, W] input and [O, C, kh, kw] kernels, got "
            f"{x.data.shape} and {w.data.shape}"
        )
    if b is not None and b.data.shape != (w.data.shape[0],):
        raise ValidationError(f"conv2d: bias {b.data.shape} != ({w.data.shape[0]},)")
    out_data, cols = _conv_fwd(xd, w.data, None if b is None else b.data, stride, padding)
    if squeeze:
        out_data = out_data[0]
    co, _, kh, kw = w.data.shape

    def backward(g):
        g4 = g[None] if squeeze else g
        n, _, oh, ow = g4.shape
        gmat = g4.transpose(0, 2, 3, 1).reshape(n * oh * ow, co)
        if w.requires_grad:
            w._accum((gmat.T @ cols).reshape(w.data.shape))
        if b is not None and b.requires_grad:
            b._accum(gmat.sum(axis=0))
        if x.requires_grad:
            grad_cols = gmat @ w.data.reshape(co, -1)
            gx = _conv_bwd_x(grad_cols, xd.shape, kh, kw, stride, padding)
            x._accum(gx[0] if squeeze else gx)

    parents = (x, w) if b is None else (x, w, b)
    return _node(out_data, parents, backward)


# -- optimizer -------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments and hyperparameters; buffers are allocated on first use."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, in place on each param's data.

    params are Tensors, grads same-shaped arrays aligned with them.
    """
    params = list(params)
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    if len(params) != len(grads):
        raise ValidationError("params and grads must align")
    if state.m is None:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.data.shape != g.shape or p.data.shape != m.shape:
            raise ValidationError("adam_step: shape mismatch with optimizer state")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
