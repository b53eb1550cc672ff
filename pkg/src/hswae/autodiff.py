"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every differentiable operation records a :class:`TapeNode` on its output when
any input tracks gradients. :func:`backward` collects the nodes reachable from
a scalar loss and replays them in reverse creation order, accumulating
gradients into the ``grad`` field of leaf tensors.

Broadcasting is deliberately narrow: equal shapes, scalar operands, a
trailing-shape operand broadcast over the leading batch axis, and a
``(B, 1)`` column against a ``(B, F)`` matrix.
"""
from __future__ import annotations

import contextlib
import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _accel

__all__ = [
    "Tensor",
    "TapeNode",
    "ShapeError",
    "NonFiniteError",
    "GradCheckReport",
    "as_tensor",
    "no_grad",
    "backward",
    "zero_grads",
    "grad_check",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "matmul",
    "linear",
    "conv2d",
    "conv_transpose2d",
    "relu",
    "leaky_relu",
    "sigmoid",
    "tanh",
    "batch_norm",
    "reshape",
    "flatten",
    "concat",
    "mean",
    "sum",
    "l2_norm",
    "mse_loss",
    "bce_loss",
]

BCE_CLAMP = 1e-7


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's shape rule."""


class NonFiniteError(FloatingPointError):
    """A NaN or infinity reached an operation."""


_state = threading.local()
_seq = itertools.count()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Suspend tape recording on the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@dataclass(eq=False)
class TapeNode:
    op_kind: str
    inputs: tuple
    backward_fn: Callable[[np.ndarray], tuple]
    saved: dict = field(default_factory=dict)
    seq: int = field(default_factory=lambda: next(_seq))


class Tensor:
    """Dense real array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "node", "tag", "name")

    def __init__(self, data, requires_grad: bool = False, *, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: TapeNode | None = None
        self.tag: str | None = None
        self.name = name

    @property
    def shape(self) -> tuple:
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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        out = Tensor(self.data)
        out.tag = self.tag
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / other)
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # plain numbers adopt the dtype of the tensor operand
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(b, dtype=a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(a, dtype=b.dtype), b
    return as_tensor(a), as_tensor(b)


def _check_finite(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        d = t.data
        # one reduction is cheaper than isfinite over the array; overflow in the sum falls through to the exact test
        if not np.isfinite(d.sum()) and not np.isfinite(d).all():
            raise NonFiniteError(f"{op}: non-finite value in input of shape {t.shape}")


def _result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn, **saved) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op, tuple(inputs), backward_fn, saved)
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers
# ---------------------------------------------------------------------------


def _is_scalar(shape) -> bool:
    return len(shape) == 0 or int(np.prod(shape)) == 1 and len(shape) <= 1


def _broadcast_ok(a: tuple, b: tuple) -> bool:
    if a == b or _is_scalar(a) or _is_scalar(b):
        return True
    if len(a) > len(b) and a[1:] == b or len(b) > len(a) and b[1:] == a:
        return True
    if len(a) == 2 and len(b) == 2 and a[0] == b[0] and (a[1] == 1 or b[1] == 1):
        return True
    return False


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)
    _check_finite("add", a, b)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("subtract", a, b)
    _check_finite("subtract", a, b)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _result("subtract", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("multiply", a, b)
    _check_finite("multiply", a, b)

    def bw(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _result("multiply", a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("divide", a, b)
    _check_finite("divide", a, b)
    out = a.data / b.data

    def bw(g):
        ga = g / b.data
        return _reduce_to(ga, a.shape), _reduce_to(-ga * out, b.shape)

    return _result("divide", out, (a, b), bw)


def scale(a, k: float) -> Tensor:
    a = as_tensor(a)
    _check_finite("scale", a)
    k = float(k)

    def bw(g):
        return (g * k,)

    return _result("scale", a.data * a.dtype.type(k), (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra and convolution
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    _check_finite("matmul", a, b)

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _result("matmul", a.data @ b.data, (a, b), bw)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def _conv_geometry(op: str, x: Tensor, w: Tensor, in_axis: int) -> None:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"{op}: expected 4-axis input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[in_axis]:
        raise ShapeError(f"{op}: input channels of {x.shape} do not match kernel {w.shape}")


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of x (N, Cin, H, W) with weight (Cout, Cin, kh, kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    _conv_geometry("conv2d", x, weight, 1)
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: invalid stride={stride} pad={pad}")
    n, _, h, w = x.shape
    cout, cin, kh, kw = weight.shape
    oh = _accel.conv_out_size(h, kh, stride, pad)
    ow = _accel.conv_out_size(w, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {cout} output channels")
        inputs.append(bias)
    _check_finite("conv2d", *inputs)

    cols = _accel.im2col(x.data, kh, kw, stride, pad)
    wm = weight.data.reshape(cout, -1)
    out = cols @ wm.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2))

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gx = _accel.col2im(g2 @ wm, x.shape, kh, kw, stride, pad) if x.requires_grad else None
        gw = (g2.T @ cols).reshape(weight.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return _result("conv2d", out, inputs, bw, stride=stride, pad=pad)


def conv_transpose2d(y, weight, bias=None, stride: int = 1, pad: int = 0, output_padding: int = 0) -> Tensor:
    """Transposed convolution; the adjoint of :func:`conv2d` for the same weight.

    ``weight`` is laid out (A, B, kh, kw): ``conv2d`` with it maps B channels
    to A, so here ``y`` has A channels and the output has B channels with size
    ``(H - 1) * stride - 2 * pad + kh + output_padding``.
    """
    y, weight = as_tensor(y), as_tensor(weight)
    _conv_geometry("conv_transpose2d", y, weight, 0)
    if stride < 1 or pad < 0 or not 0 <= output_padding < stride:
        raise ValueError(f"conv_transpose2d: invalid stride={stride} pad={pad} output_padding={output_padding}")
    n, a, hy, wy = y.shape
    _, b, kh, kw = weight.shape
    ho = (hy - 1) * stride - 2 * pad + kh + output_padding
    wo = (wy - 1) * stride - 2 * pad + kw + output_padding
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d: empty output for input {y.shape} and kernel {weight.shape}")
    inputs = [y, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (b,):
            raise ShapeError(f"conv_transpose2d: bias shape {bias.shape} does not match {b} output channels")
        inputs.append(bias)
    _check_finite("conv_transpose2d", *inputs)

    y2 = y.data.transpose(0, 2, 3, 1).reshape(-1, a)
    wm = weight.data.reshape(a, -1)
    out = _accel.col2im(y2 @ wm, (n, b, ho, wo), kh, kw, stride, pad)
    if bias is not None:
        out += bias.data.reshape(1, b, 1, 1)

    def bw(g):
        cols = _accel.im2col(np.ascontiguousarray(g), kh, kw, stride, pad)
        gy = None
        if y.requires_grad:
            gy = np.ascontiguousarray((cols @ wm.T).reshape(n, hy, wy, a).transpose(0, 3, 1, 2))
        gw = (y2.T @ cols).reshape(weight.shape)
        grads = [gy, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _result("conv_transpose2d", out, inputs, bw, stride=stride, pad=pad)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(x) -> Tensor:
    x = as_tensor(x)
    _check_finite("relu", x)
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return _result("relu", x.data * mask, (x,), bw)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    _check_finite("leaky_relu", x)
    factor = np.where(x.data > 0, 1.0, slope).astype(x.dtype)

    def bw(g):
        return (g * factor,)

    return _result("leaky_relu", x.data * factor, (x,), bw, slope=slope)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -v)).astype(v.dtype, copy=False)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    _check_finite("sigmoid", x)
    out = _sigmoid(x.data)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _result("sigmoid", out, (x,), bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    _check_finite("tanh", x)
    out = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _result("tanh", out, (x,), bw)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: Tensor,
    running_var: Tensor,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel batch normalization for (N, F) or (N, C, H, W) inputs.

    In training mode batch statistics normalize the input and, when
    ``update_stats`` is set, running statistics are updated in place with the
    unbiased batch variance. In eval mode the running statistics are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim not in (2, 4):
        raise ShapeError(f"batch_norm: expected 2- or 4-axis input, got {x.shape}")
    c = x.shape[1]
    for t, label in ((gamma, "gamma"), (beta, "beta"), (running_mean, "running_mean"), (running_var, "running_var")):
        if t.shape != (c,):
            raise ShapeError(f"batch_norm: {label} shape {t.shape} does not match input {x.shape}")
    _check_finite("batch_norm", x, gamma, beta)
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, c) if x.ndim == 2 else (1, c, 1, 1)
    m = x.size // c

    if training:
        if m < 2:
            raise ShapeError(f"batch_norm: training mode needs more than one value per channel, got {x.shape}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_stats:
            rm, rv = running_mean.data, running_var.data
            rm *= 1.0 - momentum
            rm += momentum * mu.astype(rm.dtype)
            rv *= 1.0 - momentum
            rv += momentum * (var * (m / (m - 1))).astype(rv.dtype)
    else:
        mu = running_mean.data.astype(x.dtype)
        var = running_var.data.astype(x.dtype)

    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def bw(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if training:
            gx = inv.reshape(bshape) / m * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            gx = dxhat * inv.reshape(bshape)
        return gx, gg, gb

    return _result("batch_norm", out, (x, gamma, beta), bw, training=training)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from exc

    def bw(g):
        return (g.reshape(x.shape),)

    return _result("reshape", out, (x,), bw)


def flatten(x) -> Tensor:
    x = as_tensor(x)
    return reshape(x, (x.shape[0], -1))


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} along axis {axis}")
    _check_finite("concat", *tensors)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    _check_finite("sum", x)
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _result("sum", out, (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def l2_norm(x, axis: int = 1, keepdims: bool = True) -> Tensor:
    x = as_tensor(x)
    _check_finite("l2_norm", x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * x.data / norm,)

    out = norm if keepdims else norm.squeeze(axis)
    return _result("l2_norm", out, (x,), bw)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def mse_loss(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} and target {target.shape} differ")
    _check_finite("mse_loss", pred, target)
    diff = pred.data - target.data
    n = diff.size

    def bw(g):
        gd = g * (2.0 / n) * diff
        return gd, -gd

    return _result("mse_loss", np.asarray(np.mean(diff * diff)), (pred, target), bw)


def bce_loss(prob, target) -> Tensor:
    """Mean binary cross-entropy from probabilities clamped to [1e-7, 1 - 1e-7]."""
    prob, target = as_tensor(prob), as_tensor(target)
    if target.size == 1 and prob.size != 1:
        target = Tensor(np.full(prob.shape, target.item(), dtype=prob.dtype))
    if prob.shape != target.shape:
        raise ShapeError(f"bce_loss: probabilities {prob.shape} and targets {target.shape} differ")
    _check_finite("bce_loss", prob, target)
    p = np.clip(prob.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    inside = (prob.data >= BCE_CLAMP) & (prob.data <= 1.0 - BCE_CLAMP)
    t = target.data
    n = p.size
    loss = -np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p))

    def bw(g):
        gp = g * (-(t / p) + (1.0 - t) / (1.0 - p)) / n * inside
        gt = g * (np.log1p(-p) - np.log(p)) / n
        return gp, gt

    return _result("bce_loss", np.asarray(loss), (prob, target), bw)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every tracked leaf."""
    if loss.size != 1:
        raise ValueError(f"backward: loss must have a single element, got shape {loss.shape}")
    if loss.node is None:
        raise ValueError("backward: tensor has no recorded tape")

    # one walk collects every reachable node and the tensor it produced
    out_of: dict[int, Tensor] = {}
    nodes: list[TapeNode] = []
    stack = [loss]
    while stack:
        t = stack.pop()
        node = t.node
        if node is None or id(node) in out_of:
            continue
        out_of[id(node)] = t
        nodes.append(node)
        stack.extend(node.inputs)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in sorted(nodes, key=lambda nd: nd.seq, reverse=True):
        out = out_of[id(node)]
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for inp, ig in zip(node.inputs, in_grads):
            if ig is None or not inp.requires_grad:
                continue
            key = id(inp)
            if inp.node is None:
                ig = np.asarray(ig, dtype=inp.dtype).reshape(inp.shape)
                if inp.grad is None:
                    inp.grad = ig.copy()
                else:
                    inp.grad += ig
            elif key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# finite-difference check
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def pass_(self) -> bool:
        return self.passed


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-3, tol: float = 1e-4, floor: float = 1e-6) -> GradCheckReport:
    """Compare backward gradients of scalar ``f`` at ``x`` with central differences in float64."""
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    x64 = np.array(as_tensor(x).data, dtype=np.float64)
    xt = Tensor(x64.copy(), requires_grad=True)
    out = f(xt)
    if out.size != 1:
        raise ValueError(f"grad_check: f must return a scalar, got shape {out.shape}")
    if out.node is not None:
        backward(out)
    analytic = xt.grad if xt.grad is not None else np.zeros_like(x64)

    numeric = np.zeros_like(x64)
    flat = numeric.reshape(-1)
    with no_grad():
        for i in range(x64.size):
            xp = x64.copy().reshape(-1)
            xm = x64.copy().reshape(-1)
            xp[i] += eps
            xm[i] -= eps
            fp = f(Tensor(xp.reshape(x64.shape))).item()
            fm = f(Tensor(xm.reshape(x64.shape))).item()
            flat[i] = (fp - fm) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    max_rel = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(max_rel, max_rel <= tol, analytic, numeric)
