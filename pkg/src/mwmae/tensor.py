"""Dense float64 arrays with reverse-mode automatic differentiation.

Tensors wrap numpy arrays and record enough of the computation graph to
backpropagate from a scalar loss. Everything runs in float64: the gradient
checks in this package need the headroom, and nothing here is large enough
for precision/speed tradeoffs to matter.

Broadcasting is deliberately restricted: elementwise ops accept equal shapes
or a right-hand operand whose shape is a trailing suffix of the left's (the
bias-add pattern); matmul requires leading batch dims to agree exactly.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, DimensionError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Skip graph recording inside the block (pure inference)."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


class Tensor:
    """A float64 array plus an optional gradient and graph record.

    Leaves are created from data; interior nodes are produced by the ops in
    this module, each of which attaches a backward closure. `backward()` may
    only be called on scalars (size-1 tensors).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction helpers --

    @staticmethod
    def zeros(*shape: int, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @staticmethod
    def ones(*shape: int, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.ones(shape), requires_grad=requires_grad)

    # -- introspection --

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff --

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar, got shape {self.shape}"
            )
        order = _topo_order(self)
        flow: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in order:
            g = flow.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            if node._backward is not None:
                node._backward_into(g, flow)

    def _backward_into(self, g: np.ndarray, flow: dict[int, np.ndarray]) -> None:
        grads = self._backward(g)
        for parent, pg in zip(self._parents, grads):
            if pg is None:
                continue
            acc = flow.get(id(parent))
            if acc is None:
                # Copy: backward closures may hand the same array to several
                # parents, and slots get mutated in place on accumulation.
                flow[id(parent)] = np.array(pg)
            else:
                acc += pg

    # -- operator sugar (delegates to the module-level ops) --

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def sum(self, axis: int | None = None) -> "Tensor":
        return reduce_sum(self, axis)

    def mean(self, axis: int | None = None) -> "Tensor":
        return reduce_mean(self, axis)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reverse topological order of the graph reachable from `root`."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def _node(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], tuple],
) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    if _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _suffix_ok(a_shape: tuple[int, ...], b_shape: tuple[int, ...]) -> bool:
    return len(b_shape) <= len(a_shape) and a_shape[len(a_shape) - len(b_shape):] == b_shape


def _reduce_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original suffix shape."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


# -- elementwise --


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum. `b` may be a trailing-suffix shape of `a` (bias add)."""
    if a.shape != b.shape and not _suffix_ok(a.shape, b.shape):
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not align")
    data = a.data + b.data

    def backward(g):
        return g, _reduce_to_shape(g, b.shape)

    return _node(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product, same suffix rule as `add`."""
    if a.shape != b.shape and not _suffix_ok(a.shape, b.shape):
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not align")
    data = a.data * b.data

    def backward(g):
        return g * b.data, _reduce_to_shape(g * a.data, b.shape)

    return _node(data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a Python scalar."""
    s = float(s)
    data = a.data * s

    def backward(g):
        return (g * s,)

    return _node(data, (a,), backward)


# -- shape --


def reshape(a: Tensor, shape: Iterable[int]) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _node(data, (a,), backward)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    """Permute axes; default swaps the last two."""
    if axes is None:
        if a.data.ndim < 2:
            raise DimensionError("transpose: need at least 2 dims")
        axes = tuple(range(a.data.ndim - 2)) + (a.data.ndim - 1, a.data.ndim - 2)
    inv = np.argsort(axes)
    data = a.data.transpose(axes)

    def backward(g):
        return (g.transpose(inv),)

    return _node(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(tensors)
    if not parts:
        raise ContractError("concat: need at least one tensor")
    data = np.concatenate([t.data for t in parts], axis=axis)
    sizes = [t.data.shape[axis] for t in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, range(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return _node(data, parts, backward)


def concat_lastdim(tensors: Sequence[Tensor]) -> Tensor:
    return concat(tensors, axis=-1)


def split_lastdim(a: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Split along the last axis into chunks of the given widths."""
    if sum(sizes) != a.shape[-1]:
        raise DimensionError(
            f"split: sizes {list(sizes)} do not sum to last dim {a.shape[-1]}"
        )
    outs = []
    start = 0
    for width in sizes:
        sl = (Ellipsis, slice(start, start + width))
        lo = start

        def backward(g, lo=lo, width=width):
            full = np.zeros(a.shape)
            full[..., lo:lo + width] = g
            return (full,)

        outs.append(_node(a.data[sl], (a,), backward))
        start += width
    return outs


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows along axis 0; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)
    data = a.data[idx]

    def backward(g):
        full = np.zeros(a.shape)
        np.add.at(full, idx, g)
        return (full,)

    return _node(data, (a,), backward)


# -- matmul --


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; leading dims must agree exactly."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError("matmul: operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul: inner dims {a.shape[-1]} and {b.shape[-2]} disagree"
        )
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(
            f"matmul: leading dims {a.shape[:-2]} and {b.shape[:-2]} disagree"
        )
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return _node(data, (a, b), backward)


# -- reductions --


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    data = np.asarray(a.data.sum(axis=axis))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(data, (a,), backward)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis), 1.0 / count)


# -- nonlinearities --


def softmax_lastdim(a: Tensor) -> Tensor:
    """Stable softmax over the last axis (max-subtracted)."""
    if a.shape[-1] < 1:
        raise ContractError("softmax: last dim must be >= 1")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return _node(y, (a,), backward)


def log_softmax_lastdim(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = shifted - lse
    soft = np.exp(data)

    def backward(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _node(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    data = x * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return _node(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return (g * y * (1.0 - y),)

    return _node(y, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return (g * sig,)

    return _node(data, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    if gain.shape != a.shape[-1:] or bias.shape != a.shape[-1:]:
        raise DimensionError("layer_norm: gain/bias must match the last dim")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    data = xhat * gain.data + bias.data
    d = a.shape[-1]

    def backward(g):
        gg = g * gain.data
        dx = inv * (gg - gg.mean(axis=-1, keepdims=True)
                    - xhat * (gg * xhat).mean(axis=-1, keepdims=True))
        dgain = _reduce_to_shape(g * xhat, gain.shape)
        dbias = _reduce_to_shape(g, bias.shape)
        return dx, dgain, dbias

    return _node(data, (a, gain, bias), backward)


def dropout(a: Tensor, p: float, seed: int) -> Tensor:
    """Train-mode dropout with an explicit seed; scales kept values by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout: p must be in [0, 1), got {p}")
    if p == 0.0:
        return scale(a, 1.0)
    keep = np.random.default_rng(seed).random(a.shape) >= p
    factor = keep / (1.0 - p)
    data = a.data * factor

    def backward(g):
        return (g * factor,)

    return _node(data, (a,), backward)


# -- verification --


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    Returns max over elements of |analytic - numeric| / max(1, |numeric|).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"grad_check: eps must be in [1e-7, 1e-3], got {eps}")
    probe = Tensor(x.data.copy(), requires_grad=True)
    out = f(probe)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ContractError("grad_check: f must return a scalar Tensor")
    out.backward()
    analytic = probe.grad.copy() if probe.grad is not None else np.zeros_like(x.data)

    numeric = np.zeros_like(x.data)
    flat = x.data.copy().reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(flat.reshape(x.shape))).item()
        flat[i] = orig - eps
        lo = f(Tensor(flat.reshape(x.shape))).item()
        flat[i] = orig
        nflat[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(1.0, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def assert_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        from .errors import TrainingDivergedError
        raise TrainingDivergedError(f"non-finite values in {what}")
