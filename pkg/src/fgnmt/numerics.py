"""Dense float64 tensors with tape-free reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad`` returns a new
tensor carrying references to its inputs and a closure mapping the output
gradient to input gradients.  :func:`backward` orders the reachable nodes
topologically and runs the closures in reverse.

The graph is rebuilt on every forward pass, so sequences of any length can be
processed without recompiling anything.  Recording can be suspended with
:func:`no_grad`, which is how decoding runs.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "Graph",
    "no_grad",
    "grad_enabled",
    "tensor",
    "matmul",
    "linear",
    "elementwise",
    "add",
    "sub",
    "mul",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "softmax_over_axis",
    "log_softmax",
    "tsum",
    "mean",
    "concat",
    "stack",
    "reshape",
    "transpose",
    "gather_columns",
    "backward",
    "grad_check",
    "grad_check_params",
]

_local = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def grad_enabled() -> bool:
    return getattr(_local, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Suspend graph recording for the current thread."""
    prev = grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation.

    Attributes:
        data: the values, always a float64 ``np.ndarray``.
        requires_grad: whether gradients flow into this tensor.
        grad: accumulated gradient for leaf tensors, ``None`` until the
            first backward pass reaches it.
    """

    __slots__ = ("data", "requires_grad", "grad", "parents", "backward_fn", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: BackwardFn | None = None
        self.op = "leaf"

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward_fn: BackwardFn,
        op: str = "custom",
    ) -> "Tensor":
        """Wrap ``data`` as the output of an operation on ``parents``.

        ``backward_fn`` receives the gradient w.r.t. the output and returns
        one gradient (or ``None``) per parent, in order.
        """
        out = cls(data)
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.parents = tuple(parents)
            out.backward_fn = backward_fn
            out.op = op
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{rg}, op={self.op})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor.from_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor.from_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data

    def bw(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return Tensor.from_op(ad * bd, (a, b), bw, "mul")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor.from_op(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free for large |v|
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return Tensor.from_op(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return Tensor.from_op(y, (x,), lambda g: (g * y,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor.from_op(np.log(xd), (x,), lambda g: (g / xd,), "log")


_ELEMENTWISE = {"add": add, "mul": mul, "sub": sub, "tanh": tanh, "sigmoid": sigmoid, "exp": exp}


def elementwise(op: str, *args) -> Tensor:
    """Apply a named pointwise operation (``add``, ``mul``, ``tanh``, ``sigmoid``...)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ------------------------------------------------------------ linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., k) and a 2-D ``b`` of shape (k, n)."""
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if ad.ndim == 1:
                gb = np.outer(ad, g)
            else:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return Tensor.from_op(ad @ bd, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w.T + b`` with ``w`` stored as (out, in)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd.T
    if b is not None:
        out = out + b.data

    def bw(g):
        gx = g @ wd if x.requires_grad else None
        g2 = g.reshape(-1, g.shape[-1])
        gw = g2.T @ xd.reshape(-1, xd.shape[-1]) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor.from_op(out, parents, bw, "linear")


# ------------------------------------------------------------------ softmax


def _check_finite(x: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{op}: non-finite input")


def softmax_over_axis(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax of every 1-D slice along ``axis``.

    ``mask`` (broadcastable to ``x``, 1 for real entries, 0 for padding) removes
    entries from the normalization; masked entries come out exactly zero.
    """
    if not -x.ndim <= axis < x.ndim:
        raise ContractError(f"softmax: axis {axis} out of range for rank {x.ndim}")
    xd = x.data
    _check_finite(xd, "softmax")
    if mask is None:
        shifted = xd - xd.max(axis=axis, keepdims=True)
        ex = np.exp(shifted)
    else:
        m = np.broadcast_to(mask, xd.shape).astype(bool)
        big = np.where(m, xd, -np.inf).max(axis=axis, keepdims=True)
        ex = np.where(m, np.exp(np.where(m, xd - big, 0.0)), 0.0)
    y = ex / ex.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(y, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    _check_finite(xd, "log_softmax")
    shifted = xd - xd.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(y, (x,), bw, "log_softmax")


# --------------------------------------------------------------- reductions


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor.from_op(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------- shape plumbing


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor.from_op(out, tensors, bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"stack: incompatible shapes {shapes}") from None

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor.from_op(out, tensors, bw, "stack")


def _is_fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def getitem(x: Tensor, idx) -> Tensor:
    shape = x.shape
    fancy = _is_fancy(idx)

    def bw(g):
        out = np.zeros(shape)
        if fancy:
            np.add.at(out, idx, g)
        else:
            out[idx] = g
        return (out,)

    return Tensor.from_op(x.data[idx], (x,), bw, "getitem")


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else tuple(np.argsort(axes))
    return Tensor.from_op(
        np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose"
    )


def gather_columns(table: Tensor, ids) -> Tensor:
    """Look up columns of an (E, V) table; result has shape ``ids.shape + (E,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    td = table.data

    def bw(g):
        gt = np.zeros((td.shape[1], td.shape[0]))
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, td.shape[0]))
        return (gt.T,)

    return Tensor.from_op(td.T[ids], (table,), bw, "gather")


# ----------------------------------------------------------------- backward


class Graph:
    """The executed operations reachable from a tensor, inputs first."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "Graph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack_: list[tuple[Tensor, bool]] = [(out, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack_.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack_.append((p, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def backward(loss: Tensor) -> Graph:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Gradients add onto whatever is already stored, so two calls without
    zeroing leave exactly twice the gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return Graph([])
    graph = Graph.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return graph


# --------------------------------------------------------------- checking


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    The error per coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    return grad_check_params(lambda: f(x), {"x": x}, eps=eps)


def grad_check_params(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Gradient check over a named parameter set.

    With ``coords_per_param`` set, only that many randomly chosen coordinates
    of each parameter are perturbed; otherwise every coordinate is.
    """
    for p in params.values():
        p.requires_grad = True
        p.zero_grad()
    backward(loss_fn())
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros(p.shape)) for k, p in params.items()}
    for p in params.values():
        p.zero_grad()
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            coords: Iterable[int]
            if coords_per_param is None or coords_per_param >= flat.size:
                coords = range(flat.size)
            else:
                coords = rng.choice(flat.size, size=coords_per_param, replace=False)
            a_flat = analytic[name].reshape(-1)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + eps
                fp = loss_fn().item()
                flat[i] = orig - eps
                fm = loss_fn().item()
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * eps)
                err = abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i]))
                worst = max(worst, err)
    return worst
