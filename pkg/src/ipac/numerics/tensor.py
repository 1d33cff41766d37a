"""A small reverse-mode autodiff engine over float64 numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and
a closure mapping the output gradient to parent gradients. ``backward`` walks
the graph once in reverse topological order.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from ..errors import GraphConsumed, NonFinite, NotScalar, ShapeMismatch

IGNORE_INDEX = -100

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label})"

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, op: str, parents: Sequence[Tensor], fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFinite(f"{op} produced a non-finite value")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._op = op
    out._consumed = False
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every leaf requiring it.

    A graph can be traversed once; a second call on the same loss raises
    :class:`GraphConsumed`.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphConsumed("backward already ran on this graph")
    loss._consumed = True
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node._backward = None
        node._parents = ()


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


# ---------------------------------------------------------------- basic ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0],
           f"matmul {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def fn(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _result(ad @ bd, "matmul", (a, b), fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a row vector added to every row of ``a``."""
    if a.shape == b.shape:
        return _result(a.data + b.data, "add", (a, b), lambda g: (g, g))
    _check(a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1],
           f"add {a.shape} + {b.shape}")
    return _result(a.data + b.data, "add", (a, b), lambda g: (g, g.sum(axis=0)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"sub {a.shape} - {b.shape}")
    return _result(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"mul {a.shape} * {b.shape}")
    ad, bd = a.data, b.data
    return _result(ad * bd, "mul", (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, "scale", (a,), lambda g: (g * c,))


def transpose(a: Tensor) -> Tensor:
    _check(a.data.ndim == 2, f"transpose needs 2-D input, got {a.shape}")
    return _result(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    return _result(data.copy(), "reshape", (a,), lambda g: (g.reshape(old),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _result(np.array(a.data.sum()), "sum", (a,), lambda g: (np.full(shape, float(g)),))


def row_softmax(a: Tensor) -> Tensor:
    _check(a.data.ndim == 2, f"row_softmax needs 2-D input, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _result(y, "row_softmax", (a,), fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    _check(x.data.ndim == 2 and gamma.shape == (x.shape[1],) and beta.shape == (x.shape[1],),
           f"layer_norm {x.shape} with gamma {gamma.shape}, beta {beta.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data

    def fn(g):
        gx = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(axis=1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=1, keepdims=True))
        return (gx,
                (g * xhat).sum(axis=0) if gamma.requires_grad else None,
                g.sum(axis=0) if beta.requires_grad else None)

    return _result(xhat * gd + beta.data, "layer_norm", (x, gamma, beta), fn)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _SQRT_HALF))

    def fn(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _result(x * cdf, "gelu", (a,), fn)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    idx = np.asarray(ids, dtype=np.int64)
    _check(table.data.ndim == 2 and idx.ndim == 1, f"embedding_lookup table {table.shape}, ids {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeMismatch(f"id out of range for table with {table.shape[0]} rows")
    shape = table.shape

    def fn(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _result(table.data[idx], "embedding_lookup", (table,), fn)


def mean_rows(a: Tensor, mask=None) -> Tensor:
    """Weighted mean of the rows selected by ``mask``; returns a ``1 x cols`` tensor."""
    _check(a.data.ndim == 2, f"mean_rows needs 2-D input, got {a.shape}")
    w = np.ones(a.shape[0]) if mask is None else np.asarray(mask, dtype=np.float64)
    _check(w.shape == (a.shape[0],), f"mask length {w.shape} for {a.shape[0]} rows")
    total = w.sum()
    if total <= 0:
        raise ShapeMismatch("mean_rows mask selects no rows")
    w = w / total
    return _result((w @ a.data)[None, :], "mean_rows", (a,), lambda g: (np.outer(w, g[0]),))


def dropout(a: Tensor, p: float, seed: int) -> Tensor:
    """Inverted dropout with a mask drawn from a Philox stream keyed by ``seed``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return a
    rng = np.random.Generator(np.random.Philox(key=int(seed) % (1 << 64)))
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return _result(a.data * keep, "dropout", (a,), lambda g: (g * keep,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    _check(len(tensors) > 0, "concat of nothing")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def fn(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))]

    return _result(data, "concat", tensors, fn)


def slice_(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    _check(0 <= start <= stop <= a.shape[axis], f"slice [{start}:{stop}] on axis {axis} of {a.shape}")
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape = a.shape

    def fn(g):
        out = np.zeros(shape)
        out[index] = g
        return (out,)

    return _result(a.data[index].copy(), "slice", (a,), fn)


def l2_normalize_rows(a: Tensor) -> Tensor:
    _check(a.data.ndim in (1, 2), f"l2_normalize_rows on {a.shape}")
    x = a.data if a.data.ndim == 2 else a.data[None, :]
    norm = np.sqrt((x * x).sum(axis=1, keepdims=True))
    if np.any(norm == 0.0):
        raise NonFinite("l2_normalize_rows of a zero row")
    y = x / norm
    flat = a.data.ndim == 1

    def fn(g):
        g2 = g[None, :] if flat else g
        gx = (g2 - y * (g2 * y).sum(axis=1, keepdims=True)) / norm
        return (gx[0] if flat else gx,)

    return _result(y[0] if flat else y, "l2_normalize_rows", (a,), fn)


def cross_entropy(logits: Tensor, targets, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Mean negative log-likelihood over rows whose target is not ``ignore_index``."""
    t = np.asarray(targets, dtype=np.int64)
    _check(logits.data.ndim == 2 and t.shape == (logits.shape[0],),
           f"cross_entropy logits {logits.shape}, targets {t.shape}")
    keep = t != ignore_index
    if np.any((t[keep] < 0) | (t[keep] >= logits.shape[1])):
        raise ShapeMismatch("target index out of range")
    n = int(keep.sum())
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logz
    rows = np.nonzero(keep)[0]
    loss = -logp[rows, t[rows]].sum() / n if n else 0.0

    def fn(g):
        out = np.zeros(logits.shape)
        if n:
            out[rows] = np.exp(logp[rows])
            out[rows, t[rows]] -= 1.0
            out *= float(g) / n
        return (out,)

    return _result(np.array(loss), "cross_entropy", (logits,), fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored as ``out x in``."""
    _check(x.data.ndim == 2 and weight.data.ndim == 2 and x.shape[1] == weight.shape[1],
           f"linear {x.shape} with weight {weight.shape}")
    xd, wd = x.data, weight.data

    def fn(g):
        return (g @ wd if x.requires_grad else None,
                g.T @ xd if weight.requires_grad else None,
                g.sum(axis=0) if bias is not None and bias.requires_grad else None)

    out = xd @ wd.T
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        _check(bias.shape == (weight.shape[0],), f"bias {bias.shape} for weight {weight.shape}")
        out = out + bias.data
        parents = (x, weight, bias)
    return _result(out, "linear", parents, fn)


def parameters_requiring_grad(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
