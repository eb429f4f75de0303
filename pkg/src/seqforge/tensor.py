"""Dense tensors with reverse-mode automatic differentiation on a tape.

A Graph is an append-only tape of operation records. Insertion order is
the topological order, so backward() simply replays the tape once in
reverse, accumulating gradients into every tensor that requires them.

Training graphs use float32; gradient-oracle tests build float64 graphs
because central finite differences are unreliable at 32 bit.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Graph",
    "Tensor",
    "add",
    "add_const",
    "concat",
    "dropout",
    "embedding_lookup",
    "gather_rows",
    "gelu",
    "layer_norm",
    "log_softmax",
    "matmul",
    "mean_all",
    "mul",
    "scale",
    "slice_axis",
    "softmax",
    "sum_all",
    "transpose",
]

# tanh-approximation GELU constants
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Tensor:
    """A node value on a Graph: data plus an optional gradient slot."""

    __slots__ = ("graph", "data", "grad", "requires_grad", "node_id")

    def __init__(self, graph: "Graph", data: np.ndarray, requires_grad: bool, node_id: int):
        self.graph = graph
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, node={self.node_id}, grad={self.requires_grad})"


class _Record:
    """One tape entry: op kind, input node ids, output node id, backward."""

    __slots__ = ("op", "inputs", "out", "backward")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], out: Tensor,
                 backward: Callable[[np.ndarray], None] | None):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.backward = backward

    @property
    def input_ids(self) -> tuple[int, ...]:
        return tuple(t.node_id for t in self.inputs)


class Graph:
    """Append-only autodiff tape confined to one thread of execution."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.nodes: list[_Record] = []

    def leaf(self, data, requires_grad: bool = False) -> Tensor:
        arr = np.asarray(data, dtype=self.dtype)
        t = Tensor(self, arr, requires_grad, len(self.nodes))
        self.nodes.append(_Record("leaf", (), t, None))
        return t

    def _emit(self, op: str, inputs: tuple[Tensor, ...], data: np.ndarray,
              backward: Callable[[np.ndarray], None] | None) -> Tensor:
        for t in inputs:
            if t.graph is not self:
                raise ValueError(f"{op}: input tensor belongs to a different graph")
        requires = any(t.requires_grad for t in inputs)
        out = Tensor(self, data, requires, len(self.nodes))
        self.nodes.append(_Record(op, inputs, out, backward if requires else None))
        return out

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(node) into .grad for every contributing node."""
        if loss.graph is not self:
            raise ValueError("loss tensor belongs to a different graph")
        if loss.data.shape != ():
            raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones((), dtype=self.dtype)
        for rec in reversed(self.nodes):
            if rec.backward is None or rec.out.grad is None:
                continue
            rec.backward(rec.out.grad)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b for equal shapes, or a (…, n) plus a bias vector b of shape (n,)."""
    if a.shape == b.shape:
        def bw(g):
            _accum(a, g)
            _accum(b, g)
    elif b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        lead = tuple(range(a.data.ndim - 1))

        def bw(g):
            _accum(a, g)
            _accum(b, g.sum(axis=lead))
    else:
        raise ValueError(f"add: incompatible shapes {a.shape} + {b.shape}")
    return a.graph._emit("add", (a, b), a.data + b.data, bw)


def add_const(a: Tensor, c) -> Tensor:
    """Add a constant array (e.g. an additive attention mask); must not grow a."""
    c = np.asarray(c, dtype=a.graph.dtype)
    out = a.data + c
    if out.shape != a.shape:
        raise ValueError(f"add_const: constant {c.shape} broadcasts {a.shape} to {out.shape}")

    def bw(g):
        _accum(a, g)
    return a.graph._emit("add_const", (a,), out, bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} * {b.shape}")

    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)
    return a.graph._emit("mul", (a, b), a.data * b.data, bw)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def bw(g):
        _accum(a, g * s)
    return a.graph._emit("scale", (a,), a.data * a.graph.dtype.type(s), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose: expected a matrix, got shape {a.shape}")

    def bw(g):
        _accum(a, g.T)
    return a.graph._emit("transpose", (a,), np.ascontiguousarray(a.data.T), bw)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ValueError("concat: no tensors given")
    sizes = [t.shape[axis] for t in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])
    data = np.concatenate([t.data for t in parts], axis=axis)
    return parts[0].graph._emit("concat", tuple(parts), data, bw)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    n = a.shape[axis]
    if not (0 <= start < stop <= n):
        raise ValueError(f"slice_axis: [{start}:{stop}] out of bounds for axis {axis} of {a.shape}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def bw(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[idx] += g
    return a.graph._emit("slice", (a,), np.ascontiguousarray(a.data[idx]), bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, np.broadcast_to(g, a.shape).copy() if a.shape else g)
    return a.graph._emit("sum", (a,), a.data.sum(), bw)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; a fully masked (all -inf) slice yields
    a uniform distribution instead of NaN, with zero gradient there."""
    d = x.data
    m = np.max(d, axis=axis, keepdims=True)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(d - safe_m)
    s = e.sum(axis=axis, keepdims=True)
    dead = s == 0.0
    n = d.shape[axis]
    y = np.where(dead, np.asarray(1.0 / n, dtype=d.dtype), e / np.where(dead, 1.0, s))

    def bw(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        gx = y * (g - inner)
        if dead.any():
            gx = np.where(dead, 0.0, gx)
        _accum(x, gx)
    return x.graph._emit("softmax", (x,), y, bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    d = x.data
    m = np.max(d, axis=axis, keepdims=True)
    z = d - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def bw(g):
        _accum(x, g - np.exp(y) * g.sum(axis=axis, keepdims=True))
    return x.graph._emit("log_softmax", (x,), y, bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1 (eps inside the sqrt),
    then apply the elementwise affine map gain * x + bias."""
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ValueError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} do not match last dim {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    y = xhat * gain.data + bias.data
    lead = tuple(range(x.data.ndim - 1))

    def bw(g):
        _accum(gain, (g * xhat).sum(axis=lead))
        _accum(bias, g.sum(axis=lead))
        gh = g * gain.data
        gx = inv_std * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        _accum(x, gx)
    return x.graph._emit("layer_norm", (x, gain, bias), y, bw)


def gelu(x: Tensor) -> Tensor:
    """GELU via the tanh approximation (closed-form derivative)."""
    d = x.data
    u = _GELU_C * (d + _GELU_A * d ** 3)
    t = np.tanh(u)
    y = 0.5 * d * (1.0 + t)

    def bw(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * d * d)
        _accum(x, g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * du))
    return x.graph._emit("gelu", (x,), y, bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0 (adds no tape node)."""
    if p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p={p} outside [0, 1)")
    keep = (rng.random(x.shape) >= p).astype(x.graph.dtype.type) / (1.0 - p)

    def bw(g):
        _accum(x, g * keep)
    return x.graph._emit("dropout", (x,), x.data * keep, bw)


# ---------------------------------------------------------------------------
# matrix and indexing ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} x {b.shape}")

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)
    return a.graph._emit("matmul", (a, b), a.data @ b.data, bw)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of a (rows, dim) table; ids is a 1-D integer sequence."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError(f"embedding_lookup: ids must be 1-D, got shape {ids.shape}")
    rows = table.shape[0]
    bad = (ids < 0) | (ids >= rows)
    if bad.any():
        offender = int(ids[bad][0])
        raise IndexError(f"embedding_lookup: id {offender} out of range for table with {rows} rows")

    def bw(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)
    return table.graph._emit("embedding", (table,), table.data[ids], bw)


def gather_rows(x: Tensor, ids) -> Tensor:
    """Pick x[i, ids[i]] for each row i, returning a vector of length rows."""
    ids = np.asarray(ids, dtype=np.int64)
    m, n = x.shape
    if ids.shape != (m,):
        raise ValueError(f"gather_rows: need {m} ids, got shape {ids.shape}")
    bad = (ids < 0) | (ids >= n)
    if bad.any():
        raise IndexError(f"gather_rows: id {int(ids[bad][0])} out of range for {n} columns")
    rows = np.arange(m)

    def bw(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, (rows, ids), g)
    return x.graph._emit("gather_rows", (x,), x.data[rows, ids], bw)
