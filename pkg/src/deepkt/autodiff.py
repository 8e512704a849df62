"""Dense-matrix reverse-mode autodiff engine.

Every tensor is a 2-D float64 matrix.  A fresh graph is built per batch and
discarded after the optimizer step; gradients accumulate across fan-out and
are zeroed inside ``adam_step``.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class IndexOutOfRangeError(IndexError):
    """A row id fell outside the table (ids are 1-based)."""


class GraphError(ValueError):
    """Backward called on a node that violates the graph contract."""


class Tensor:
    """A rows x cols float64 matrix node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward",
                 "_uid")

    _counter = 0

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"tensors are 2-D matrices, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = tuple(parents)
        self._backward = backward
        Tensor._counter += 1
        self._uid = Tensor._counter

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def item(self):
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def accumulate_grad(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    # operator sugar
    def __matmul__(self, other):
        return gemm(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    @property
    def T(self):
        return transpose(self)


def tensor(values, requires_grad=False):
    return Tensor(values, requires_grad=requires_grad)


def constant(values):
    return Tensor(values, requires_grad=False)


def _node(data, op, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, op=op, parents=parents,
                  backward=backward if req else None)


# ---------------------------------------------------------------------------
# primitive operations


def gemm(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeMismatchError(f"gemm: inner dims differ, {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g, out):
        a.accumulate_grad(g @ b.data.T)
        b.accumulate_grad(a.data.T @ g)

    return _node(out_data, "gemm", (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g, out):
        a.accumulate_grad(g.T)

    return _node(a.data.T, "transpose", (a,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1 x n bias row against an m x n matrix."""
    if a.shape == b.shape:
        pass
    elif b.rows == 1 and b.cols == a.cols:
        pass
    else:
        raise ShapeMismatchError(f"add: incompatible shapes {a.shape} + {b.shape}")
    out_data = a.data + b.data

    def backward(g, out):
        a.accumulate_grad(g)
        if b.shape == a.shape:
            b.accumulate_grad(g)
        else:
            b.accumulate_grad(g.sum(axis=0, keepdims=True))

    return _node(out_data, "add", (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g, out):
        a.accumulate_grad(-g)

    return _node(-a.data, "neg", (a,), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g, out):
        a.accumulate_grad(c * g)

    return _node(c * a.data, "scale", (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; b may also be an m x 1 column broadcast across a's columns."""
    if a.shape == b.shape or (b.rows == a.rows and b.cols == 1):
        out_data = a.data * b.data
    else:
        raise ShapeMismatchError(f"mul: incompatible shapes {a.shape} * {b.shape}")

    def backward(g, out):
        a.accumulate_grad(g * b.data)
        if b.shape == a.shape:
            b.accumulate_grad(g * a.data)
        else:
            b.accumulate_grad((g * a.data).sum(axis=1, keepdims=True))

    return _node(out_data, "mul", (a, b), backward)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        y = _sigmoid(x.data)

        def backward(g, out):
            x.accumulate_grad(g * out.data * (1.0 - out.data))

    elif kind == "tanh":
        y = np.tanh(x.data)

        def backward(g, out):
            x.accumulate_grad(g * (1.0 - out.data * out.data))

    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    return _node(y, kind, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g, out):
        dot = (g * out.data).sum(axis=1, keepdims=True)
        x.accumulate_grad(out.data * (g - dot))

    return _node(y, "softmax_rows", (x,), backward)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Stack rows of ``table`` selected by 1-based ids; backward scatter-adds."""
    idx = np.asarray(ids, dtype=np.int64).ravel()
    bad = (idx < 1) | (idx > table.rows)
    if bad.any():
        raise IndexOutOfRangeError(
            f"gather_rows: id {int(idx[bad][0])} outside [1, {table.rows}]")
    zero_based = idx - 1
    out_data = table.data[zero_based]

    def backward(g, out):
        if table.requires_grad:
            d = np.zeros_like(table.data)
            np.add.at(d, zero_based, g)
            table.accumulate_grad(d)

    return _node(out_data, "gather_rows", (table,), backward)


def concat_cols(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise ValueError("concat_cols needs at least one tensor")
    rows = tensors[0].rows
    for t in tensors[1:]:
        if t.rows != rows:
            raise ShapeMismatchError(
                f"concat_cols: row counts differ, {tensors[0].shape} vs {t.shape}")
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    seams = np.cumsum([t.cols for t in tensors])[:-1]

    def backward(g, out):
        for t, piece in zip(tensors, np.split(g, seams, axis=1)):
            t.accumulate_grad(piece)

    return _node(out_data, "concat_cols", tensors, backward)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    out_data = x.data[:, start:stop]

    def backward(g, out):
        d = np.zeros_like(x.data)
        d[:, start:stop] = g
        x.accumulate_grad(d)

    return _node(out_data, "slice_cols", (x,), backward)


def take_per_row(x: Tensor, col_ids) -> Tensor:
    """Pick one entry per row (0-based column index); returns an m x 1 tensor."""
    idx = np.asarray(col_ids, dtype=np.int64).ravel()
    if idx.shape[0] != x.rows:
        raise ShapeMismatchError(f"take_per_row: {idx.shape[0]} indices for {x.rows} rows")
    bad = (idx < 0) | (idx >= x.cols)
    if bad.any():
        raise IndexOutOfRangeError(
            f"take_per_row: column {int(idx[bad][0])} outside [0, {x.cols})")
    r = np.arange(x.rows)
    out_data = x.data[r, idx].reshape(-1, 1)

    def backward(g, out):
        d = np.zeros_like(x.data)
        d[r, idx] = g[:, 0]
        x.accumulate_grad(d)

    return _node(out_data, "take_per_row", (x,), backward)


def tile_rows(x: Tensor, reps: int) -> Tensor:
    """Stack ``reps`` vertical copies of x; backward sums over the copies."""
    out_data = np.tile(x.data, (reps, 1))

    def backward(g, out):
        x.accumulate_grad(g.reshape(reps, x.rows, x.cols).sum(axis=0))

    return _node(out_data, "tile_rows", (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g, out):
        x.accumulate_grad(np.full_like(x.data, g[0, 0]))

    return _node([[x.data.sum()]], "sum_all", (x,), backward)


def attention_read(mem: Tensor, w: Tensor) -> Tensor:
    """Weighted row combination of a batched memory.

    mem is (B*N) x d (B stacked N x d blocks), w is B x N; returns B x d where
    row b is sum_i w[b,i] * mem_block_b[i].
    """
    B, N = w.shape
    if mem.rows != B * N:
        raise ShapeMismatchError(f"attention_read: mem {mem.shape} vs weights {w.shape}")
    d = mem.cols
    m3 = mem.data.reshape(B, N, d)
    out_data = np.einsum("bn,bnd->bd", w.data, m3)

    def backward(g, out):
        mem.accumulate_grad((w.data[:, :, None] * g[:, None, :]).reshape(B * N, d))
        w.accumulate_grad(np.einsum("bnd,bd->bn", m3, g))

    return _node(out_data, "attention_read", (mem, w), backward)


def memory_write(mem: Tensor, w: Tensor, erase: Tensor, add_vec: Tensor) -> Tensor:
    """Gated erase-then-add update of a batched memory.

    Per batch row b and slot i:
        out[b,i] = mem[b,i] * (1 - w[b,i] * erase[b]) + w[b,i] * add_vec[b]
    """
    B, N = w.shape
    d = mem.cols
    if mem.rows != B * N or erase.shape != (B, d) or add_vec.shape != (B, d):
        raise ShapeMismatchError(
            f"memory_write: mem {mem.shape}, w {w.shape}, e {erase.shape}, a {add_vec.shape}")
    m3 = mem.data.reshape(B, N, d)
    w3 = w.data[:, :, None]
    keep = 1.0 - w3 * erase.data[:, None, :]
    out3 = m3 * keep + w3 * add_vec.data[:, None, :]

    def backward(g, out):
        g3 = g.reshape(B, N, d)
        mem.accumulate_grad((g3 * keep).reshape(B * N, d))
        w.accumulate_grad(
            (g3 * (add_vec.data[:, None, :] - m3 * erase.data[:, None, :])).sum(axis=2))
        erase.accumulate_grad(-(g3 * m3 * w3).sum(axis=1))
        add_vec.accumulate_grad((g3 * w3).sum(axis=1))

    return _node(out3.reshape(B * N, d), "memory_write", (mem, w, erase, add_vec), backward)


def binary_cross_entropy(p: Tensor, targets, mask, eps: float = 1e-7) -> Tensor:
    """Masked summed cross-entropy; probabilities are clamped to [eps, 1-eps]."""
    y = np.asarray(targets, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if y.shape != p.shape or m.shape != p.shape:
        raise ShapeMismatchError(
            f"binary_cross_entropy: p {p.shape}, targets {y.shape}, mask {m.shape}")
    pc = np.clip(p.data, eps, 1.0 - eps)
    loss = -(m * (y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))).sum()
    inside = (p.data > eps) & (p.data < 1.0 - eps)

    def backward(g, out):
        d = np.where(inside, m * (pc - y) / (pc * (1.0 - pc)), 0.0)
        p.accumulate_grad(g[0, 0] * d)

    return _node([[loss]], "bce", (p,), backward)


# ---------------------------------------------------------------------------
# backward traversal


def backward(loss: Tensor) -> None:
    """Reverse-topological sweep filling .grad on every requires_grad ancestor."""
    if loss.data.shape != (1, 1):
        raise GraphError(f"backward needs a 1x1 loss tensor, got shape {loss.shape}")
    nodes = []
    visited = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        nodes.append(node)
        stack.extend(node._parents)
    # run consumers before producers by descending creation id: inputs always
    # predate outputs, so this is a reverse topological order, and one whose
    # gradient accumulation order does not depend on unrelated graph suffixes
    nodes.sort(key=lambda n: n._uid, reverse=True)
    loss.accumulate_grad(np.ones((1, 1)))
    for node in nodes:
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad, node)


# ---------------------------------------------------------------------------
# optimization


def clip_global_norm(grads, threshold: float) -> float:
    """Scale all gradient arrays in place so their joint L2 norm is <= threshold.

    Returns the applied scale factor (1.0 when no clipping happened).
    """
    if threshold <= 0:
        raise ValueError(f"clip threshold must be positive, got {threshold}")
    total = 0.0
    for g in grads:
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm <= threshold or norm == 0.0:
        return 1.0
    factor = threshold / norm
    for g in grads:
        g *= factor
    return factor


class AdamState:
    """Per-parameter first/second moment accumulators for Adam."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = {}
        self.v = {}


def adam_step(params, state: AdamState, lr: float) -> None:
    """One Adam update over a stable-ordered parameter list; zeroes grads after.

    Parameters with no gradient this step are treated as having zero gradient
    (their moments still decay).
    """
    state.step_count += 1
    t = state.step_count
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for i, p in enumerate(params):
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if i not in state.m:
            state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / bias1
        v_hat = state.v[i] / bias2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None
