"""A small reverse-mode autodiff over dense float64 matrices, plus Adam.

Every op returns a new :class:`Tensor` that remembers its inputs and a
closure mapping the output gradient to input gradients. :func:`backward`
walks that graph in reverse topological order.

Shapes are strict: operands must match exactly, with one exception, a
``(1, m)`` row that :func:`add` and :func:`mul` apply to every row of an
``(n, m)`` matrix (biases and layer-norm gains).
"""

from __future__ import annotations

import contextlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "ShapeError", "Tensor", "ParamStore", "AdamState", "CheckpointFormatError",
    "tensor", "constant", "no_grad", "backward",
    "matmul", "transpose", "add", "mul", "scale", "sum_all", "concat_rows", "concat_cols",
    "slice_cols", "relu", "softmax_rows", "log_softmax_rows", "layer_norm_rows", "dropout",
    "gather_rows", "take_cols", "bucket_cols", "row_outer", "cross_entropy",
    "adam_step", "save_params", "load_params", "params_to_bytes", "params_from_bytes",
]


class ShapeError(ValueError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording, e.g. for inference."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad, name)


def constant(data) -> Tensor:
    return Tensor(data, False)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_2d(op: str, *ts: Tensor) -> None:
    for t in ts:
        if t.data.ndim != 2:
            raise ShapeError(f"{op}: expected 2-d operands, got shape {t.shape}")


def _row_broadcast_ok(a: Tensor, b: Tensor) -> bool:
    return a.shape == b.shape or (
        a.data.ndim == 2 and b.data.ndim == 2 and b.shape[0] == 1 and b.shape[1] == a.shape[1]
    )


# ---------------------------------------------------------------------------
# ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    _check_2d("transpose", a)
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a ``(1, m)`` row added to each row of ``a``."""
    if not _row_broadcast_ok(a, b):
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    broadcast = a.shape != b.shape

    def bw(g):
        return g, (g.sum(axis=0, keepdims=True) if broadcast else g)

    return _result(a.data + b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product, with the same row broadcast as :func:`add`."""
    if not _row_broadcast_ok(a, b):
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    broadcast = a.shape != b.shape

    def bw(g):
        gb = g * a.data
        return g * b.data, (gb.sum(axis=0, keepdims=True) if broadcast else gb)

    return _result(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    return _result(np.asarray(a.data.sum()), (a,), lambda g: (np.full(a.shape, float(g)),))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    _check_2d("concat_rows", *parts)
    widths = {p.shape[1] for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: column counts differ: {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def bw(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=0), parts, bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    _check_2d("concat_cols", *parts)
    heights = {p.shape[0] for p in parts}
    if len(heights) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=1), parts, bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    _check_2d("slice_cols", a)
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"slice_cols: bad range [{start}, {stop}) for shape {a.shape}")

    def bw(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        return (full,)

    return _result(a.data[:, start:stop].copy(), (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def softmax_rows(a: Tensor) -> Tensor:
    _check_2d("softmax_rows", a)
    s = _softmax(a.data)

    def bw(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _result(s, (a,), bw)


def log_softmax_rows(a: Tensor) -> Tensor:
    _check_2d("log_softmax_rows", a)
    x = a.data
    shifted = x - x.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)

    return _result(out, (a,), bw)


def layer_norm_rows(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean and unit variance (no affine part)."""
    _check_2d("layer_norm_rows", a)
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(x.var(axis=1, keepdims=True) + eps)
    y = (x - mu) * inv

    def bw(g):
        gm = g.mean(axis=1, keepdims=True)
        gym = (g * y).mean(axis=1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _result(y, (a,), bw)


def dropout(a: Tensor, p: float, seed) -> Tensor:
    """Inverted dropout with an explicit seed; ``p == 0`` returns ``a`` itself."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if p == 0.0:
        return a
    keep = (np.random.default_rng(seed).random(a.shape) >= p) / (1.0 - p)
    return _result(a.data * keep, (a,), lambda g: (g * keep,))


def gather_rows(table: Tensor, ids) -> Tensor:
    """Rows ``table[ids]``; repeated ids accumulate gradient."""
    _check_2d("gather_rows", table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or (ids.size and (ids.min() < 0 or ids.max() >= table.shape[0])):
        raise ShapeError(f"gather_rows: ids out of range for table of shape {table.shape}")

    def bw(g):
        full = np.zeros(table.shape)
        np.add.at(full, ids, g)
        return (full,)

    return _result(table.data[ids], (table,), bw)


def take_cols(a: Tensor, idx) -> Tensor:
    """``out[i, j] = a[i, idx[i, j]]`` for an integer index matrix ``idx``."""
    _check_2d("take_cols", a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[0] != a.shape[0] or idx.min() < 0 or idx.max() >= a.shape[1]:
        raise ShapeError(f"take_cols: index shape {idx.shape} incompatible with {a.shape}")
    rows = np.arange(a.shape[0])[:, None]

    def bw(g):
        full = np.zeros(a.shape)
        np.add.at(full, (np.broadcast_to(rows, idx.shape), idx), g)
        return (full,)

    return _result(a.data[rows, idx], (a,), bw)


def bucket_cols(a: Tensor, idx, width: int) -> Tensor:
    """``out[i, r] = sum of a[i, j] over j with idx[i, j] == r``; adjoint of :func:`take_cols`."""
    _check_2d("bucket_cols", a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != a.shape or idx.min() < 0 or idx.max() >= width:
        raise ShapeError(f"bucket_cols: index shape {idx.shape} incompatible with {a.shape}")
    rows = np.broadcast_to(np.arange(a.shape[0])[:, None], idx.shape)
    out = np.zeros((a.shape[0], width))
    np.add.at(out, (rows, idx), a.data)
    return _result(out, (a,), lambda g: (g[rows, idx],))


def row_outer(a: Tensor, b: Tensor) -> Tensor:
    """Per-row outer product flattened: ``out[i, p*q_b + q] = a[i, p] * b[i, q]``."""
    _check_2d("row_outer", a, b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"row_outer: row counts differ: {a.shape} vs {b.shape}")
    n, p = a.shape
    q = b.shape[1]
    out = (a.data[:, :, None] * b.data[:, None, :]).reshape(n, p * q)

    def bw(g):
        g3 = g.reshape(n, p, q)
        return (g3 * b.data[:, None, :]).sum(axis=2), (g3 * a.data[:, :, None]).sum(axis=1)

    return _result(out, (a, b), bw)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[row, target]``."""
    _check_2d("cross_entropy", logits)
    targets = np.asarray(targets, dtype=np.int64)
    n, k = logits.shape
    if targets.shape != (n,) or (n and (targets.min() < 0 or targets.max() >= k)):
        raise ShapeError(f"cross_entropy: targets of shape {targets.shape} invalid for logits {logits.shape}")
    x = logits.data
    shifted = x - x.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    value = -logp[rows, targets].mean()

    def bw(g):
        d = np.exp(logp)
        d[rows, targets] -= 1.0
        return (d * (float(g) / n),)

    return _result(np.asarray(value), (logits,), bw)


# ---------------------------------------------------------------------------
# backward

def backward(loss: Tensor, params: Mapping[str, Tensor] | "ParamStore" | None = None) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to named leaf tensors.

    With ``params`` given, the result covers exactly those names and
    parameters the loss does not reach get zero gradients. Otherwise it
    covers every named leaf reached.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                grads[id(node)] = g
                leaves[id(node)] = node
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    if params is not None:
        items = params.items()
        return {name: grads.get(id(t), np.zeros(t.shape)) for name, t in items}
    return {t.name: grads[k] for k, t in leaves.items() if t.name is not None}


# ---------------------------------------------------------------------------
# parameters and optimizer

class ParamStore:
    """Ordered mapping from dotted parameter path to a trainable tensor."""

    def __init__(self, tensors: Mapping[str, np.ndarray | Tensor] | None = None):
        self._tensors: dict[str, Tensor] = {}
        for name, value in (tensors or {}).items():
            self.add(name, value.data if isinstance(value, Tensor) else value)

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self):
        return iter(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self) -> list[str]:
        return list(self._tensors)

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def copy(self) -> "ParamStore":
        return ParamStore({k: t.data.copy() for k, t in self._tensors.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._tensors.items()}

    def equal(self, other: "ParamStore") -> bool:
        """Bit-exact equality of names, shapes and values."""
        if self.names() != other.names():
            return False
        return all(
            a.data.shape == b.data.shape and a.data.tobytes() == b.data.tobytes()
            for a, b in zip(self._tensors.values(), other._tensors.values())
        )


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamStore, grads: Mapping[str, np.ndarray],
              state: AdamState) -> tuple[ParamStore, AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    unknown = set(grads) - set(params)
    if unknown:
        raise KeyError(f"adam_step: gradients for unknown parameters {sorted(unknown)}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient shape {g.shape} != parameter {name!r} shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


# ---------------------------------------------------------------------------
# binary parameter file
#
# Layout, all integers little-endian:
#   magic b"DTPS" | u32 version | u32 count
#   per tensor: u32 name_len | name (utf-8) | u32 ndim | u32 dims[ndim] | f64 data (row-major, <f8)

MAGIC = b"DTPS"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def params_to_bytes(params: ParamStore) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", t.data.ndim))
        chunks.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def params_from_bytes(buf: bytes) -> ParamStore:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointFormatError(f"truncated parameter file at byte {pos} (need {n} more)")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointFormatError("bad magic bytes, not a parameter file")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported parameter file version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(bytes(take(8 * size)), dtype="<f8").reshape(shape)
        tensors[name] = data.astype(np.float64)
    if pos != len(view):
        raise CheckpointFormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return ParamStore(tensors)


def save_params(params: ParamStore, path: str | Path) -> None:
    Path(path).write_bytes(params_to_bytes(params))


def load_params(path: str | Path) -> ParamStore:
    return params_from_bytes(Path(path).read_bytes())
