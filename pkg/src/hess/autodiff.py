"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Design rules kept deliberately small:

* every value is a row-major ``numpy`` float64 array wrapped in :class:`Tensor`;
* shapes are explicit everywhere -- there is no broadcasting beyond
  scalar * tensor (``scale``);
* operations record onto the innermost *active* :class:`GraphTape` of the
  current thread; with no active tape they evaluate eagerly and leave no
  graph behind;
* a tape is built once and differentiated once (``backward`` consumes it).
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class TapeError(RuntimeError):
    """Tape misuse: backward twice, foreign/non-scalar loss, and friends."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


_LOCAL = threading.local()


def _tape_stack() -> list["GraphTape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> "GraphTape | None":
    """The innermost active tape of this thread, or ``None``."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 array plus a same-shape gradient buffer.

    Tensors created directly (model parameters, constants) are leaves; tensors
    returned by ops are interior nodes of whatever tape was active when the op
    ran.  ``grad`` is all zeros until a backward pass deposits into it.
    """

    def __init__(self, data, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray promotes 0-d to 1-d, which would break the
        # scalar-loss contract, so leave 0-d arrays alone.
        self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.grad = np.zeros_like(self.data)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # A little operator sugar so model code reads like the math.
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return NotImplemented

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class GraphTape:
    """Ordered record of operations, differentiated exactly once.

    Use as a context manager::

        with GraphTape() as tape:
            loss = ...            # ops record here
        tape.backward(loss)       # deposits into .grad of everything reached
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._consumed = False

    def __enter__(self) -> "GraphTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TapeError("tape context exited out of order")
        stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, node: _Node) -> None:
        if self._consumed:
            raise TapeError("cannot record onto a tape that has been differentiated")
        self._nodes.append(node)
        self._produced.add(id(node.output))

    def backward(self, loss: Tensor) -> None:
        """Reverse sweep from ``loss``, accumulating into ``.grad`` buffers.

        The loss must be a scalar produced on this tape.  The tape is consumed:
        a second call raises :class:`TapeError`.
        """
        if self._consumed:
            raise TapeError("tape already differentiated; record a fresh forward pass")
        if loss.data.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise TapeError("loss was not produced on this tape")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            grad_out = node.output.grad
            if not grad_out.any():
                continue
            grads_in = node.backward(grad_out)
            for tensor, g in zip(node.inputs, grads_in):
                if g is not None:
                    tensor.grad += g


def _emit(inputs: tuple[Tensor, ...], out_data: np.ndarray,
          backward: Callable[[np.ndarray], tuple]) -> Tensor:
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None:
        tape._record(_Node(inputs, out, backward))
    return out


def _require_2d(t: Tensor, op: str) -> None:
    if t.data.ndim != 2:
        raise ShapeError(f"{op} needs a 2-D tensor, got shape {t.shape}")


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d(a, "matmul")
    _require_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    a_data, b_data = a.data, b.data

    def backward(g):
        return g @ b_data.T, a_data.T @ g

    return _emit((a, b), a_data @ b_data, backward)


def transpose(a: Tensor) -> Tensor:
    _require_2d(a, "transpose")

    def backward(g):
        return (g.T.copy(),)

    return _emit((a,), a.data.T.copy(), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")

    def backward(g):
        return g, g

    return _emit((a, b), a.data + b.data, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")

    def backward(g):
        return g, -g

    return _emit((a, b), a.data - b.data, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    a_data, b_data = a.data, b.data

    def backward(g):
        return g * b_data, g * a_data

    return _emit((a, b), a_data * b_data, backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (c * g,)

    return _emit((a,), c * a.data, backward)


def affine(a: Tensor, k: float, c: float) -> Tensor:
    """Elementwise ``k * a + c`` with scalar constants."""
    k, c = float(k), float(c)

    def backward(g):
        return (k * g,)

    return _emit((a,), k * a.data + c, backward)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape

    def backward(g):
        return (np.full(shape, float(g)),)

    return _emit((a,), np.asarray(a.data.sum()), backward)


def row_sums(a: Tensor) -> Tensor:
    """Per-row sum of a 2-D tensor, returned as an (m, 1) column."""
    _require_2d(a, "row_sums")
    n_cols = a.shape[1]

    def backward(g):
        return (np.repeat(g, n_cols, axis=1),)

    return _emit((a,), a.data.sum(axis=1, keepdims=True), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out_data * out_data),)

    return _emit((a,), out_data, backward)


def softplus(a: Tensor) -> Tensor:
    """Numerically stable ``log(1 + exp(x))``."""
    x = a.data

    def backward(g):
        # d/dx log(1+e^x) = sigmoid(x); the tanh form is stable for large |x|
        return (g * 0.5 * (1.0 + np.tanh(0.5 * x)),)

    return _emit((a,), np.logaddexp(0.0, x), backward)


def log(a: Tensor) -> Tensor:
    x = a.data
    if (x <= 0.0).any():
        raise ValueError("log needs strictly positive entries")

    def backward(g):
        return (g / x,)

    return _emit((a,), np.log(x), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilised by the row max.

    Entries of ``-inf`` are legal (they produce exact zeros) as long as every
    row keeps at least one finite entry; NaNs and fully ``-inf`` rows raise.
    """
    _require_2d(a, "softmax_rows")
    x = a.data
    if np.isnan(x).any():
        raise ValueError("softmax_rows: NaN in input")
    row_max = x.max(axis=1, keepdims=True)
    if np.isneginf(row_max).any():
        raise ValueError("softmax_rows: a row has no finite entry")
    shifted = x - row_max
    # -inf - (-inf) never happens here; -inf - finite stays -inf and exps to 0
    e = np.exp(shifted)
    out_data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=1, keepdims=True)
        return (out_data * (g - inner),)

    return _emit((a,), out_data, backward)


def avg_pool_rows(a: Tensor, block: int) -> Tensor:
    """Mean-pool groups of ``block`` consecutive rows.

    A ragged tail shorter than ``block`` is averaged over its actual length,
    so pooling never pads with zeros.
    """
    _require_2d(a, "avg_pool_rows")
    if not isinstance(block, (int, np.integer)) or block < 1:
        raise ValueError(f"avg_pool_rows: block must be a positive int, got {block!r}")
    n_rows = a.shape[0]
    block = int(block)
    n_out = -(-n_rows // block)
    bounds = [(r * block, min(n_rows, (r + 1) * block)) for r in range(n_out)]
    out_data = np.stack([a.data[lo:hi].mean(axis=0) for lo, hi in bounds])

    def backward(g):
        grad = np.empty_like(a.data)
        for r, (lo, hi) in enumerate(bounds):
            grad[lo:hi] = g[r] / (hi - lo)
        return (grad,)

    return _emit((a,), out_data, backward)


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows by index; repeated indices accumulate gradient."""
    _require_2d(a, "take_rows")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("take_rows: indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError("take_rows: index out of range")
    shape = a.shape

    def backward(g):
        grad = np.zeros(shape)
        np.add.at(grad, idx, g)
        return (grad,)

    return _emit((a,), a.data[idx].copy(), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors side by side (same row count)."""
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_cols: need at least one tensor")
    for p in parts:
        _require_2d(p, "concat_cols")
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise ShapeError("concat_cols: row counts differ")
    widths = [p.shape[1] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(widths)])

    def backward(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]].copy() for i in range(len(parts)))

    return _emit(parts, np.hstack([p.data for p in parts]), backward)


def stop_gradient(a: Tensor) -> Tensor:
    """Identity in value; blocks all gradient flow into ``a``."""

    def backward(g):
        return (None,)

    return _emit((a,), a.data.copy(), backward)
