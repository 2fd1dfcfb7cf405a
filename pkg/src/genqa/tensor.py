"""Dense arrays with reverse-mode automatic differentiation on an explicit tape.

Every operation evaluates eagerly on a numpy buffer and, while a Tape is
active, appends a record holding a closure that routes the output gradient
back to the operation's inputs. ``backward`` replays the records in reverse
creation order; an output tensor is always created after its inputs, so that
order is a valid reverse topological order and each record is visited at most
once. The tape is cleared by ``backward`` so a fresh tape is used per batch.

Only float32/float64 tensors exist, and shapes are strict: the single
permitted broadcast is adding a length-n vector to the rows of an (m, n)
matrix (bias addition). Everything else raises ShapeError at the op that
caused it. Every op also verifies its output is finite, so NaN/Inf surfaces
immediately instead of poisoning a training run.

Tensors are treated as immutable once built; the only sanctioned mutation is
the optimizer's in-place parameter update between tapes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64
_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


def _require_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """Immutable dense array participating in tape-based differentiation."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        if arr.ndim > 0 and not arr.flags.c_contiguous:
            # ascontiguousarray would promote 0-d arrays to 1-d, so guard it.
            arr = np.ascontiguousarray(arr)
        _require_finite(arr, "tensor")
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return self.data.item()

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of operations, consumed once by ``backward``."""

    def __init__(self):
        self._records: list[tuple[Tensor, Callable]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPES.pop()

    def __len__(self) -> int:
        return len(self._records)


def _record(out: Tensor, backward_fn: Callable) -> None:
    if _ACTIVE_TAPES:
        _ACTIVE_TAPES[-1]._records.append((out, backward_fn))


def _make(data: np.ndarray, op: str) -> Tensor:
    _require_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    return out


def _acc(grads: dict, t: Tensor, g: np.ndarray) -> None:
    have = grads.get(t)
    if have is None:
        # Copy: the same array may be routed to several inputs (e.g. add),
        # and stored gradients are mutated in place by later accumulations.
        grads[t] = np.array(g, dtype=t.dtype)
    else:
        have += g


class Gradients:
    """Gradient of a scalar loss per tensor; absent tensors read as zero."""

    def __init__(self, by_tensor: dict):
        self._by_tensor = by_tensor

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._by_tensor.get(t)
        if g is None:
            return np.zeros(t.shape, dtype=t.dtype)
        return g

    def __contains__(self, t: Tensor) -> bool:
        return t in self._by_tensor


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse-accumulate d(loss)/d(tensor) for everything on the tape.

    The loss must be a scalar. Records are replayed newest-first; each
    record's output gradient is popped before its closure runs, so the
    closure sees the fully accumulated value. The tape is cleared afterwards.
    """
    if loss.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones(loss.shape, dtype=loss.dtype)}
    for out, backward_fn in reversed(tape._records):
        g = grads.pop(out, None)
        if g is not None:
            backward_fn(g, grads)
    tape._records.clear()
    return Gradients(grads)


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.dtype != b.dtype:
        raise TypeError(f"{op}: mixed dtypes {a.dtype.name} and {b.dtype.name}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts matrix + row-vector bias broadcast."""
    _binary_shapes(a, b, "add")
    if a.shape == b.shape:
        out = _make(a.data + b.data, "add")

        def bk(g, grads):
            _acc(grads, a, g)
            _acc(grads, b, g)

    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        out = _make(a.data + b.data, "add")

        def bk(g, grads):
            _acc(grads, a, g)
            _acc(grads, b, g.sum(axis=0))

    elif a.ndim == 1 and b.ndim == 2 and b.shape[1] == a.shape[0]:
        return add(b, a)
    else:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    _record(out, bk)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "sub")
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    out = _make(a.data - b.data, "sub")

    def bk(g, grads):
        _acc(grads, a, g)
        _acc(grads, b, -g)

    _record(out, bk)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "mul")
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out = _make(a.data * b.data, "mul")

    def bk(g, grads):
        _acc(grads, a, g * b.data)
        _acc(grads, b, g * a.data)

    _record(out, bk)
    return out


def neg(a: Tensor) -> Tensor:
    out = _make(-a.data, "neg")

    def bk(g, grads):
        _acc(grads, a, -g)

    _record(out, bk)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = _make(a.data * c, "scale")

    def bk(g, grads):
        _acc(grads, a, g * c)

    _record(out, bk)
    return out


def add_const(a: Tensor, c: float) -> Tensor:
    out = _make(a.data + c, "add_const")

    def bk(g, grads):
        _acc(grads, a, g)

    _record(out, bk)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    _binary_shapes(a, b, "matmul")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = _make(a.data @ b.data, "matmul")

    def bk(g, grads):
        _acc(grads, a, g @ b.data.T)
        _acc(grads, b, a.data.T @ g)

    _record(out, bk)
    return out


def matvec(a: Tensor, x: Tensor) -> Tensor:
    """(m, n) matrix times length-n vector -> length-m vector."""
    _binary_shapes(a, x, "matvec")
    if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {a.shape} and {x.shape}")
    out = _make(a.data @ x.data, "matvec")

    def bk(g, grads):
        _acc(grads, a, np.outer(g, x.data))
        _acc(grads, x, a.data.T @ g)

    _record(out, bk)
    return out


def vecmat(x: Tensor, a: Tensor) -> Tensor:
    """Length-n vector times (n, m) matrix -> length-m vector."""
    _binary_shapes(x, a, "vecmat")
    if x.ndim != 1 or a.ndim != 2 or x.shape[0] != a.shape[0]:
        raise ShapeError(f"vecmat: incompatible shapes {x.shape} and {a.shape}")
    out = _make(x.data @ a.data, "vecmat")

    def bk(g, grads):
        _acc(grads, x, a.data @ g)
        _acc(grads, a, np.outer(x.data, g))

    _record(out, bk)
    return out


def dot(x: Tensor, y: Tensor) -> Tensor:
    _binary_shapes(x, y, "dot")
    if x.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"dot: incompatible shapes {x.shape} and {y.shape}")
    out = _make(np.asarray(x.data @ y.data), "dot")

    def bk(g, grads):
        _acc(grads, x, g * y.data)
        _acc(grads, y, g * x.data)

    _record(out, bk)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) <= 1, so neither branch can overflow.
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def sigmoid(a: Tensor) -> Tensor:
    out = _make(_sigmoid(a.data), "sigmoid")

    def bk(g, grads):
        _acc(grads, a, g * out.data * (1.0 - out.data))

    _record(out, bk)
    return out


def tanh(a: Tensor) -> Tensor:
    out = _make(np.tanh(a.data), "tanh")

    def bk(g, grads):
        _acc(grads, a, g * (1.0 - out.data * out.data))

    _record(out, bk)
    return out


def relu(a: Tensor) -> Tensor:
    out = _make(np.maximum(a.data, 0.0), "relu")

    def bk(g, grads):
        _acc(grads, a, g * (a.data > 0))

    _record(out, bk)
    return out


_ELEMENTWISE = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def elementwise(name: str, a: Tensor) -> Tensor:
    """Apply one of the supported pointwise nonlinearities by name."""
    try:
        fn = _ELEMENTWISE[name]
    except KeyError:
        raise ValueError(f"unknown elementwise function {name!r}") from None
    return fn(a)


def exp(a: Tensor) -> Tensor:
    out = _make(np.exp(a.data), "exp")

    def bk(g, grads):
        _acc(grads, a, g * out.data)

    _record(out, bk)
    return out


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    out = _make(data, "log")

    def bk(g, grads):
        _acc(grads, a, g / a.data)

    _record(out, bk)
    return out


def softmax(a: Tensor) -> Tensor:
    """Stable softmax of a vector (max-subtracted before exponentiation)."""
    if a.ndim != 1 or a.size == 0:
        raise ShapeError(f"softmax: need a non-empty vector, got shape {a.shape}")
    e = np.exp(a.data - a.data.max())
    out = _make(e / e.sum(), "softmax")

    def bk(g, grads):
        y = out.data
        _acc(grads, a, y * (g - np.dot(g, y)))

    _record(out, bk)
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise stable softmax of a matrix."""
    if a.ndim != 2 or a.shape[1] == 0:
        raise ShapeError(f"softmax_rows: need a matrix with columns, got {a.shape}")
    e = np.exp(a.data - a.data.max(axis=1, keepdims=True))
    out = _make(e / e.sum(axis=1, keepdims=True), "softmax_rows")

    def bk(g, grads):
        y = out.data
        _acc(grads, a, y * (g - (g * y).sum(axis=1, keepdims=True)))

    _record(out, bk)
    return out


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate vectors (axis 0) or matrices (axis 0 or 1)."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: no parts")
    ndim = parts[0].ndim
    if any(p.ndim != ndim for p in parts):
        raise ShapeError(f"concat: mixed ranks {[p.shape for p in parts]}")
    if ndim == 1:
        if axis != 0:
            raise ShapeError("concat: vectors only concatenate along axis 0")
    elif ndim == 2:
        if axis not in (0, 1):
            raise ShapeError(f"concat: bad axis {axis} for matrices")
        other = 1 - axis
        if any(p.shape[other] != parts[0].shape[other] for p in parts):
            raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}")
    else:
        raise ShapeError(f"concat: rank {ndim} unsupported")
    if len(parts) == 1:
        p = parts[0]
        out = _make(p.data.copy(), "concat")

        def bk_single(g, grads):
            _acc(grads, p, g)

        _record(out, bk_single)
        return out
    out = _make(np.concatenate([p.data for p in parts], axis=axis), "concat")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bk(g, grads):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            piece = g[lo:hi] if axis == 0 else g[:, lo:hi]
            _acc(grads, p, piece)

    _record(out, bk)
    return out


def stack(parts: Sequence[Tensor]) -> Tensor:
    """Stack scalars into a vector, or equal-length vectors into a matrix."""
    parts = list(parts)
    if not parts:
        raise ShapeError("stack: no parts")
    shape = parts[0].shape
    if any(p.shape != shape for p in parts):
        raise ShapeError(f"stack: incompatible shapes {[p.shape for p in parts]}")
    if len(shape) > 1:
        raise ShapeError(f"stack: rank {len(shape)} unsupported")
    out = _make(np.stack([p.data for p in parts]), "stack")

    def bk(g, grads):
        for i, p in enumerate(parts):
            _acc(grads, p, g[i])

    _record(out, bk)
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    out = _make(a.data.reshape(shape).copy(), "reshape")

    def bk(g, grads):
        _acc(grads, a, g.reshape(a.shape))

    _record(out, bk)
    return out


def take_rows(a: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather matrix rows by index; backward scatter-adds into the source."""
    if a.ndim != 2:
        raise ShapeError(f"take_rows: need a matrix, got {a.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    out = _make(a.data[idx], "take_rows")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        np.add.at(ga, idx, g)

    _record(out, bk)
    return out


def take(a: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather vector entries by index."""
    if a.ndim != 1:
        raise ShapeError(f"take: need a vector, got {a.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    out = _make(a.data[idx], "take")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        np.add.at(ga, idx, g)

    _record(out, bk)
    return out


def row(a: Tensor, i: int) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"row: need a matrix, got {a.shape}")
    out = _make(a.data[i].copy(), "row")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        ga[i] += g

    _record(out, bk)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"slice_rows: need a matrix, got {a.shape}")
    out = _make(a.data[start:stop].copy(), "slice_rows")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        ga[start:stop] += g

    _record(out, bk)
    return out


def get(a: Tensor, i: int) -> Tensor:
    """Scalar entry of a vector."""
    if a.ndim != 1:
        raise ShapeError(f"get: need a vector, got {a.shape}")
    out = _make(np.asarray(a.data[i]), "get")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        ga[i] += g

    _record(out, bk)
    return out


def get2(a: Tensor, i: int, j: int) -> Tensor:
    """Scalar entry of a matrix."""
    if a.ndim != 2:
        raise ShapeError(f"get2: need a matrix, got {a.shape}")
    out = _make(np.asarray(a.data[i, j]), "get2")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        ga[i, j] += g

    _record(out, bk)
    return out


def windows(a: Tensor, width: int) -> Tensor:
    """All contiguous row windows of a (T, d) matrix, flattened to rows.

    Output row i is a[i : i + width] reshaped to length width * d, so the
    result has shape (T - width + 1, width * d). Used for narrow "valid"
    convolutions: a follow-up matmul with a (width * d, f) filter bank
    evaluates every window position at once.
    """
    if a.ndim != 2:
        raise ShapeError(f"windows: need a matrix, got {a.shape}")
    t, d = a.shape
    if width < 1 or width > t:
        raise ShapeError(f"windows: width {width} invalid for {a.shape}")
    n = t - width + 1
    data = np.empty((n, width * d), dtype=a.dtype)
    for i in range(n):
        data[i] = a.data[i : i + width].reshape(-1)
    out = _make(data, "windows")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        for i in range(n):
            ga[i : i + width] += g[i].reshape(width, d)

    _record(out, bk)
    return out


def max_cols(a: Tensor) -> Tensor:
    """Per-column maximum over rows; ties send the gradient to the first row."""
    if a.ndim != 2 or a.shape[0] == 0:
        raise ShapeError(f"max_cols: need a non-empty matrix, got {a.shape}")
    arg = a.data.argmax(axis=0)
    out = _make(a.data[arg, np.arange(a.shape[1])], "max_cols")

    def bk(g, grads):
        ga = grads.get(a)
        if ga is None:
            ga = np.zeros(a.shape, dtype=a.dtype)
            grads[a] = ga
        ga[arg, np.arange(a.shape[1])] += g

    _record(out, bk)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = _make(np.asarray(a.data.sum()), "sum_all")

    def bk(g, grads):
        _acc(grads, a, np.broadcast_to(g, a.shape))

    _record(out, bk)
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out = _make(np.asarray(a.data.mean()), "mean_all")

    def bk(g, grads):
        _acc(grads, a, np.broadcast_to(g / n, a.shape))

    _record(out, bk)
    return out


def sum_sq(a: Tensor) -> Tensor:
    """Sum of squared entries (squared Frobenius norm)."""
    out = _make(np.asarray((a.data * a.data).sum()), "sum_sq")

    def bk(g, grads):
        _acc(grads, a, 2.0 * g * a.data)

    _record(out, bk)
    return out


def mean_rows(a: Tensor) -> Tensor:
    """Column means of a matrix: the average of its rows as one vector."""
    if a.ndim != 2 or a.shape[0] == 0:
        raise ShapeError(f"mean_rows: need a non-empty matrix, got {a.shape}")
    n = a.shape[0]
    out = _make(a.data.mean(axis=0), "mean_rows")

    def bk(g, grads):
        _acc(grads, a, np.tile(g / n, (n, 1)))

    _record(out, bk)
    return out


def tensor_sum(parts: Iterable[Tensor]) -> Tensor:
    """Sum a non-empty sequence of same-shape tensors."""
    it = iter(parts)
    try:
        total = next(it)
    except StopIteration:
        raise ShapeError("tensor_sum: no parts") from None
    for p in it:
        total = add(total, p)
    return total
