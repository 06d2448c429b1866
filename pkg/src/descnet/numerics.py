"""Dense-tensor engine with recorded-operation reverse-mode differentiation.

Forward values are numpy arrays, float32 for training and float64 for
verification. While a ``Tape`` is active every primitive appends an adjoint
closure to it; ``backward`` replays the closures in exact reverse recording
order. Gradients accumulate additively, so fan-out sums naturally and a
repeated ``backward`` without zeroing accumulates by contract — callers zero
parameter gradients between optimizer steps. With no active tape the ops run
forward-only, which is the inference fast path.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "zeros",
    "add",
    "sub",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "softmax",
    "log",
    "clip",
    "concat",
    "stack",
    "select",
    "reshape",
    "embedding_gather",
    "max_over_axis",
    "mean_over_axis",
    "sum_over_axis",
    "backward",
    "grad_check",
    "adam_step",
    "sgd_step",
]


class ShapeError(ValueError):
    """Operand shapes or precisions incompatible with the requested op."""


class NonFiniteError(ArithmeticError):
    """NaN or infinity encountered where finite values are required."""


_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """Dense row-major float array, immutable by convention once created."""

    __slots__ = ("data", "grad", "needs_grad")

    def __init__(self, data, dtype=None, needs_grad: bool = False):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.needs_grad = needs_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def precision(self) -> str:
        return "f32" if self.data.dtype == np.float32 else "f64"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not scalar")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, {self.precision})"


class Parameter(Tensor):
    """Trainable tensor with a gradient slot and Adam moment accumulators."""

    __slots__ = ("name", "trainable", "m", "v")

    def __init__(self, data, name: str = "", trainable: bool = True, dtype=None):
        super().__init__(data, dtype=dtype, needs_grad=trainable)
        self.name = name
        self.trainable = trainable
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, {self.precision})"


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed primitives (a Wengert list)."""

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted: unbalanced enter/exit")

    def __len__(self) -> int:
        return len(self._records)


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    out.needs_grad = any(t.needs_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.needs_grad:
        tape._records.append((out, backward_fn))
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.needs_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after a numpy-style broadcast."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _coerce_pair(op: str, a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise ShapeError(f"{op}: at least one operand must be a Tensor")
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    elif not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"{op}: mixed precision {a.data.dtype} vs {b.data.dtype}")
    return a, b


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def add(a, b) -> Tensor:
    a, b = _coerce_pair("add", a, b)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from e

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _emit(data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair("sub", a, b)
    try:
        data = a.data - b.data
    except ValueError as e:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from e

    def backward_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _emit(data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair("mul", a, b)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from e

    def backward_fn(g):
        if a.needs_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.needs_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _emit(data, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` where ``a`` is 2-D or stacked (..., m, k) and ``b`` is (k, n)."""
    if a.data.ndim < 2 or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    data = a.data @ b.data

    def backward_fn(g):
        if a.needs_grad:
            _accum(a, g @ b.data.T)
        if b.needs_grad:
            flat_a = a.data.reshape(-1, a.shape[-1])
            flat_g = g.reshape(-1, g.shape[-1])
            _accum(b, flat_a.T @ flat_g)

    return _emit(data, (a, b), backward_fn)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward_fn(g):
        _accum(a, g * (1.0 - data * data))

    return _emit(data, (a,), backward_fn)


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function, computed branch-wise so large |z| cannot overflow."""
    z = a.data
    data = np.empty_like(z)
    pos = z >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    data[~pos] = ez / (1.0 + ez)

    def backward_fn(g):
        _accum(a, g * data * (1.0 - data))

    return _emit(data, (a,), backward_fn)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax with max-subtraction along ``axis`` for overflow safety."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accum(a, data * (g - inner))

    return _emit(data, (a,), backward_fn)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward_fn(g):
        _accum(a, g / a.data)

    return _emit(data, (a,), backward_fn)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only where the input was interior."""
    data = np.clip(a.data, lo, hi)
    passthrough = (a.data > lo) & (a.data < hi)

    def backward_fn(g):
        _accum(a, g * passthrough)

    return _emit(data, (a,), backward_fn)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty input list")
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) != 1:
        raise ShapeError(f"concat: mixed precisions {sorted(map(str, dtypes))}")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} on axis {axis}") from e
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _emit(data, tuple(tensors), backward_fn)


def stack(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("stack: empty input list")
    shapes = {t.shape for t in tensors}
    dtypes = {t.data.dtype for t in tensors}
    if len(shapes) != 1 or len(dtypes) != 1:
        raise ShapeError(f"stack: inputs must agree, got shapes {sorted(shapes)}")
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g):
        for i, t in enumerate(tensors):
            _accum(t, np.take(g, i, axis=axis))

    return _emit(data, tuple(tensors), backward_fn)


def select(a: Tensor, axis: int, index: int) -> Tensor:
    """Slice out ``index`` along ``axis``, dropping that axis."""
    if not 0 <= index < a.shape[axis]:
        raise ShapeError(f"select: index {index} out of range for shape {a.shape} axis {axis}")
    data = np.take(a.data, index, axis=axis)

    def backward_fn(g):
        if a.needs_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            sl = [slice(None)] * a.data.ndim
            sl[axis] = index
            a.grad[tuple(sl)] += g

    return _emit(data, (a,), backward_fn)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def backward_fn(g):
        _accum(a, g.reshape(a.shape))

    return _emit(data, (a,), backward_fn)


def embedding_gather(table: Tensor, ids: np.ndarray, padding_id: int | None = None) -> Tensor:
    """Row lookup ``table[ids]``. Rows equal to ``padding_id`` get no gradient."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError("embedding_gather: ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_gather: id out of range for table with {table.shape[0]} rows"
        )
    data = table.data[ids]

    def backward_fn(g):
        if table.needs_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            if padding_id is None:
                np.add.at(table.grad, ids, g)
            else:
                keep = ids != padding_id
                np.add.at(table.grad, ids[keep], g[keep])

    return _emit(data, (table,), backward_fn)


def max_over_axis(a: Tensor, axis: int) -> Tensor:
    """Maximum along ``axis``; ties share the upstream gradient equally."""
    data = a.data.max(axis=axis)

    def backward_fn(g):
        expanded = np.expand_dims(data, axis)
        mask = a.data == expanded
        counts = mask.sum(axis=axis, keepdims=True)
        _accum(a, mask * (np.expand_dims(g, axis) / counts))

    return _emit(data, (a,), backward_fn)


def sum_over_axis(a: Tensor, axis: int | None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward_fn(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _emit(data, (a,), backward_fn)


def mean_over_axis(a: Tensor, axis: int | None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    data = a.data.mean(axis=axis)

    def backward_fn(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / n, a.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g / n, axis), a.shape))

    return _emit(data, (a,), backward_fn)


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate gradients of everything ``loss`` depends on via ``tape``.

    Intermediate gradients are recomputed from scratch on every call;
    Parameter gradients (never op outputs) persist and accumulate.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    for out, _ in tape._records:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    for out, backward_fn in reversed(tape._records):
        if out.grad is not None:
            backward_fn(out.grad)


def grad_check(f: Callable[[], Tensor], params: Sequence[Parameter], epsilon: float = 1e-5) -> float:
    """Max relative error of tape gradients vs central differences.

    ``f`` must be a deterministic float64 scalar function closing over
    ``params``. Relative error uses max(|analytic|, |numeric|, 1e-12) as the
    denominator.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"grad_check: epsilon {epsilon} outside [1e-7, 1e-4]")
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
    if loss.data.dtype != np.float64:
        raise ValueError("grad_check: requires float64 precision")
    backward(loss, tape)

    worst = 0.0
    for p in params:
        if not p.trainable:
            continue
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic = analytic.reshape(-1)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            f_plus = f().item()
            flat[i] = original - epsilon
            f_minus = f().item()
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            if not (np.isfinite(numeric) and np.isfinite(analytic[i])):
                raise NonFiniteError(
                    f"grad_check: non-finite value at parameter '{p.name}' entry {i}"
                )
            rel = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), 1e-12)
            worst = max(worst, rel)
    return worst


def adam_step(
    params: Sequence[Parameter],
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
    step_count: int = 1,
) -> None:
    """Bias-corrected Adam update over all trainable parameters in place."""
    if step_count < 1:
        raise ValueError("adam_step: step_count must be >= 1")
    for p in params:
        if not p.trainable or p.grad is None:
            continue
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"adam_step: non-finite gradient for parameter '{p.name}'")
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1**step_count)
        v_hat = p.v / (1.0 - beta2**step_count)
        p.data -= learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)


def sgd_step(params: Sequence[Parameter], learning_rate: float) -> None:
    for p in params:
        if not p.trainable or p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"sgd_step: non-finite gradient for parameter '{p.name}'")
        p.data -= learning_rate * p.grad
