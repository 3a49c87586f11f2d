"""Dense rank-2 tensors with taped reverse-mode differentiation.

Every value is a 2-D array (row vectors for biases, batch-major
matrices for activations), float64 by default with float32 as an
opt-in.  Operations record themselves on a :class:`Tape` whenever an
input is tape-tracked; the tape's node list is in creation order, which
is a topological order, so the backward pass is a single reverse sweep
that visits each node once and accumulates gradients into leaf buffers.

A tape is single-use: build a fresh one per forward pass and call
``backward`` at most once.  Parameters live outside tapes and keep
their ``grad`` buffers across passes, so gradients from consecutive
backward calls sum (reverse mode is linear in the loss).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, NumericError, ShapeError

DEFAULT_DTYPE = np.float64


def _require_finite(arr: np.ndarray, context: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite value in {context}")


def _as_2d(data, dtype) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim == 2:
        return arr
    raise ShapeError(f"tensors are rank <= 2, got shape {arr.shape}")


class Tensor:
    """A 2-D value, optionally tracked on a tape."""

    __slots__ = ("data", "grad", "tape", "name")

    def __init__(self, data, dtype=DEFAULT_DTYPE, name: Optional[str] = None):
        self.data = _as_2d(data, dtype)
        _require_finite(self.data, name or "tensor")
        self.grad: Optional[np.ndarray] = None
        self.tape: Optional["Tape"] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, tape: Optional["Tape"]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = arr
        out.grad = None
        out.tape = tape
        out.name = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        """Same values as a fresh untracked constant (shares the buffer)."""
        return Tensor._wrap(self.data, None)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data[0, 0])

    def accumulate_grad(self, delta: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += delta

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.data.dtype})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return hadamard(self, other)


class Tape:
    """Ordered record of primitive ops plus the trainable-leaf registry."""

    __slots__ = ("nodes", "params", "_used")

    def __init__(self):
        self.nodes: list[Callable[[], None]] = []
        self.params: list[Tensor] = []
        self._used = False

    def watch(self, *tensors: Tensor) -> None:
        """Mark leaves as trainable; ops touching them get recorded."""
        for t in tensors:
            t.tape = self
            self.params.append(t)

    def backward(self, loss: Tensor) -> None:
        """Reverse sweep from a scalar loss, summing into leaf ``grad``s."""
        if self._used:
            raise ContractError("tape already consumed by a backward pass")
        if loss.tape is not self:
            raise ContractError("loss is not recorded on this tape")
        if loss.shape != (1, 1):
            raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
        self._used = True
        loss.grad = np.ones((1, 1), dtype=loss.data.dtype)
        for node in reversed(self.nodes):
            node()


def _joint_tape(*tensors: Tensor) -> Optional[Tape]:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ContractError("inputs are tracked on different tapes")
            tape = t.tape
    return tape


def _record(tape: Optional[Tape], out: Tensor, pull: Callable[[np.ndarray], None]) -> None:
    if tape is None:
        return

    def node():
        if out.grad is not None:
            pull(out.grad)

    tape.nodes.append(node)


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    tape = _joint_tape(a, b)
    out = Tensor._wrap(a.data @ b.data, tape)

    def pull(g):
        if a.tape is not None:
            a.accumulate_grad(g @ b.data.T)
        if b.tape is not None:
            b.accumulate_grad(a.data.T @ g)

    _record(tape, out, pull)
    return out


def _binary_shapes(a: Tensor, b: Tensor, op: str):
    """Same shapes, or a 1-by-n bias row broadcast over m-by-n."""
    if a.shape == b.shape:
        return None
    if a.shape[1] == b.shape[1]:
        if a.shape[0] == 1:
            return "a"
        if b.shape[0] == 1:
            return "b"
    raise ShapeError(f"{op} shapes incompatible: {a.shape} vs {b.shape}")


def _reduce_rows(g: np.ndarray) -> np.ndarray:
    return g.sum(axis=0, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    row = _binary_shapes(a, b, "add")
    tape = _joint_tape(a, b)
    out = Tensor._wrap(a.data + b.data, tape)

    def pull(g):
        if a.tape is not None:
            a.accumulate_grad(_reduce_rows(g) if row == "a" else g)
        if b.tape is not None:
            b.accumulate_grad(_reduce_rows(g) if row == "b" else g)

    _record(tape, out, pull)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    row = _binary_shapes(a, b, "sub")
    tape = _joint_tape(a, b)
    out = Tensor._wrap(a.data - b.data, tape)

    def pull(g):
        if a.tape is not None:
            a.accumulate_grad(_reduce_rows(g) if row == "a" else g)
        if b.tape is not None:
            b.accumulate_grad(_reduce_rows(-g) if row == "b" else -g)

    _record(tape, out, pull)
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    row = _binary_shapes(a, b, "hadamard")
    tape = _joint_tape(a, b)
    out = Tensor._wrap(a.data * b.data, tape)

    def pull(g):
        if a.tape is not None:
            ga = g * b.data
            a.accumulate_grad(_reduce_rows(ga) if row == "a" else ga)
        if b.tape is not None:
            gb = g * a.data
            b.accumulate_grad(_reduce_rows(gb) if row == "b" else gb)

    _record(tape, out, pull)
    return out


def sigmoid(x: Tensor) -> Tensor:
    _require_finite(x.data, "sigmoid input")
    tape = x.tape
    out = Tensor._wrap(kernels.sigmoid_fwd(x.data), tape)

    def pull(g):
        x.accumulate_grad(kernels.sigmoid_bwd(out.data, g))

    _record(tape, out, pull)
    return out


def tanh(x: Tensor) -> Tensor:
    _require_finite(x.data, "tanh input")
    tape = x.tape
    out = Tensor._wrap(kernels.tanh_fwd(x.data), tape)

    def pull(g):
        x.accumulate_grad(kernels.tanh_bwd(out.data, g))

    _record(tape, out, pull)
    return out


def identity(x: Tensor) -> Tensor:
    _require_finite(x.data, "identity input")
    return x


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "identity": identity}
_BINARY = {"add": add, "sub": sub, "hadamard": hadamard}


def elementwise_unary(kind: str, x: Tensor) -> Tensor:
    try:
        return _UNARY[kind](x)
    except KeyError:
        raise ConfigError(f"unknown unary kind {kind!r}") from None


def elementwise_binary(kind: str, a: Tensor, b: Tensor) -> Tensor:
    try:
        return _BINARY[kind](a, b)
    except KeyError:
        raise ConfigError(f"unknown binary kind {kind!r}") from None


def smul(x: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar constant."""
    tape = x.tape
    out = Tensor._wrap(x.data * s, tape)

    def pull(g):
        x.accumulate_grad(g * s)

    _record(tape, out, pull)
    return out


def total(x: Tensor) -> Tensor:
    """Sum of all components, as a 1x1 tensor."""
    tape = x.tape
    out = Tensor._wrap(x.data.sum(dtype=x.data.dtype).reshape(1, 1), tape)

    def pull(g):
        x.accumulate_grad(np.full_like(x.data, g[0, 0]))

    _record(tape, out, pull)
    return out


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log softmax probability of the target classes.

    ``targets`` is an integer array of class indices, one per logits
    row.  Stabilized by per-row max subtraction.
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    rows, classes = logits.shape
    if targets.shape[0] != rows:
        raise ShapeError(f"{targets.shape[0]} targets for {rows} logit rows")
    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise IndexError(f"target index out of range for {classes} classes")
    tape = logits.tape
    loss, probs = kernels.softmax_xent_fwd(logits.data, targets)
    out = Tensor._wrap(np.array([[loss]], dtype=logits.data.dtype), tape)

    def pull(g):
        scale = g[0, 0] / rows
        logits.accumulate_grad(kernels.softmax_xent_bwd(probs, targets, scale))

    _record(tape, out, pull)
    return out


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup into an embedding table; gradients scatter-add back."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"id out of range for table with {table.shape[0]} rows")
    tape = table.tape
    out = Tensor._wrap(table.data[ids], tape)

    def pull(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        kernels.embedding_bwd(ids, np.ascontiguousarray(g), table.grad)

    _record(tape, out, pull)
    return out


def dropout(x: Tensor, rate: float, rng, train: bool = True) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Identity (and no rng consumption) when ``rate`` is 0 or in eval
    mode.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    keep = (rng.uniform(x.shape) >= rate).astype(x.data.dtype)
    mask = keep / (1.0 - rate)
    tape = x.tape
    out = Tensor._wrap(x.data * mask, tape)

    def pull(g):
        x.accumulate_grad(g * mask)

    _record(tape, out, pull)
    return out


# ---------------------------------------------------------------------------
# optimizer


def grad_global_norm(params: Sequence[Tensor]) -> float:
    sq = 0.0
    for p in params:
        if p.grad is not None:
            sq += float((p.grad * p.grad).sum())
    return float(np.sqrt(sq))


def sgd_step(params: Sequence[Tensor], lr: float, clip_norm: Optional[float] = None) -> float:
    """In-place SGD update with optional global-norm clipping.

    Returns the pre-clip global gradient norm.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if clip_norm is not None and clip_norm <= 0:
        raise ConfigError(f"clip norm must be positive, got {clip_norm}")
    norm = grad_global_norm(params)
    scale = 1.0
    if clip_norm is not None and norm > clip_norm:
        scale = clip_norm / norm
    for p in params:
        if p.grad is not None:
            p.data -= (lr * scale) * p.grad
    return norm


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def untrack(params: Sequence[Tensor]) -> None:
    """Release params from their tape so later ops record nothing."""
    for p in params:
        p.tape = None
