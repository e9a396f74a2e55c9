"""A small reverse-mode differentiation engine over dense float64 arrays.

Values are :class:`Tensor` objects. Every primitive is a :class:`Tape` method
that computes its output eagerly and, when any input requires a gradient,
appends a record to the tape. :meth:`Tape.backward` walks the records in
reverse and applies the rule registered for each primitive in
``BACKWARD_RULES``; gradients come back as a fresh ``{leaf: array}`` mapping,
so replaying the same tape twice gives bitwise-identical results.

Broadcasting is limited to adding a vector bias to the last axis.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError

Array = np.ndarray


class Tensor:
    """Dense double-precision value; ``requires_grad`` marks trainable leaves."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data: Array = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", [self.shape], "tensor is not a scalar")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Record:
    """One primitive application on the tape."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    saved: Dict[str, object] = field(default_factory=dict)


BackwardRule = Callable[[Record, Array], Sequence[Optional[Array]]]


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    ex = np.exp(x[~positive])
    out[~positive] = ex / (1.0 + ex)
    return out


def _log_softmax(x: Array) -> Array:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _matmul_backward(rec: Record, g: Array):
    a, b = rec.inputs
    if a.data.ndim == 1:
        return b.data @ g, np.outer(a.data, g)
    if b.data.ndim == 1:
        return np.outer(g, b.data), a.data.T @ g
    return g @ b.data.T, a.data.T @ g


def _add_backward(rec: Record, g: Array):
    a, b = rec.inputs
    if b.data.shape == a.data.shape:
        return g, g
    return g, g.reshape(-1, b.data.shape[0]).sum(axis=0)


def _sub_backward(rec: Record, g: Array):
    return g, -g


def _mul_backward(rec: Record, g: Array):
    a, b = rec.inputs
    return g * b.data, g * a.data


def _scale_backward(rec: Record, g: Array):
    return (g * rec.saved["factor"],)


def _sigmoid_backward(rec: Record, g: Array):
    out = rec.output.data
    return (g * out * (1.0 - out),)


def _tanh_backward(rec: Record, g: Array):
    out = rec.output.data
    return (g * (1.0 - out * out),)


def _exp_backward(rec: Record, g: Array):
    return (g * rec.output.data,)


def _log_softmax_backward(rec: Record, g: Array):
    softmax = np.exp(rec.output.data)
    return (g - softmax * np.sum(g, axis=-1, keepdims=True),)


def _embedding_backward(rec: Record, g: Array):
    (table,) = rec.inputs
    grad = np.zeros_like(table.data)
    grad[rec.saved["index"]] = g
    return (grad,)


def _concat_backward(rec: Record, g: Array):
    offsets = np.cumsum([0] + list(rec.saved["sizes"]))
    return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(rec.inputs)))


def _stack_backward(rec: Record, g: Array):
    return tuple(g[i] for i in range(len(rec.inputs)))


def _sum_backward(rec: Record, g: Array):
    (a,) = rec.inputs
    return (np.full(a.data.shape, float(g)),)


def _reshape_backward(rec: Record, g: Array):
    (a,) = rec.inputs
    return (g.reshape(a.data.shape),)


BACKWARD_RULES: Dict[str, BackwardRule] = {
    "matmul": _matmul_backward,
    "add": _add_backward,
    "sub": _sub_backward,
    "mul": _mul_backward,
    "scale": _scale_backward,
    "sigmoid": _sigmoid_backward,
    "tanh": _tanh_backward,
    "exp": _exp_backward,
    "log_softmax": _log_softmax_backward,
    "embedding": _embedding_backward,
    "gather": _embedding_backward,
    "row": _embedding_backward,
    "concat": _concat_backward,
    "stack": _stack_backward,
    "sum": _sum_backward,
    "reshape": _reshape_backward,
}


class Tape:
    """Ordered record of primitive applications.

    With ``enabled=False`` primitives only compute values; this is the
    inference mode used by greedy and beam decoding.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.records: List[Record] = []

    def __len__(self) -> int:
        return len(self.records)

    def _emit(self, op: str, inputs: Tuple[Tensor, ...], value: Array, **saved) -> Tensor:
        tracked = self.enabled and any(t.requires_grad for t in inputs)
        out = Tensor(value, requires_grad=tracked)
        if tracked:
            self.records.append(Record(op, inputs, out, saved))
        return out

    # -- primitives ---------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2) or (
            a.data.ndim == 1 and b.data.ndim == 1
        ):
            raise ShapeError("matmul", [a.shape, b.shape], "expected matrix or vector-matrix operands")
        if a.shape[-1] != b.shape[0]:
            raise ShapeError("matmul", [a.shape, b.shape], "inner dimensions differ")
        return self._emit("matmul", (a, b), a.data @ b.data)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape and not (b.data.ndim == 1 and a.shape[-1:] == b.shape):
            raise ShapeError("add", [a.shape, b.shape])
        return self._emit("add", (a, b), a.data + b.data)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeError("sub", [a.shape, b.shape])
        return self._emit("sub", (a, b), a.data - b.data)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeError("mul", [a.shape, b.shape])
        return self._emit("mul", (a, b), a.data * b.data)

    def scale(self, a: Tensor, factor: float) -> Tensor:
        return self._emit("scale", (a,), a.data * factor, factor=float(factor))

    def sigmoid(self, a: Tensor) -> Tensor:
        return self._emit("sigmoid", (a,), _sigmoid(a.data))

    def tanh(self, a: Tensor) -> Tensor:
        return self._emit("tanh", (a,), np.tanh(a.data))

    def exp(self, a: Tensor) -> Tensor:
        return self._emit("exp", (a,), np.exp(a.data))

    def log_softmax(self, a: Tensor) -> Tensor:
        if a.data.ndim not in (1, 2) or a.shape[-1] == 0:
            raise ShapeError("log_softmax", [a.shape])
        return self._emit("log_softmax", (a,), _log_softmax(a.data))

    def embedding(self, table: Tensor, index: int) -> Tensor:
        if table.data.ndim != 2 or not 0 <= index < table.shape[0]:
            raise ShapeError("embedding", [table.shape], f"index {index}")
        return self._emit("embedding", (table,), table.data[index], index=int(index))

    def gather(self, a: Tensor, index: int) -> Tensor:
        """Scalar a[index] of a vector."""
        if a.data.ndim != 1 or not 0 <= index < a.shape[0]:
            raise ShapeError("gather", [a.shape], f"index {index}")
        return self._emit("gather", (a,), a.data[index], index=int(index))

    def row(self, a: Tensor, index: int) -> Tensor:
        if a.data.ndim != 2 or not 0 <= index < a.shape[0]:
            raise ShapeError("row", [a.shape], f"index {index}")
        return self._emit("row", (a,), a.data[index], index=int(index))

    def concat(self, tensors: Sequence[Tensor]) -> Tensor:
        if not tensors or any(t.data.ndim != 1 for t in tensors):
            raise ShapeError("concat", [t.shape for t in tensors], "expected vectors")
        sizes = tuple(t.shape[0] for t in tensors)
        return self._emit(
            "concat", tuple(tensors), np.concatenate([t.data for t in tensors]), sizes=sizes
        )

    def stack(self, tensors: Sequence[Tensor]) -> Tensor:
        shapes = [t.shape for t in tensors]
        if not tensors or len(set(shapes)) != 1 or tensors[0].data.ndim > 1:
            raise ShapeError("stack", shapes, "expected scalars or equal-length vectors")
        return self._emit("stack", tuple(tensors), np.stack([t.data for t in tensors]))

    def sum(self, a: Tensor) -> Tensor:
        return self._emit("sum", (a,), np.sum(a.data))

    def reshape(self, a: Tensor, shape: Tuple[int, ...]) -> Tensor:
        if int(np.prod(shape)) != a.size:
            raise ShapeError("reshape", [a.shape, tuple(shape)])
        return self._emit("reshape", (a,), a.data.reshape(shape))

    # -- reverse pass -------------------------------------------------------

    def backward(self, loss: Tensor) -> Dict[Tensor, Array]:
        """Gradients of scalar ``loss`` for every requires_grad leaf it depends on."""
        if loss.size != 1:
            raise ShapeError("backward", [loss.shape], "loss must be a scalar")
        produced = {id(rec.output) for rec in self.records}
        if not loss.requires_grad or (id(loss) not in produced and not self._is_leaf_input(loss)):
            raise ValueError("loss is not on this tape")

        grads: Dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        if id(loss) not in produced:
            leaves[id(loss)] = loss
        for rec in reversed(self.records):
            g = grads.get(id(rec.output))
            if g is None:
                continue
            partials = BACKWARD_RULES[rec.op](rec, g)
            for tensor, partial in zip(rec.inputs, partials):
                if partial is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + partial
                else:
                    grads[key] = np.array(partial, dtype=np.float64).reshape(tensor.shape)
                if key not in produced:
                    leaves[key] = tensor
        return {tensor: grads[key] for key, tensor in leaves.items()}

    def _is_leaf_input(self, tensor: Tensor) -> bool:
        return any(tensor is t for rec in self.records for t in rec.inputs)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)
