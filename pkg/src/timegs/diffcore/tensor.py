"""Dense float64 tensors recorded on a define-by-run tape.

A :class:`Tape` is opened with ``with Tape():``. While it is active, every op
whose inputs include a ``requires_grad`` tensor appends one entry to it.
Outside a tape ops run eagerly and record nothing, which is how evaluation
avoids holding the graph in memory.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_node_ids = itertools.count()
_active_tapes: list["Tape"] = []


class ShapeError(ValueError):
    """Raised when an op receives incompatible shapes."""

    def __init__(self, op: str, *shapes, detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes " + " and ".join(str(s) for s in self.shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class GradientError(RuntimeError):
    """Raised for invalid backward calls or missing gradients."""


class DiffTensor:
    __slots__ = ("values", "grad", "requires_grad", "node_id", "name", "_tape")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id = next(_node_ids)
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None if self.grad is None else np.zeros_like(self.values)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"DiffTensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operators delegate to the functional ops module.
    def __add__(self, other):
        return _ops.add(self, other)

    def __radd__(self, other):
        return _ops.add(other, self)

    def __sub__(self, other):
        return _ops.sub(self, other)

    def __rsub__(self, other):
        return _ops.sub(other, self)

    def __mul__(self, other):
        return _ops.mul(self, other)

    def __rmul__(self, other):
        return _ops.mul(other, self)

    def __truediv__(self, other):
        return _ops.div(self, other)

    def __rtruediv__(self, other):
        return _ops.div(other, self)

    def __neg__(self):
        return _ops.mul(self, -1.0)

    def __matmul__(self, other):
        return _ops.matmul(self, other)

    def __getitem__(self, index):
        return _ops.getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return _ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> DiffTensor:
    """Wrap numbers and arrays as constant tensors; tensors pass through."""
    if isinstance(x, DiffTensor):
        return x
    return DiffTensor(x)


@dataclass
class TapeEntry:
    op: str
    input_ids: tuple[int, ...]
    output_id: int
    inputs: tuple[DiffTensor, ...] = field(repr=False)
    output: DiffTensor = field(repr=False)
    # Maps the output gradient to one gradient (or None) per input. Saved
    # intermediates live in the closure.
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] = field(repr=False)


class Tape:
    """Ordered record of ops for one forward pass."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tapes.remove(self)

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op, inputs, output, backward) -> None:
        output._tape = self
        self.entries.append(
            TapeEntry(
                op=op,
                input_ids=tuple(t.node_id for t in inputs),
                output_id=output.node_id,
                inputs=tuple(inputs),
                output=output,
                backward=backward,
            )
        )

    def first_nonfinite(self) -> TapeEntry | None:
        """Return the earliest entry whose output holds a NaN or inf."""
        for entry in self.entries:
            if not np.all(np.isfinite(entry.output.values)):
                return entry
        return None

    def backward(self, root: DiffTensor) -> None:
        backward(root)

    def clear(self) -> None:
        """Drop all entries; outputs point back at the tape, so this breaks the cycle."""
        self.entries.clear()


def active_tape() -> Tape | None:
    return _active_tapes[-1] if _active_tapes else None


def make_result(op: str, value: np.ndarray, inputs: Sequence[DiffTensor], backward) -> DiffTensor:
    """Create an op output and record it if any input needs a gradient."""
    out = DiffTensor(value)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, backward)
    return out


def backward(root: DiffTensor) -> None:
    """Populate ``.grad`` on every requires_grad tensor reachable from ``root``.

    Entries are visited in exact reverse recording order. Gradients from
    several consumers of the same node are summed. Leaf gradients accumulate
    onto any gradient already stored; intermediate gradients are overwritten.
    """
    if root.values.size != 1:
        raise GradientError(f"backward: root must be scalar, got shape {root.shape}")
    tape = root._tape
    if tape is None or not tape.entries:
        raise GradientError("backward: root was not produced on a non-empty tape")

    pending: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.values)}
    leaves: dict[int, DiffTensor] = {}
    for entry in reversed(tape.entries):
        g = pending.pop(entry.output_id, None)
        if g is None:
            continue
        entry.output.grad = g
        grads = entry.backward(g)
        for t, gi in zip(entry.inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(f"{entry.op}.backward", gi.shape, t.shape)
            if t.node_id in pending:
                pending[t.node_id] = pending[t.node_id] + gi
            else:
                pending[t.node_id] = gi
            if t._tape is not tape:
                leaves[t.node_id] = t
    for node_id, t in leaves.items():
        g = pending.pop(node_id)
        t.grad = g.copy() if t.grad is None else t.grad + g


from . import ops as _ops  # noqa: E402  (ops imports names defined above)
