"""Dense float64 tensors and a tape-based reverse-mode engine.

Operations only record onto a tape while a :class:`Tape` context is active on
the current thread.  Every vector-Jacobian product is itself written in terms
of differentiable operations, so calling :func:`grad` with
``create_graph=True`` records the backward pass and allows a second
differentiation (needed by the gradient penalty).
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Incompatible tensor extents."""


class DomainError(ValueError):
    """Input outside the mathematical domain of a primitive."""


class TapeError(RuntimeError):
    """Backward requested on a tensor that is not on a live tape."""


_local = threading.local()


def _stack() -> list:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


def active_tape() -> "Tape | None":
    st = _stack()
    if not st or st[-1] is None:
        return None
    return st[-1]


@contextmanager
def no_record():
    """Suspend recording on the current thread."""
    st = _stack()
    st.append(None)
    try:
        yield
    finally:
        st.pop()


class Node:
    __slots__ = ("op", "inputs", "output", "vjp", "index")

    def __init__(self, op, inputs, output, vjp, index):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp
        self.index = index


class Tape:
    """Ordered record of primitive applications.

    Nodes are appended in execution order, which is a topological order of
    the graph.  Use as a context manager; nesting is allowed and the
    innermost tape records.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "_tape", "name", "__weakref__")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self._tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; the actual primitives live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


VJP = Callable[[Tensor, tuple], Sequence["Tensor | None"]]


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    """Wrap ``data`` as the output of primitive ``op``.

    ``vjp(g, needs)`` must return one entry per input: the cotangent for that
    input (a Tensor built from differentiable ops) or ``None`` where
    ``needs[i]`` is false.
    """
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        if tape.consumed:
            raise TapeError("tape already consumed by a backward pass")
        out.requires_grad = True
        node = Node(op, tuple(inputs), out, vjp, len(tape.nodes))
        tape.nodes.append(node)
        out._node = node
        out._tape = tape
    return out


def _accumulate(store: dict, t: Tensor, g: Tensor, create_graph: bool):
    key = id(t)
    prev = store.get(key)
    if prev is None:
        store[key] = (t, g)
    elif create_graph:
        from . import ops
        store[key] = (t, ops.add(prev[1], g))
    else:
        store[key] = (t, Tensor(prev[1].data + g.data))


def _run_backward(loss: Tensor, create_graph: bool) -> dict:
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    cot: dict = {}
    seed = Tensor(np.ones_like(loss.data))
    if loss._node is None:
        if loss.requires_grad:
            cot[id(loss)] = (loss, seed)
            return cot
        raise TapeError("loss was not produced on an active tape")
    tape = loss._tape
    if tape.consumed:
        raise TapeError("tape already consumed by a backward pass")
    cot[id(loss)] = (loss, seed)
    nodes = tape.nodes
    ctx = _nullctx() if create_graph else no_record()
    with ctx:
        for i in range(loss._node.index, -1, -1):
            node = nodes[i]
            entry = cot.get(id(node.output))
            if entry is None:
                continue
            g = entry[1]
            needs = tuple(t.requires_grad for t in node.inputs)
            grads = node.vjp(g, needs)
            for t, gi, need in zip(node.inputs, grads, needs):
                if need and gi is not None:
                    if gi.shape != t.shape:
                        raise ShapeError(
                            f"vjp of {node.op} produced {gi.shape} for input {t.shape}"
                        )
                    _accumulate(cot, t, gi, create_graph)
    return cot


@contextmanager
def _nullctx():
    yield


def grad(loss: Tensor, inputs: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of scalar ``loss`` with respect to ``inputs``.

    Unused inputs receive zeros.  With ``create_graph`` the returned tensors
    are themselves recorded on the active tape and can be differentiated.
    """
    cot = _run_backward(loss, create_graph)
    out = []
    for t in inputs:
        entry = cot.get(id(t))
        out.append(entry[1] if entry is not None else Tensor(np.zeros_like(t.data)))
    return out


def backward(loss: Tensor, inputs: Iterable[Tensor] | None = None,
             retain_graph: bool = False) -> dict:
    """Reverse pass from ``loss``; accumulates ``.grad`` on leaves.

    Returns a mapping ``Tensor -> ndarray`` covering every leaf on the tape
    that requires grad plus any explicitly listed ``inputs`` (zeros when
    unused).
    """
    cot = _run_backward(loss, create_graph=False)
    result: dict = {}
    tape = loss._tape
    if tape is not None:
        for node in tape.nodes:
            for t in node.inputs:
                if t.requires_grad and t._node is None and t not in result:
                    result[t] = np.zeros_like(t.data)
    if inputs is not None:
        for t in inputs:
            if t not in result:
                result[t] = np.zeros_like(t.data)
    for key, (t, g) in cot.items():
        if t._node is None and t.requires_grad:
            result[t] = g.data
    for t, g in result.items():
        t.grad = g.copy() if t.grad is None else t.grad + g
    if tape is not None and not retain_graph:
        tape.consumed = True
    return result
