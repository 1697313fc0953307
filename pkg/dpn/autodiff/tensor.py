"""
Dense tensors with a reverse-mode tape.

Every primitive in `dpn.autodiff.ops` records one `TapeNode` on the tape of
the current thread whenever one of its inputs requires a gradient. Nodes are
appended in evaluation order, so walking the tape backwards visits every
operation after all of its consumers.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from dpn.errors import ContractError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str = "",
        dtype=None,
    ):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind in "iub" and requires_grad:
            raise ContractError(
                f"Only floating tensors can require gradients, got {array.dtype}"
            )
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional["TapeNode"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        inputs: Sequence["Tensor"],
        backward_fn: BackwardFn,
        op_name: str = "custom",
    ) -> "Tensor":
        """Wrap an op result and record it on the tape when any input needs a gradient."""
        needs_grad = _state.recording() and any(t.requires_grad for t in inputs)
        out = cls(data, requires_grad=needs_grad)
        if needs_grad:
            node = TapeNode(op_name, tuple(inputs), out, backward_fn)
            out._node = node
            get_tape().record(node)
        return out

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}{flag})"

    # Operator sugar; the primitives live in ops.
    def __add__(self, other):
        from dpn.autodiff import ops

        return ops.add(self, _lift(other, self))

    def __radd__(self, other):
        from dpn.autodiff import ops

        return ops.add(_lift(other, self), self)

    def __sub__(self, other):
        from dpn.autodiff import ops

        return ops.sub(self, _lift(other, self))

    def __rsub__(self, other):
        from dpn.autodiff import ops

        return ops.sub(_lift(other, self), self)

    def __mul__(self, other):
        from dpn.autodiff import ops

        return ops.mul(self, _lift(other, self))

    def __rmul__(self, other):
        from dpn.autodiff import ops

        return ops.mul(_lift(other, self), self)

    def __matmul__(self, other):
        from dpn.autodiff import ops

        return ops.matmul(self, other)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


class TapeNode:
    __slots__ = ("op_name", "inputs", "output", "backward_fn")

    def __init__(
        self,
        op_name: str,
        inputs: Tuple[Tensor, ...],
        output: Tensor,
        backward_fn: BackwardFn,
    ):
        self.op_name = op_name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    def __init__(self):
        self.nodes: List[TapeNode] = []

    def record(self, node: TapeNode):
        self.nodes.append(node)

    def reset(self):
        for node in self.nodes:
            node.output._node = None
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


class _ThreadState(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True

    def recording(self) -> bool:
        return self.grad_enabled


_state = _ThreadState()


def get_tape() -> Tape:
    return _state.tape


def reset_tape():
    _state.tape.reset()


@contextmanager
def no_grad() -> Iterator[None]:
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into `.grad` of every reachable leaf, then reset the tape."""
    if loss.data.size != 1:
        raise ContractError(
            f"backward() needs a scalar loss, got shape {loss.shape}"
        )
    if loss._node is None or not loss.requires_grad:
        raise ContractError("backward() called on a tensor that is not on the active tape")

    tape = get_tape()
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        out = node.output
        if out.grad is None:
            continue
        input_grads = node.backward_fn(out.grad)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if grad.shape != tensor.shape:
                raise ContractError(
                    f"{node.op_name} backward produced gradient {grad.shape} "
                    f"for input {tensor.shape}"
                )
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
        # Intermediate buffers are not needed once propagated.
        out.grad = None
    tape.reset()
