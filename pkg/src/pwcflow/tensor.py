"""Dense tensor container with reverse-mode gradients and the parameter store.

Every differentiable operator in this package is a plain function that takes
and returns :class:`Tensor` objects.  An operator computes its result with
numpy (or a compiled kernel), then attaches a VJP closure via
:func:`from_op`.  The VJP is the operator's backward pass: it consumes the
gradient of the loss with respect to the operator's output and returns one
gradient (or ``None``) per input, in input order.  Calling
:meth:`Tensor.backward` on a scalar result replays those closures in reverse
topological order, filling the ``grad`` slot of every reachable tensor that
has ``requires_grad`` set.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference / evaluation)."""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """A dense n-dimensional float array with an optional gradient slot.

    ``data`` is always a contiguous float32 or float64 numpy array.  ``grad``
    is ``None`` until :meth:`backward` (or an optimizer's bookkeeping) fills
    it; when present it has exactly the shape of ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._vjp: Optional[Callable] = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        flags = "grad" if self.requires_grad else "const"
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, {flags})"

    def item(self) -> float:
        return float(self.data)

    # -- gradient bookkeeping ------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Reverse-mode sweep seeding this tensor with ``grad`` (default 1).

        Frees each node's VJP closure after use, so a graph can only be
        traversed once.
        """
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without a seed gradient requires a scalar tensor")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ValueError(f"seed gradient shape {grad.shape} != tensor shape {self.data.shape}")

        order = _topological_order(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in order:
            vjp = node._vjp
            if vjp is None or node.grad is None:
                continue
            parent_grads = vjp(node.grad)
            for parent, pgrad in zip(node._parents, parent_grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                if pgrad.shape != parent.data.shape:
                    raise ValueError(
                        f"backward produced gradient of shape {pgrad.shape} "
                        f"for input of shape {parent.data.shape}"
                    )
                if parent.grad is None:
                    parent.grad = pgrad
                else:
                    parent.grad = parent.grad + pgrad
            node._vjp = None
            node._parents = ()


def _topological_order(root: Tensor) -> list:
    """Nodes reachable from ``root`` through parents, outputs first."""
    order: list = []
    visited: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def from_op(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap an operator result, recording graph edges when grads are on.

    ``vjp(grad_out)`` must return one gradient array (or ``None``) per entry
    of ``parents``, matching that parent's shape.
    """
    requires = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value if dtype is None or value.dtype == dtype else value.astype(dtype)
    return Tensor(value, dtype=dtype)


class ParameterStore:
    """Ordered, uniquely named map of trainable tensors.

    Names are slash-separated paths assigned by the model builder.  The store
    is single-writer: optimizers mutate parameter ``data`` in place, nothing
    else does.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    @property
    def total_count(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def cast_(self, dtype) -> None:
        """In-place dtype change of every parameter (e.g. for 64-bit checks)."""
        for t in self._params.values():
            t.data = np.ascontiguousarray(t.data.astype(dtype))
            t.grad = None

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values from ``arrays``; names must match exactly."""
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise KeyError(f"parameter name mismatch: missing={sorted(missing)}, unexpected={sorted(extra)}")
        for name, tensor in self._params.items():
            arr = arrays[name]
            if arr.shape != tensor.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {tensor.data.shape}")
            tensor.data = np.ascontiguousarray(arr.astype(tensor.data.dtype))
            tensor.grad = None


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int,
                    slope: float = 0.1, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Uniform fan-in scaled initialization (leaky-rectifier gain)."""
    gain = np.sqrt(2.0 / (1.0 + slope * slope))
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
