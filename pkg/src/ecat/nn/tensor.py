"""Dense tensors with a reverse-mode autodiff tape.

The tape is implicit: every operation that produces a tensor records its
parent tensors and a closure that maps the output gradient to parent
gradients.  ``backward`` on a scalar walks the graph in reverse
topological order.  The operation set is fixed (see functional.py); there
is no graph rewriting or fusion beyond what each op does internally.

Float32 is the working precision; float64 exists for finite-difference
verification only.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "tensor",
    "no_grad",
    "is_grad_enabled",
]


class _GradMode(threading.local):
    enabled = True


_grad_mode = _GradMode()


def contig(x: np.ndarray) -> np.ndarray:
    """C-contiguous view/copy that, unlike ascontiguousarray, keeps 0-d shape."""
    if x.ndim == 0:
        return x
    return np.ascontiguousarray(x)


def is_grad_enabled() -> bool:
    return _grad_mode.enabled


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / coding paths)."""
    prev = _grad_mode.enabled
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


class Tensor:
    """N-dimensional float array plus optional autodiff bookkeeping.

    Invariants: ``data`` is a contiguous numpy float array, values are
    finite after every forward op (checked by callers that matter), and
    ``grad`` when present has exactly ``data``'s shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
    ):
        self.data = data
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward

    # -- construction ------------------------------------------------

    @staticmethod
    def result(data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        """Wrap an op result, recording the tape edge if grad mode is on."""
        if _grad_mode.enabled and any(p.requires_grad for p in parents):
            return Tensor(data, requires_grad=True, parents=parents, backward=backward)
        return Tensor(data)

    # -- basic introspection ------------------------------------------

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

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- gradient plumbing ---------------------------------------------

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar.  Gradients accumulate additively
        across uses within the pass and across repeated calls without reset."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar (implementations live in functional.py) ---------

    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F

        return F.div(self, other)

    def __rtruediv__(self, other):
        from . import functional as F

        return F.div(other, self)

    def __neg__(self):
        from . import functional as F

        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def __getitem__(self, idx):
        from . import functional as F

        return F.index(self, idx)

    def reshape(self, *shape):
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        from . import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def transpose(self, axes):
        from . import functional as F

        return F.transpose(self, axes)


class Parameter(Tensor):
    """Trainable tensor with a name path; grad is kept allocated."""

    __slots__ = ("name",)

    def __init__(self, data: np.ndarray, name: str = ""):
        super().__init__(contig(np.asarray(data)), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    arr = contig(np.asarray(data, dtype=dtype))
    return Tensor(arr, requires_grad=requires_grad)


def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float32
    return tensor(x, dtype=dtype)


def assert_finite(t: Tensor, what: str = "tensor") -> Tensor:
    """NaN/Inf after a forward op is an error state, not a value."""
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"non-finite values in {what}")
    return t
