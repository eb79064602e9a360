"""Dense tensor with a recorded-operation tape for reverse-mode gradients.

Values live in numpy arrays (float32 in production, float64 when gradients
are being checked against finite differences). Every operation that builds
on tensors records its parents and a backward closure; calling
``Tensor.backward()`` on a scalar result replays the tape in reverse.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """An operand's dimensions violate the operation's contract."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


class BackwardError(RuntimeError):
    """Backward was requested without a recorded forward pass."""


_GRAD_ENABLED = True
_STRICT_FINITE = True


def set_strict_finite(enabled: bool) -> None:
    """Toggle the NaN/Inf check applied to every op output."""
    global _STRICT_FINITE
    _STRICT_FINITE = bool(enabled)


def strict_finite_enabled() -> bool:
    return _STRICT_FINITE


def check_finite(name: str, data: np.ndarray) -> None:
    """Raise NonFiniteError if *data* contains NaN or Inf (when enabled)."""
    if _STRICT_FINITE and not np.isfinite(data).all():
        raise NonFiniteError(f"{name}: output contains NaN or Inf")


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Context manager suppressing tape recording (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """N-dimensional real array with an optional gradient buffer.

    ``data`` is row-major; ``grad``, when present, matches ``data`` in shape
    and dtype. Tensors created by operations carry parent links forming the
    tape used by :meth:`backward`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64 if arr.dtype == np.float64 else np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], None] | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def from_op(data: np.ndarray, parents: Sequence["Tensor"],
                backward_fn: Callable[[np.ndarray], None],
                name: str = "op") -> "Tensor":
        """Wrap an op result, recording the tape entry if grad mode is on."""
        check_finite(name, data)
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs)
        if needs:
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    # -- basic introspection --------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numel(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.grad is not None})"

    # -- reverse-mode differentiation ------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self) -> None:
        """Propagate gradients from this scalar back through the tape."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._backward_fn is None:
            raise BackwardError("backward() called on a tensor with no recorded forward pass")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def as_tensor(value, dtype=None) -> Tensor:
    """Coerce arrays or scalars to a non-grad Tensor."""
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype)
    return Tensor(arr)


def same_dtype(op: str, *arrays: np.ndarray) -> None:
    """Enforce a single precision mode across an op's operands."""
    dtypes = {a.dtype for a in arrays}
    if len(dtypes) > 1:
        raise ShapeError(f"{op}: mixed precision operands {sorted(str(d) for d in dtypes)}")
