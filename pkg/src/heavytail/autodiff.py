"""Minimal dense-tensor engine with reverse-mode differentiation.

Values are float64 numpy arrays. Ops are row-batched where that matters for
training speed: a ``[d]`` input is one vector, a ``[B, d]`` input is ``B``
vectors processed independently. Implicit broadcasting is limited to a
scalar (shape ``()``) combined with a tensor; everything else must match
shape exactly.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateInputError(ValueError):
    """An input has zero L2 norm where a direction is required."""


class Tensor:
    """A float64 array with optional gradient tracking.

    Each result of a differentiable op keeps references to its parents and a
    closure that pushes its output gradient back into them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, op: str = ""):
        self.data: np.ndarray = np.array(data, dtype=np.float64, order="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: Callable[[np.ndarray], None] | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad=None) -> None:
        """Run reverse-mode accumulation from this tensor.

        ``grad`` defaults to 1 for scalar outputs. Gradients are added into
        ``.grad``; zeroing between steps is the caller's job.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed gradient needs a scalar, got shape {self.shape}")
            seed = np.ones_like(self.data)
        else:
            seed = np.array(grad, dtype=np.float64).reshape(self.shape)

        tape = build_tape(self)
        upstream: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(tape):
            g = upstream.pop(id(node), None)
            if g is None:
                continue
            node._accumulate(g)
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                upstream[key] = upstream[key] + pg if key in upstream else pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self) -> Tensor:
        return transpose(self)


def build_tape(root: Tensor) -> list[Tensor]:
    """Return the nodes reachable from ``root`` in topological order.

    Parents always precede children; each node appears once.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Iterable[Tensor], backward, op: str) -> Tensor:
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=parents if needs else (), _backward=backward if needs else None, op=op)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} must match (only scalar broadcasting is allowed)")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    # scalar operand broadcast against a tensor
    return np.array(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def scale(a, alpha: float) -> Tensor:
    a = as_tensor(a)
    alpha = float(alpha)
    return _result(a.data * alpha, (a,), lambda g: (g * alpha,), "scale")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def add_rowwise(x, v) -> Tensor:
    """Add vector ``v [n]`` to every row of ``x [B, n]`` (explicit bias add)."""
    x, v = as_tensor(x), as_tensor(v)
    if x.ndim != 2 or v.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowwise: cannot add {v.shape} to rows of {x.shape}")

    def backward(g):
        return g, g.sum(axis=0)

    return _result(x.data + v.data, (x, v), backward, "add_rowwise")


def take(a, index) -> Tensor:
    """Row/element selection with scatter-add backward."""
    a = as_tensor(a)
    if isinstance(index, Tensor):
        raise TypeError("index must be an int, slice or integer array")
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out), (a,), backward, "take")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def hinge(a) -> Tensor:
    """``[z]_+ = max(z, 0)``; the subgradient at exactly 0 is taken as 0."""
    return relu(a)


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    if axis is None:
        def backward(g):
            return (np.full(a.shape, float(g)),)

        return _result(np.array(a.data.sum()), (a,), backward, "sum")

    ax = axis % a.ndim

    def backward_axis(g):
        return (np.broadcast_to(np.expand_dims(g, ax), a.shape).copy(),)

    return _result(a.data.sum(axis=ax), (a,), backward_axis, "sum")


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    return _result(np.array(a.data.mean()), (a,), lambda g: (np.full(a.shape, float(g) / n),), "mean")


def l2_normalize(v) -> Tensor:
    """Unit-L2 rows (``[B, d]``) or a unit vector (``[d]``).

    Zero rows raise :class:`DegenerateInputError` instead of being patched
    with an epsilon.
    """
    v = as_tensor(v)
    if v.ndim not in (1, 2):
        raise ShapeError(f"l2_normalize expects [d] or [B, d], got {v.shape}")
    norms = np.sqrt(np.sum(v.data * v.data, axis=-1, keepdims=True))
    if np.any(norms == 0.0):
        raise DegenerateInputError("l2_normalize: zero vector has no direction")
    u = v.data / norms

    def backward(g):
        # d(v/|v|) = (I - u u^T) / |v|
        return ((g - u * np.sum(g * u, axis=-1, keepdims=True)) / norms,)

    return _result(u, (v,), backward, "l2_normalize")


def cosine_similarity(a, b) -> Tensor:
    """Cosine of the angle between ``a`` and ``b`` (row-wise for matrices)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape} differ")
    return sum(mul(l2_normalize(a), l2_normalize(b)), axis=-1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, target) -> Tensor:
    """Negative log-softmax at ``target``.

    ``logits [C]`` with an int target gives a scalar; ``logits [B, C]`` with
    ``B`` targets gives the per-example losses ``[B]``.
    """
    logits = as_tensor(logits)
    if logits.ndim not in (1, 2):
        raise ShapeError(f"softmax_cross_entropy expects [C] or [B, C], got {logits.shape}")
    z = logits.data if logits.ndim == 2 else logits.data[None, :]
    t = np.atleast_1d(np.asarray(target))
    if not np.issubdtype(t.dtype, np.integer):
        raise TypeError("targets must be integer class indices")
    if t.shape != (z.shape[0],):
        raise ShapeError(f"expected {z.shape[0]} targets, got shape {t.shape}")
    C = z.shape[1]
    if np.any(t < 0) or np.any(t >= C):
        raise IndexError(f"target out of range for {C} classes: {t.tolist()}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")

    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = lse - shifted[rows, t]
    probs = softmax(z)

    def backward(g):
        d = probs.copy()
        d[rows, t] -= 1.0
        d *= np.reshape(g, (-1, 1))
        return (d if logits.ndim == 2 else d[0],)

    out = losses if logits.ndim == 2 else np.array(losses[0])
    return _result(out, (logits,), backward, "softmax_cross_entropy")


class SGD:
    """Plain SGD with optional momentum and L2 weight decay."""

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.momentum:
                v *= self.momentum
                v += g
                g = v
            p.data -= self.lr * g
