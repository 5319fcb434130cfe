# genreg/autodiff.py
# -*- coding: utf-8 -*-
"""Dense tensors with tape-based reverse-mode automatic differentiation.

Every differentiable operation is a `Function` subclass with a numpy `forward`
and a `backward` returning one gradient per input. Calling `Tensor.backward()`
on a scalar loss records the reachable operations in a `Graph` (topological
order) and visits them in reverse exactly once.

The engine is single-threaded per graph. Parameters can be shared read-only
between threads for inference; gradients are only written to leaf tensors.
"""

import logging
from contextlib import contextmanager
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from genreg.errors import GraphError, ShapeError

logger = logging.getLogger(__name__)

# Additive attention mask for disallowed positions; exp() of it underflows to 0.
MASK_VALUE = -1e9

_default_dtype = np.dtype(np.float64)
_grad_enabled = True


@contextmanager
def no_grad():
    """Run operations without recording a graph (inference, evaluation)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def set_default_dtype(dtype: Union[str, np.dtype]) -> None:
    """Select float64 (tests, gradient checks) or float32 (faster training)."""
    global _default_dtype
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported dtype '{dtype}'. Use float32 or float64.")
    _default_dtype = resolved


def get_default_dtype() -> np.dtype:
    return _default_dtype


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode gradients."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        self.data = np.array(data, dtype=dtype or _default_dtype)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._ctx: Optional["Function"] = None
        self._backward_done = False

    @classmethod
    def _from_op(cls, data: np.ndarray, ctx: Optional["Function"]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = ctx is not None
        out.name = None
        out.grad = None
        out._ctx = ctx
        out._backward_done = False
        return out

    # --- Introspection ---

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    # --- Gradients ---

    def backward(self) -> "Graph":
        """Populate `.grad` on every leaf that requires gradients."""
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}.")
        if self._backward_done:
            raise GraphError(
                "backward() already ran on this graph. Rebuild the forward pass "
                "before differentiating again."
            )
        graph = Graph(self)
        graph.backward(np.ones_like(self.data))
        self._backward_done = True
        return graph

    # --- Operator overloads ---

    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Add.apply(self, Neg.apply(other))

    def __rsub__(self, other):
        return Add.apply(other, Neg.apply(self))

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent: float):
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = _normalize_axes(axis, self.ndim)
        count = int(np.prod([self.shape[a] for a in axes])) if axes else 1
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / max(count, 1))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or None)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def relu(self) -> "Tensor":
        return Relu.apply(self)


def parameter(data, name: Optional[str] = None) -> Tensor:
    """Create a trainable leaf tensor."""
    return Tensor(data, requires_grad=True, name=name)


class Graph:
    """Operations reachable from a root tensor, in topological order."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: List[Tensor] = self._toposort(root)
        self.gradients = {}
        self._consumed = False

    @staticmethod
    def _toposort(root: Tensor) -> List[Tensor]:
        order: List[Tensor] = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, seed: np.ndarray) -> None:
        if self._consumed:
            raise GraphError("This graph has already been differentiated.")
        self.gradients = {id(self.root): seed}
        for node in reversed(self.nodes):
            grad = self.gradients.get(id(node))
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = np.array(grad, copy=True) if node.grad is None else node.grad + grad
                continue
            parent_grads = node._ctx.backward(grad)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise ShapeError(
                        f"{type(node._ctx).__name__} produced gradient of shape "
                        f"{parent_grad.shape} for input of shape {parent.shape}."
                    )
                key = id(parent)
                if key in self.gradients:
                    self.gradients[key] = self.gradients[key] + parent_grad
                else:
                    self.gradients[key] = parent_grad
        self._consumed = True

    def grad_of(self, tensor: Tensor) -> Optional[np.ndarray]:
        """Accumulated gradient of any recorded node (leaf or intermediate)."""
        return self.gradients.get(id(tensor))


class Function:
    """One differentiable operation; instances double as the backward context."""

    def __init__(self):
        self.parents: Tuple[Tensor, ...] = ()

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        fn = cls()
        tensors = tuple(x if isinstance(x, Tensor) else Tensor(x) for x in inputs)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        if _grad_enabled and any(t.requires_grad for t in tensors):
            fn.parents = tensors
            return Tensor._from_op(out, fn)
        return Tensor._from_op(out, None)

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError


# =============================================================================
# Helpers
# =============================================================================

def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _swap_last(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# =============================================================================
# Elementwise arithmetic
# =============================================================================

class Add(Function):
    def forward(self, x, y):
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad):
        sx, sy = self.shapes
        return unbroadcast(grad, sx), unbroadcast(grad, sy)


class Mul(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return unbroadcast(grad * self.y, self.x.shape), unbroadcast(grad * self.x, self.y.shape)


class Div(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x / y

    def backward(self, grad):
        gx = grad / self.y
        gy = -grad * self.x / (self.y * self.y)
        return unbroadcast(gx, self.x.shape), unbroadcast(gy, self.y.shape)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, x, exponent: float):
        self.x, self.exponent = x, exponent
        return x ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.x ** (self.exponent - 1.0),)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x):
        # Split by sign so exp() never overflows.
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self.out = out
        return out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


# =============================================================================
# Linear algebra and shape manipulation
# =============================================================================

class MatMul(Function):
    def forward(self, x, y):
        if x.ndim < 2 or y.ndim < 2 or x.shape[-1] != y.shape[-2]:
            raise ShapeError(f"matmul shape mismatch: {x.shape} @ {y.shape}")
        self.x, self.y = x, y
        return np.matmul(x, y)

    def backward(self, grad):
        gx = np.matmul(grad, _swap_last(self.y))
        gy = np.matmul(_swap_last(self.x), grad)
        return unbroadcast(gx, self.x.shape), unbroadcast(gy, self.y.shape)


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape = x.shape
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        return np.sum(x, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, self.shape),)


class Reshape(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes=None):
        self.axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
        return np.transpose(x, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    def forward(self, x, index):
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        return x[index]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(out, self.index, grad)
        return (out,)


class GatherLast(Function):
    """`np.take_along_axis` over the last axis; repeated indices accumulate."""

    def forward(self, x, index):
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        return np.take_along_axis(x, index, axis=-1)

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=self.dtype)
        grids = np.indices(self.index.shape, sparse=True)
        np.add.at(out, tuple(grids[:-1]) + (self.index,), grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class Where(Function):
    def forward(self, a, b, condition):
        self.condition = condition
        self.shapes = (a.shape, b.shape)
        return np.where(condition, a, b)

    def backward(self, grad):
        ga = np.where(self.condition, grad, 0.0)
        gb = np.where(self.condition, 0.0, grad)
        return unbroadcast(ga, self.shapes[0]), unbroadcast(gb, self.shapes[1])


# =============================================================================
# Normalization and probability
# =============================================================================

class Softmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        log_norm = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
        out = shifted - log_norm
        self.probs = np.exp(out)
        return out

    def backward(self, grad):
        return (grad - self.probs * np.sum(grad, axis=self.axis, keepdims=True),)


class LayerNorm(Function):
    """Normalizes over the last axis, then applies gamma/beta."""

    def forward(self, x, gamma, beta, eps=1e-5):
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = centered * self.inv_std
        self.gamma = gamma
        self.shapes = (x.shape, gamma.shape, beta.shape)
        return self.x_hat * gamma + beta

    def backward(self, grad):
        x_shape, gamma_shape, beta_shape = self.shapes
        d_hat = grad * self.gamma
        mean_d = d_hat.mean(axis=-1, keepdims=True)
        mean_dx = (d_hat * self.x_hat).mean(axis=-1, keepdims=True)
        dx = self.inv_std * (d_hat - mean_d - self.x_hat * mean_dx)
        dgamma = unbroadcast(grad * self.x_hat, gamma_shape)
        dbeta = unbroadcast(grad, beta_shape)
        return dx, dgamma, dbeta


class HuberElementwise(Function):
    """Quadratic inside |r| <= delta, linear outside; r = prediction - target."""

    def forward(self, prediction, target, delta=1.0):
        r = prediction - target
        abs_r = np.abs(r)
        self.quadratic = abs_r <= delta
        self.r, self.delta = r, delta
        self.shapes = (prediction.shape, target.shape)
        return np.where(self.quadratic, 0.5 * r * r, delta * (abs_r - 0.5 * delta))

    def backward(self, grad):
        d = np.where(self.quadratic, self.r, self.delta * np.sign(self.r)) * grad
        return unbroadcast(d, self.shapes[0]), unbroadcast(-d, self.shapes[1])


class BCEWithLogits(Function):
    def forward(self, logits, labels):
        self.logits, self.labels = logits, labels
        return np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))

    def backward(self, grad):
        sig = np.where(
            self.logits >= 0,
            1.0 / (1.0 + np.exp(-np.abs(self.logits))),
            np.exp(-np.abs(self.logits)) / (1.0 + np.exp(-np.abs(self.logits))),
        )
        g = grad * (sig - self.labels)
        return unbroadcast(g, self.logits.shape), unbroadcast(-grad * self.logits, self.labels.shape)


# =============================================================================
# Functional interface
# =============================================================================

def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


def relu(x) -> Tensor:
    return Relu.apply(x)


def sigmoid(x) -> Tensor:
    return Sigmoid.apply(x)


def softmax(x, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def log_softmax(x, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, gamma, beta, eps=eps)


def gather_last(x, index) -> Tensor:
    return GatherLast.apply(x, index=np.asarray(index, dtype=np.int64))


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows of `table` selected by an integer array."""
    return GetItem.apply(table, index=np.asarray(ids, dtype=np.int64))


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def where(condition, a, b) -> Tensor:
    return Where.apply(a, b, condition=np.asarray(condition, dtype=bool))


def huber_elementwise(prediction, target, delta: float = 1.0) -> Tensor:
    return HuberElementwise.apply(prediction, target, delta=delta)


def bce_with_logits(logits, labels) -> Tensor:
    return BCEWithLogits.apply(logits, labels)


def cross_entropy(logits, targets) -> Tensor:
    """Per-position -log softmax(logits)[target]; scalar for 1-D logits.

    Callers exclude PAD positions with a mask before reducing.
    """
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    vocab_size = logits.shape[-1]
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(
            f"cross_entropy expects targets of shape {logits.shape[:-1]}, got {targets.shape}."
        )
    if targets.size and (targets.min() < 0 or targets.max() >= vocab_size):
        raise ShapeError(f"target index out of range for {vocab_size} classes.")
    log_probs = log_softmax(logits, axis=-1)
    picked = gather_last(log_probs, targets[..., None])
    return -picked.reshape(targets.shape)
