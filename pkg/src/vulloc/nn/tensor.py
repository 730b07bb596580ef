"""Reverse-mode autodiff over numpy arrays, sized for desk-scale training.

Tensors are float32 by default; float64 is used by the gradient checker.
Every op validates that its output is finite, so NaN/Inf surfaces at the op
that produced it instead of three modules later.
"""

import hashlib

import numpy as np

from ..errors import NonFiniteValue, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _backward=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap numpy data, not Tensors")
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, (np.ndarray, np.generic)) and data.dtype in (np.float32, np.float64):
            arr = np.asarray(data)
        else:
            arr = np.asarray(data, dtype=np.float32)  # python lists default to f32
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        if not np.isfinite(arr).all():
            raise NonFiniteValue("tensor holds NaN or Inf")

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def backward(self, seed=None) -> None:
        if seed is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.asarray(seed, dtype=self.data.dtype).reshape(self.data.shape)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _make(data, parents, backward) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires,
                 _parents=tuple(parents) if requires else (),
                 _backward=backward if requires else None)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    c = a.data.dtype.type(factor)
    data = a.data * c

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * c)

    return _make(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"cannot matmul {a.data.shape} @ {b.data.shape}")
    if a.data.ndim != b.data.ndim or a.data.shape[:-2] != b.data.shape[:-2]:
        raise ShapeMismatch(f"batch dims differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            b._accumulate(a.data.swapaxes(-1, -2) @ g)

    return _make(data, (a, b), backward)


def _elementwise(a: Tensor, fwd, dfn) -> Tensor:
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        data = fwd(a.data)  # non-finite results raise NonFiniteValue below

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * dfn(a.data, data))

    return _make(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    return _elementwise(a, np.tanh, lambda x, y: 1.0 - y * y)


def sigmoid(a: Tensor) -> Tensor:
    return _elementwise(a, _sigmoid_np, lambda x, y: y * (1.0 - y))


def _sigmoid_np(x):
    # exp may overflow to inf for very negative x; 1/(1+inf) is exactly 0,
    # so the result is correct and finite either way
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def relu(a: Tensor) -> Tensor:
    return _elementwise(a, lambda x: np.maximum(x, 0), lambda x, y: (x > 0).astype(x.dtype))


def exp(a: Tensor) -> Tensor:
    return _elementwise(a, np.exp, lambda x, y: y)


def log(a: Tensor) -> Tensor:
    return _elementwise(a, np.log, lambda x, y: 1.0 / x)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _make(data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    data = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inverse))

    return _make(data, (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets, offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, stop)
                t._accumulate(g[tuple(sl)])

    return _make(data, tuple(tensors), backward)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


class PrngState:
    """Deterministic named-stream RNG: (seed, label) pins each stream."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, label: str) -> np.random.Generator:
        if label not in self._streams:
            digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
            self._streams[label] = np.random.Generator(
                np.random.PCG64(int.from_bytes(digest[:8], "little")))
        return self._streams[label]

    def fork(self, label: str) -> "PrngState":
        digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        return PrngState(int.from_bytes(digest[8:16], "little"))


class ParamStore:
    """Named parameter tensors with lexicographic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data, dtype=np.float32) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(data, dtype=dtype), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def zero_grads(self) -> None:
        for _, p in self.items():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self._params):
            missing = set(self._params) ^ set(arrays)
            raise ShapeMismatch(f"parameter names do not match: {sorted(missing)}")
        for name, arr in arrays.items():
            p = self._params[name]
            if arr.shape != p.data.shape:
                raise ShapeMismatch(
                    f"{name}: checkpoint shape {arr.shape} != model shape {p.data.shape}")
            p.data = arr.astype(p.data.dtype).copy()
