#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
autodiff.py

Description:
    Minimal define-by-run reverse-mode automatic differentiation over float64 numpy
    arrays. Provides the Tensor type, the operations the surrogate and its losses need,
    backward(), a no_grad() context, finite-difference gradcheck, Adam, and the
    TOPOCK01 parameter checkpoint container.

Usage:
    from topoformer import autodiff as ad

    w = ad.Tensor(np.random.randn(3, 4), requires_grad=True)
    x = ad.Tensor(np.random.randn(5, 3))
    loss = ad.mean(ad.square(x @ w))
    ad.backward(loss)
    print(w.grad.shape)

Requirements:
    - numpy
    - scipy

"""

from __future__ import annotations

import json
import math
import struct
import threading
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.special import erf, expit

from .exceptions import ChecksumError, ContainerError, SchemaError, TruncatedFileError

ArrayLike = Union["Tensor", np.ndarray, float, int]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

CHECKPOINT_MAGIC = b"TOPOCK01"
CHECKPOINT_VERSION = 1
LAYER_NORM_EPS = 1e-5
_U32 = struct.Struct("<I")
_F64 = np.dtype("<f8")

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def _debug_enabled() -> bool:
    return getattr(_state, "debug", False)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording a graph"""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def set_debug(enabled: bool) -> None:
    """In debug mode every operation rejects NaN inputs"""
    _state.debug = enabled


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the same seed gives the same stream on every platform"""
    return np.random.Generator(np.random.PCG64(seed))


class Tensor:
    """Dense float64 array that can take part in a reverse-mode graph"""

    # ndarray (op) Tensor defers to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        parents: tuple[Tensor, ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        op: str = "",
    ):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op='{self.op or 'leaf'}', grad={self.requires_grad})"

    def __add__(self, other: ArrayLike) -> Tensor:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other: ArrayLike) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return getitem(self, index)

    def reshape(self, *shape: Any) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Optional[Sequence[int]] = None) -> Tensor:
        return transpose(self, axes)

    @property
    def T(self) -> Tensor:  # pylint: disable=invalid-name
        return transpose(self)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(
    data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: BackwardFn, op: str
) -> Tensor:
    if _debug_enabled():
        for parent in parents:
            if np.isnan(parent.data).any():
                raise ValueError(f"NaN input to '{op}' (shape {parent.shape})")
    needs_grad = _grad_enabled() and any(p.requires_grad for p in parents)
    if not needs_grad:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError as e:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Batched matrix product over the last two axes, broadcasting leading axes"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        out = a.data @ b.data
    except ValueError as e:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} are not aligned") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return _make(out, (a, b), backward, "matmul")


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise ValueError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from e
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; the default swaps the last two"""
    a = as_tensor(a)
    if axes is None:
        axes = list(range(a.ndim))
        if a.ndim >= 2:
            axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ValueError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return _make(
        np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose"
    )


def getitem(a: ArrayLike, index: Any) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate in backward"""
    a = as_tensor(a)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _make(a.data[index], (a,), backward, "getitem")


def gather_rows(a: ArrayLike, indices: Sequence[int]) -> Tensor:
    """Rows of a along axis 0"""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise ValueError(f"gather_rows: indices out of range for shape {a.shape}")
    return getitem(a, idx)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ValueError("concat: nothing to concatenate")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ValueError(f"concat: incompatible shapes {[p.shape for p in parts]}") from e
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, splits, axis=axis))

    return _make(out, tuple(parts), backward, "concat")


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), backward, "softmax")


def layer_norm(
    x: ArrayLike, weight: ArrayLike, bias: ArrayLike, eps: float = LAYER_NORM_EPS
) -> Tensor:
    """Normalize over the last axis, then scale and shift"""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    width = x.shape[-1]
    if weight.shape != (width,) or bias.shape != (width,):
        raise ValueError(
            f"layer_norm: weight {weight.shape} / bias {bias.shape} do not match width {width}"
        )
    mean_ = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mean_
    inv_std = 1.0 / np.sqrt((centred**2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centred * inv_std
    out = x_hat * weight.data + bias.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_hat = g * weight.data
        grad_x = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        flat = g.reshape(-1, width)
        grad_w = (flat * x_hat.reshape(-1, width)).sum(axis=0)
        return grad_x, grad_w, flat.sum(axis=0)

    return _make(out, (x, weight, bias), backward, "layer_norm")


def gelu(a: ArrayLike) -> Tensor:
    """Exact GELU x * Phi(x)"""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * a.data**2) / math.sqrt(2.0 * math.pi)
    return _make(a.data * cdf, (a,), lambda g: (g * (cdf + a.data * pdf),), "gelu")


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _normalize_axis(axis: Optional[Union[int, Sequence[int]]], ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(ax % ndim for ax in axes)


def sum(  # pylint: disable=redefined-builtin
    a: ArrayLike, axis: Optional[Union[int, Sequence[int]]] = None, keepdims: bool = False
) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward, "sum")


def mean(
    a: ArrayLike, axis: Optional[Union[int, Sequence[int]]] = None, keepdims: bool = False
) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return div(sum(a, axes, keepdims), float(max(count, 1)))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(a.data**2, (a,), lambda g: (2.0 * g * a.data,), "square")


def abs(a: ArrayLike) -> Tensor:  # pylint: disable=redefined-builtin
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clip(a: ArrayLike, low: float, high: float) -> Tensor:
    """Clamp to [low, high]; gradient passes where the input lies inside the closed range"""
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)
    return _make(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clip")


def maximum(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise max; ties send the gradient to `a`"""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("maximum", a, b)
    take_a = a.data >= b.data
    return _make(
        np.maximum(a.data, b.data),
        (a, b),
        lambda g: (unbroadcast(g * take_a, a.shape), unbroadcast(g * ~take_a, b.shape)),
        "maximum",
    )


# (row, column) offset of the cell each cross_max candidate reads from
_CROSS_OFFSETS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))


def cross_max(a: ArrayLike) -> Tensor:
    """
    Max over each cell and its four edge neighbours in the last two axes, zero padded

    The gradient goes to the winning cell; ties prefer the cell itself.
    """
    a = as_tensor(a)
    if a.ndim < 2:
        raise ValueError(f"cross_max: needs at least 2 axes, got shape {a.shape}")
    height, width = a.shape[-2:]
    padding = [(0, 0)] * (a.ndim - 2) + [(1, 1), (1, 1)]
    padded = np.pad(a.data, padding)
    windows = [
        (slice(1 + dr, 1 + dr + height), slice(1 + dc, 1 + dc + width))
        for dr, dc in _CROSS_OFFSETS
    ]
    candidates = np.stack([padded[(Ellipsis, *window)] for window in windows])
    winner = candidates.argmax(axis=0).astype(np.int8)
    out = np.take_along_axis(candidates, winner[None].astype(np.int64), axis=0)[0]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(padded)
        for k, window in enumerate(windows):
            grad[(Ellipsis, *window)] += np.where(winner == k, g, 0.0)
        return (grad[..., 1:-1, 1:-1],)

    return _make(out, (a,), backward, "cross_max")


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log: input must be strictly positive")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def mse_loss(pred: ArrayLike, target: ArrayLike) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    return mean(square(sub(pred, target)))


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Fill .grad for every tensor that requires grad and feeds `loss`

    Leaf gradients accumulate across calls; intermediate gradients are overwritten.

    Raises:
        ValueError: loss is not a scalar
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        if node.backward_fn is None:
            continue
        for parent, parent_grad in zip(node.parents, node.backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """
    Largest norm-relative error between analytic and central-difference gradients

    `fn` must return a scalar Tensor. Inputs are perturbed in place and restored.
    """
    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()
    backward(fn(*inputs))
    worst = 0.0
    for tensor in inputs:
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy()
        numeric = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                plus = fn(*inputs).item()
                flat[i] = original - h
                minus = fn(*inputs).item()
                flat[i] = original
                numeric_flat[i] = (plus - minus) / (2.0 * h)
        scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric)) / scale)
    return worst


@dataclass
class AdamState:
    """First / second moment estimates per parameter name"""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(  # pylint: disable=too-many-arguments
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """
    One bias-corrected Adam update, in place on `params` and `state`

    Raises:
        ValueError: A gradient or stored moment has the wrong shape
    """
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, grad in grads.items():
        param = params[name]
        if grad.shape != param.shape:
            raise ValueError(f"adam: grad {grad.shape} != param {param.shape} for '{name}'")
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        if m.shape != param.shape:
            raise ValueError(f"adam: state shape {m.shape} != param {param.shape} for '{name}'")
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        param -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)


class Adam:
    """Adam over a named subset of a ParameterStore"""

    def __init__(
        self,
        store: ParameterStore,
        names: Optional[Sequence[str]] = None,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.store = store
        self.names = list(names) if names is not None else store.names()
        unknown = [n for n in self.names if n not in store]
        if unknown:
            raise KeyError(f"Unknown parameters: {unknown}")
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = AdamState()

    def step(self, lr: float) -> None:
        params = {n: self.store[n].data for n in self.names}
        grads = {
            n: self.store[n].grad if self.store[n].grad is not None else np.zeros_like(params[n])
            for n in self.names
        }
        adam_step(params, grads, self.state, lr, self.beta1, self.beta2, self.eps)


class ParameterStore:
    """Ordered name -> Tensor registry with TOPOCK01 persistence"""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"Parameter '{name}' already exists")
        tensor = Tensor(value, requires_grad=True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def replace(self, name: str, value: np.ndarray) -> Tensor:
        """Swap in a new array (possibly of a different shape) under an existing name"""
        if name not in self._params:
            raise KeyError(f"Unknown parameter '{name}'")
        tensor = Tensor(value, requires_grad=True)
        self._params[name] = tensor
        return tensor

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def parameter_count(self) -> int:
        return int(np.sum([t.size for t in self._params.values()]))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """
        Overwrite values from `state`

        Raises:
            SchemaError: Missing or extra names, or shape mismatch
        """
        if set(state) != set(self._params):
            missing = sorted(set(self._params) - set(state))
            extra = sorted(set(state) - set(self._params))
            raise SchemaError(f"Parameter names differ: missing {missing}, unexpected {extra}")
        for name, value in state.items():
            if value.shape != self._params[name].shape:
                raise SchemaError(
                    f"Shape mismatch for '{name}': {value.shape} vs {self._params[name].shape}"
                )
            self._params[name].data = np.array(value, dtype=np.float64)

    def save(self, path: Union[str, Path], metadata: Optional[dict[str, Any]] = None) -> Path:
        """Write a TOPOCK01 checkpoint: header JSON with names and shapes, then f64 buffers"""
        header = {
            "format_version": CHECKPOINT_VERSION,
            "parameters": [{"name": n, "shape": list(t.shape)} for n, t in self._params.items()],
            "metadata": metadata or {},
        }
        header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
        path = Path(path)
        with path.open("wb") as handle:
            handle.write(CHECKPOINT_MAGIC)
            handle.write(_U32.pack(len(header_bytes)))
            handle.write(header_bytes)
            handle.write(_U32.pack(zlib.crc32(header_bytes)))
            for tensor in self._params.values():
                raw = np.ascontiguousarray(tensor.data, dtype=_F64).tobytes()
                handle.write(raw)
                handle.write(_U32.pack(zlib.crc32(raw)))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> tuple[ParameterStore, dict[str, Any]]:
        """
        Read a TOPOCK01 checkpoint

        Returns:
            tuple: (store, metadata)

        Raises:
            ContainerError, TruncatedFileError, ChecksumError, SchemaError
        """
        path = Path(path)
        data = path.read_bytes()
        offset = 0

        def take(size: int, what: str) -> bytes:
            nonlocal offset
            if offset + size > len(data):
                raise TruncatedFileError(f"{path}: truncated while reading {what}")
            chunk = data[offset : offset + size]
            offset += size
            return chunk

        if take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
            raise ContainerError(f"{path}: not a TOPOCK01 checkpoint")
        header_bytes = take(_U32.unpack(take(4, "header length"))[0], "header")
        if _U32.unpack(take(4, "header checksum"))[0] != zlib.crc32(header_bytes):
            raise ChecksumError(f"{path}: header checksum mismatch")
        header = json.loads(header_bytes.decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise SchemaError(
                f"{path}: checkpoint version {header.get('format_version')} is not supported"
            )
        store = cls()
        for entry in header["parameters"]:
            shape = tuple(int(s) for s in entry["shape"])
            raw = take(8 * int(np.prod(shape, dtype=np.int64)), f"parameter {entry['name']}")
            if _U32.unpack(take(4, "parameter checksum"))[0] != zlib.crc32(raw):
                raise ChecksumError(f"{path}: checksum mismatch for '{entry['name']}'")
            store.add(entry["name"], np.frombuffer(raw, dtype=_F64).reshape(shape))
        if offset != len(data):
            raise ContainerError(f"{path}: {len(data) - offset} trailing bytes")
        return store, header.get("metadata", {})
