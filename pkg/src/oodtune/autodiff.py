"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

The graph is recorded implicitly: every operation returns a new Tensor that
keeps references to its parents and a closure which propagates the output
adjoint back to them.  ``backward`` runs one topologically ordered sweep over
the recorded nodes.  Gradients are available with respect to parameters
(training) and with respect to inputs (sampling, input perturbation).

Scope is deliberately small: 2-D matmul, broadcast add/sub/mul, a handful of
elementwise maps and reductions.  No GPU, no convolutions, no mixed precision.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class GradError(RuntimeError):
    """Misuse of the gradient tape (re-running backward, missing grads...)."""


class Tensor:
    """Dense row-major float64 array participating in the gradient graph.

    ``grad`` is allocated (zero-filled) as soon as ``requires_grad`` is set, so
    tensors that never participate in a backward pass report a zero gradient.
    All stored values must be finite; operations producing NaN/Inf raise.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backfn", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ValueError("tensor holds non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple = ()
        self._backfn: Optional[Callable[[np.ndarray], None]] = None
        self._spent = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def detach(self) -> "Tensor":
        """Constant view sharing this tensor's buffer, outside the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Small amount of operator sugar for composite code.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)


def _result(data: np.ndarray, parents: Sequence[Tensor],
            backfn: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, recording parents only when gradients can flow."""
    if any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._backfn = backfn
        return out
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum the broadcast axes of ``grad`` away so it matches ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.data.shape)
    return _result(a.data + b.data, (a, b), backfn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(g, b.data.shape)
    return _result(a.data - b.data, (a, b), backfn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.data.shape)
    return _result(a.data * b.data, (a, b), backfn)


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += k * g
    return _result(a.data * k, (a,), backfn)


def div_scalar(a: Tensor, k: float) -> Tensor:
    k = float(k)
    if k == 0.0:
        raise ZeroDivisionError("division of tensor by zero scalar")
    return scale(a, 1.0 / k)


def add_scalar(a: Tensor, k: float) -> Tensor:
    k = float(k)

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += g
    return _result(a.data + k, (a,), backfn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += g @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ g
    return _result(a.data @ b.data, (a, b), backfn)


def relu(a: Tensor) -> Tensor:
    # Subgradient at exactly 0 is 0.
    mask = a.data > 0.0

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += g * mask
    return _result(np.where(mask, a.data, 0.0), (a,), backfn)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out_data = np.exp(a.data)

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += g * out_data
    return _result(out_data, (a,), backfn)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(a.data)

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += g / a.data
    return _result(out_data, (a,), backfn)


def reduce_sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    def backfn(g: np.ndarray) -> None:
        if not a.requires_grad:
            return
        if axis is None:
            a.grad += g  # g is scalar-shaped, broadcasts
        elif keepdims:
            a.grad += g
        else:
            a.grad += np.expand_dims(g, axis)
    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backfn)


def reduce_mean(a: Tensor) -> Tensor:
    n = a.data.size
    if n == 0:
        raise ValueError("mean of empty tensor")

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += g / n
    return _result(np.asarray(a.data.mean()), (a,), backfn)


def reduce_max(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    if a.data.size == 0:
        raise ValueError("max of empty tensor")
    out_data = a.data.max(axis=axis, keepdims=keepdims)
    # Ties route the gradient to the lowest-index maximizer (argmax picks it).
    if axis is None:
        flat_idx = int(a.data.argmax())
    else:
        arg = a.data.argmax(axis=axis)

    def backfn(g: np.ndarray) -> None:
        if not a.requires_grad:
            return
        buf = np.zeros_like(a.data)
        if axis is None:
            buf.reshape(-1)[flat_idx] = np.asarray(g).reshape(())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            np.put_along_axis(buf, np.expand_dims(arg, axis), gg, axis=axis)
        a.grad += buf
    return _result(np.asarray(out_data), (a,), backfn)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    if not lo < hi:
        raise ValueError(f"clip bounds must satisfy lo < hi, got [{lo}, {hi}]")
    # Pass-through gradient on the closed interval, zero outside.
    mask = (a.data >= lo) & (a.data <= hi)

    def backfn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.grad += g * mask
    return _result(np.clip(a.data, lo, hi), (a,), backfn)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(out: Tensor) -> list:
    """Interior nodes reachable from ``out``, parents before children."""
    order: list = []
    seen: set = set()
    stack: list = [(out, False)]
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
            if p._backfn is not None:
                stack.append((p, False))
    return order


def backward(out: Tensor) -> None:
    """Populate grads of every requires_grad ancestor of a scalar ``out``.

    A graph may be swept once; calling backward again through any node that a
    previous sweep already visited raises (re-record the computation instead).
    """
    if out.data.size != 1:
        raise ValueError(f"backward requires a scalar output, got shape {out.data.shape}")
    order = _topo_order(out)
    for node in order:
        if node._spent:
            raise GradError("backward already ran through this graph; re-record it")
    if out.requires_grad:
        out.grad += np.ones_like(out.data)
    for node in reversed(order):
        node._backfn(node.grad)
        node._spent = True


# ---------------------------------------------------------------------------
# gradient checking and the optimizer step
# ---------------------------------------------------------------------------

def grad_check(fn: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` must be a deterministic tensor->scalar map built from the
    primitives above.  Relative error per coordinate is
    |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValueError(f"step h must lie in [1e-7, 1e-4], got {h}")

    def evaluate(values: np.ndarray) -> float:
        out = fn(Tensor(values))
        if out.data.size != 1:
            raise ValueError("grad_check target must return a scalar")
        val = float(out.data.reshape(()))
        if not np.isfinite(val):
            raise FloatingPointError("grad_check target returned a non-finite value")
        return val

    probe = Tensor(x.data.copy(), requires_grad=True)
    backward(fn(probe))
    analytic = probe.grad.reshape(-1)

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = evaluate(bumped.reshape(x.data.shape))
        bumped[i] = flat[i] - h
        f_minus = evaluate(bumped.reshape(x.data.shape))
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(analytic[i] - numeric) / (abs(analytic[i]) + abs(numeric) + 1e-12)
        worst = max(worst, err)
    return worst


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """p <- p - lr * grad(p) for every parameter, then zero the grads.

    Loss-style objectives are minimized; maximize by negating the objective
    before backward.  Buffers are rebound, not mutated, so detached views
    taken before the step keep their old values.
    """
    for p in params:
        if p.grad is None:
            raise GradError("sgd_step on a tensor with no gradient buffer")
        p.data = p.data - lr * p.grad
        p.grad = np.zeros_like(p.data)
