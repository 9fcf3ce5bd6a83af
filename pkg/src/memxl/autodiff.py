"""Dense-tensor engine with reverse-mode automatic differentiation.

numpy stores the raw arrays; this module records the operation graph and
derives gradients by walking it backwards. Double precision is the
default so finite-difference verification has headroom; float32 is
accepted for faster training runs.

Contract notes:
  * ``backward`` may run once per recorded graph; the caller zeroes
    grads between steps.
  * ``Tensor.detach`` is a stop-gradient boundary: nothing behind it
    ever accumulates grad.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Suspend graph recording (evaluation, pruning sweeps, numeric probes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """N-dimensional real array participating in a reverse-mode gradient graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None
        self._backward_done = False

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
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Stop-gradient boundary: same values, no history, never accumulates grad."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype=np.float64) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], vjp) -> Tensor:
    requires = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


# -- primitive operations -----------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(a.data / b.data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def pow_const(a: Tensor, p: float) -> Tensor:
    def vjp(g):
        return (g * p * a.data ** (p - 1),)

    return _make(a.data**p, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return _make(out_data, (a,), vjp)


def log(a: Tensor) -> Tensor:
    def vjp(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), vjp)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out_data,)

    return _make(out_data, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    def vjp(g):
        return (g * (a.data > 0),)

    return _make(np.maximum(a.data, 0), (a,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy leading-dimension broadcasting."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def vjp(g):
        ga = _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape)
        return ga, gb

    return _make(np.matmul(a.data, b.data), (a, b), vjp)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return _make(a.data.transpose(axes), (a,), vjp)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    def vjp(g):
        return (g.reshape(a.shape),)

    return _make(a.data.reshape(shape), (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    extent = a.shape[axis]
    if start < 0 or length < 0 or start + length > extent:
        raise ValueError(f"narrow [{start}, {start + length}) out of range for axis {axis} of size {extent}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def vjp(g):
        ga = np.zeros(a.shape, dtype=g.dtype)
        ga[index] = g
        return (ga,)

    return _make(a.data[index], (a,), vjp)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), _as_tensor(1.0 / count, a.dtype))


def masked_fill(a: Tensor, fill_mask: np.ndarray, value: float) -> Tensor:
    """Overwrite positions where ``fill_mask`` is True with ``value`` (no grad there)."""
    mask = np.broadcast_to(fill_mask, a.shape)

    def vjp(g):
        return (np.where(mask, 0.0, g),)

    return _make(np.where(mask, value, a.data), (a,), vjp)


def gather_last(a: Tensor, index: np.ndarray) -> Tensor:
    """out[..., k] = a[..., index[..., k]] along the last axis.

    ``index`` broadcasts over leading axes; backward scatter-adds,
    so repeated indices accumulate.
    """
    out_shape = a.shape[:-1] + (index.shape[-1],)
    idx_full = np.broadcast_to(index, out_shape)
    out_data = np.take_along_axis(a.data, idx_full, axis=-1)

    def vjp(g):
        ga = np.zeros(a.shape, dtype=g.dtype)
        flat_ga = ga.reshape(-1, a.shape[-1])
        flat_idx = idx_full.reshape(-1, idx_full.shape[-1])
        rows = np.arange(flat_ga.shape[0])[:, None]
        np.add.at(flat_ga, (rows, flat_idx), g.reshape(flat_idx.shape))
        return (ga,)

    return _make(out_data, (a,), vjp)


def index_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """out = table[ids]; backward scatter-adds into the indexed rows."""
    ids = np.asarray(ids)

    def vjp(g):
        gt = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(table.data[ids], (table,), vjp)


# -- composed functions --------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; subtracts the row max before exponentiation."""
    shift = np.max(x.data, axis=axis, keepdims=True)
    e = exp(sub(x, Tensor(shift)))
    return div(e, sum_(e, axis=axis, keepdims=True))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, _as_tensor(eps, x.dtype))))
    return add(mul(normed, gain), bias)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood in nats of ``targets`` under ``logits``.

    ``logits`` is [T, V] or [B, T, V]; ``targets`` matches the leading shape.
    """
    targets = np.asarray(targets)
    vocab = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise ValueError(f"target id out of range [0, {vocab})")
    shift = np.max(logits.data, axis=-1, keepdims=True)
    e = exp(sub(logits, Tensor(shift)))
    lse = add(log(sum_(e, axis=-1, keepdims=True)), Tensor(shift))
    picked = gather_last(logits, targets[..., None])
    per_token = sub(lse, picked)
    return mul(sum_(per_token), _as_tensor(1.0 / targets.size, logits.dtype))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Zero entries i.i.d. with probability ``rate`` and rescale survivors.

    Identity at evaluation time and at rate 0 (no RNG consumed in either case).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return mul(x, Tensor((keep / (1.0 - rate)).astype(x.dtype)))


# -- backward ------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate grads of everything reachable from the scalar ``loss``.

    One invocation per recorded graph; a second call on the same loss
    is rejected.
    """
    if loss.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward_done:
        raise RuntimeError("backward already ran on this graph; rebuild the graph before calling again")
    if not loss.requires_grad:
        raise RuntimeError("loss does not require grad: no graph was recorded")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones((), dtype=loss.dtype)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(node.grad)):
            if not parent.requires_grad or pg is None:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
    loss._backward_done = True


# -- finite-difference verification ---------------------------------------

@dataclass
class ParamCheck:
    """Per-parameter comparison of analytic and central-difference grads."""

    analytic_absmax: float
    numeric_absmax: float
    rel_error: float


@dataclass
class FiniteDiffReport:
    checks: dict[str, ParamCheck]
    step: float
    tol: float

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def failures(self) -> list[str]:
        return [n for n, c in self.checks.items() if c.rel_error >= self.tol]

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{status}: max relative error {self.max_rel_error:.3e} over {len(self.checks)} parameters (tol {self.tol:g})"


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Iterable[tuple[str, Tensor]],
    step: float = 1e-5,
    tol: float = 1e-5,
) -> FiniteDiffReport:
    """Compare analytic grads of ``f()`` against central finite differences.

    ``f`` must be a deterministic scalar-valued map of the current
    parameter values (fix all stochastic inputs before calling). The
    relative error of a parameter is its max elementwise discrepancy
    normalized by the larger of the two gradients' max magnitudes.
    """
    params = list(params)

    probe_a = f()
    probe_b = f()
    if probe_a.data.tobytes() != probe_b.data.tobytes():
        raise RuntimeError(
            "finite-diff check aborted: f() is not deterministic "
            f"({float(probe_a.data)!r} vs {float(probe_b.data)!r}); fix RNG draws and masks first"
        )

    for _, p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros(p.shape, dtype=p.dtype))
        for name, p in params
    }

    checks: dict[str, ParamCheck] = {}
    with no_grad():
        for name, p in params:
            flat = p.data.reshape(-1)
            numeric = np.empty_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = float(f().data)
                flat[i] = orig - step
                f_minus = float(f().data)
                flat[i] = orig
                numeric[i] = (f_plus - f_minus) / (2.0 * step)
            numeric = numeric.reshape(p.shape)
            a = analytic[name]
            scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
            checks[name] = ParamCheck(
                analytic_absmax=float(np.abs(a).max(initial=0.0)),
                numeric_absmax=float(np.abs(numeric).max(initial=0.0)),
                rel_error=float(np.abs(a - numeric).max(initial=0.0) / scale),
            )
    return FiniteDiffReport(checks=checks, step=step, tol=tol)
