"""Reverse-mode automatic differentiation over dense numpy arrays.

A small tape: every ``Tensor`` records its parents and a closure that
accumulates gradients into them.  Operations are tensor-level (matmul,
broadcasting add, elementwise functions, reductions), which keeps training
of the small MLPs used elsewhere in this package tractable without any
deep-learning framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeMismatchError

__all__ = [
    "Tensor",
    "MlpLayer",
    "MlpParams",
    "AdamState",
    "adam_step",
    "mlp_apply",
    "mlp_init",
    "grad_check",
    "GradCheckReport",
    "ACTIVATIONS",
    "concat",
]


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # Remove prepended axes, then sum over axes that were size 1.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node on the autodiff tape wrapping a float64 numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ---- graph traversal -------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeMismatchError("backward() requires a scalar tensor")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray):
        grad = _unbroadcast(grad, self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    # ---- arithmetic ------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data + other.data, parents=(self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(g)
                if other.requires_grad:
                    other._accumulate(g)
            out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data * other.data, parents=(self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(g * other.data)
                if other.requires_grad:
                    other._accumulate(g * self.data)
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data / other.data, parents=(self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(g / other.data)
                if other.requires_grad:
                    other._accumulate(-g * self.data / (other.data ** 2))
            out._backward = backward
        return out

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent: float):
        out = Tensor(self.data ** exponent, parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(
                g * exponent * self.data ** (exponent - 1))
        return out

    def matmul(self, other: "Tensor") -> "Tensor":
        other = self._coerce(other)
        if self.data.shape[-1] != other.data.shape[0]:
            raise ShapeMismatchError(
                f"matmul: inner dimensions {self.data.shape} @ {other.data.shape}")
        out = Tensor(self.data @ other.data, parents=(self, other))
        if out.requires_grad:
            def backward(g):
                if self.requires_grad:
                    self._accumulate(g @ other.data.T)
                if other.requires_grad:
                    other._accumulate(self.data.T @ g)
            out._backward = backward
        return out

    __matmul__ = matmul

    # ---- reductions and reshapes ------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,))
        if out.requires_grad:
            def backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape))
            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def cols(self, start: int, stop: int) -> "Tensor":
        """Contiguous column slice of a 2-D tensor."""
        out = Tensor(self.data[:, start:stop], parents=(self,))
        if out.requires_grad:
            def backward(g):
                full = np.zeros_like(self.data)
                full[:, start:stop] = g
                self._accumulate(full)
            out._backward = backward
        return out

    # ---- elementwise functions ---------------------------------------------

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        out = Tensor(value, parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * value)
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0):
            raise NumericError("log of non-positive value")
        out = Tensor(np.log(self.data), parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def sqrt(self) -> "Tensor":
        return self ** 0.5

    def sigmoid(self) -> "Tensor":
        # clipped away from {0, 1} so downstream logs stay finite
        value = np.clip(_sigmoid(self.data), 1e-15, 1.0 - 1e-15)
        out = Tensor(value, parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * value * (1.0 - value))
        return out

    def softplus(self) -> "Tensor":
        value = _softplus(self.data)
        out = Tensor(value, parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * _sigmoid(self.data))
        return out

    def elu(self) -> "Tensor":
        neg = np.expm1(np.minimum(self.data, 0.0))
        value = np.where(self.data > 0, self.data, neg)
        out = Tensor(value, parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(
                g * np.where(self.data > 0, 1.0, neg + 1.0))
        return out


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    t._accumulate(np.take(g, range(a, b), axis=axis))
        out._backward = backward
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


ACTIVATIONS = {
    "identity": lambda t: t,
    "elu": Tensor.elu,
    "softplus": Tensor.softplus,
    "sigmoid": Tensor.sigmoid,
}


# ---- multilayer perceptrons ------------------------------------------------


@dataclass
class MlpLayer:
    weight: Tensor
    bias: Tensor
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpParams:
    """An MLP as an ordered list of (weight, bias, activation) layers."""

    layers: list

    @property
    def in_width(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def out_width(self) -> int:
        return self.layers[-1].weight.shape[1]

    def tensors(self) -> list:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def arrays(self) -> list:
        return [t.data for t in self.tensors()]

    def set_arrays(self, arrays) -> None:
        for t, a in zip(self.tensors(), arrays):
            t.data = _as_array(a).reshape(t.data.shape)

    def copy(self) -> "MlpParams":
        return MlpParams([
            MlpLayer(Tensor(l.weight.data.copy(), requires_grad=True),
                     Tensor(l.bias.data.copy(), requires_grad=True),
                     l.activation)
            for l in self.layers
        ])


def mlp_init(widths, rng: np.random.Generator,
             hidden_activation: str = "elu",
             output_activation: str = "identity") -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        act = output_activation if i == len(widths) - 2 else hidden_activation
        layers.append(MlpLayer(Tensor(weight, requires_grad=True),
                               Tensor(np.zeros(fan_out), requires_grad=True),
                               act))
    return MlpParams(layers)


def mlp_apply(params: MlpParams, x) -> Tensor:
    """Forward pass; differentiable w.r.t. both params and input."""
    h = x if isinstance(x, Tensor) else Tensor(x)
    if h.data.ndim != 2:
        raise ShapeMismatchError(f"mlp_apply expects a 2-D batch, got {h.shape}")
    if h.data.shape[1] != params.in_width:
        raise ShapeMismatchError(
            f"input width {h.data.shape[1]} != first layer width {params.in_width}")
    for layer in params.layers:
        h = ACTIVATIONS[layer.activation](h @ layer.weight + layer.bias)
    return h


# ---- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-array first/second moment accumulators plus step counter."""

    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays, lr: float = 1e-3, **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays],
                   lr=lr, **kwargs)


def adam_step(state: AdamState, params, grads):
    """One Adam update with bias correction.

    `params` and `grads` are parallel lists of numpy arrays (or an
    ``MlpParams``, in which case updated ``MlpParams`` are returned).
    Pure: fresh arrays and a fresh state are returned.
    """
    if isinstance(params, MlpParams):
        new_state, new_arrays = adam_step(state, params.arrays(), grads)
        out = params.copy()
        out.set_arrays(new_arrays)
        return new_state, out

    if len(params) != len(grads):
        raise ShapeMismatchError("params/grads length mismatch")
    t = state.t + 1
    new_m, new_v, new_p = [], [], []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = _as_array(g)
        if g.shape != np.shape(p):
            raise ShapeMismatchError(f"gradient shape mismatch at index {i}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at parameter index {i}")
        m = state.beta1 * state.m[i] + (1 - state.beta1) * g
        v = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    new_state = AdamState(m=new_m, v=new_v, t=t, lr=state.lr,
                          beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_state, new_p


# ---- gradient checking --------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_tensor: int
    worst_coordinate: int
    analytic: float = 0.0
    numeric: float = 0.0
    ok: bool = field(init=False, default=False)

    def __post_init__(self):
        self.ok = self.max_rel_error < 1e-4


def grad_check(loss_fn, tensors, h: float = 1e-5,
               analytic_override=None) -> GradCheckReport:
    """Compare reverse-mode gradients of `loss_fn()` against central differences.

    `loss_fn` is a zero-argument closure over `tensors` returning a scalar
    Tensor.  `analytic_override`, when given, replaces the tape gradients
    (used to verify that corrupted gradients are flagged).
    """
    if not 0 < h <= 1e-2:
        raise ValueError("h must be in (0, 1e-2]")
    loss = loss_fn()
    if not np.all(np.isfinite(loss.data)):
        raise NumericError("loss non-finite at the evaluation point")
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]
    if analytic_override is not None:
        analytic = [_as_array(a) for a in analytic_override]

    worst = (0.0, 0, 0, 0.0, 0.0)
    for ti, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        a_flat = analytic[ti].reshape(-1)
        for ci in range(flat.size):
            orig = flat[ci]
            flat[ci] = orig + h
            up = float(loss_fn().data)
            flat[ci] = orig - h
            down = float(loss_fn().data)
            flat[ci] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(
                    f"loss non-finite probing tensor {ti} coordinate {ci}")
            numeric = (up - down) / (2 * h)
            a = float(a_flat[ci])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            if rel > worst[0]:
                worst = (rel, ti, ci, a, numeric)
    return GradCheckReport(max_rel_error=worst[0], worst_tensor=worst[1],
                           worst_coordinate=worst[2], analytic=worst[3],
                           numeric=worst[4])
