"""Reverse-mode differentiation on dense float64 arrays.

A ``Tape`` records primitive operations in execution order (which is a
topological order by construction), so the backward sweep is a single
reversed pass with no recursion. Only the primitives needed by the value
architectures and losses in this package are provided; this is not a
general-purpose autodiff engine.

Everything is float64. Non-finite values are rejected at graph
boundaries (leaves and requested outputs); ``Tape(validate=True)``
additionally checks every intermediate, which is what the tests use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GraphError",
    "Tape",
    "Node",
    "MlpParams",
    "AdamState",
    "init_mlp",
    "mlp_apply",
    "adam_step",
    "polyak_update",
    "finite_diff_grad",
    "gelu_value",
]

# tanh approximation of GELU: 0.5*x*(1 + tanh(c0*(x + c1*x^3)))
_GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_C1 = 0.044715

# Added under the square root in L2-norm *gradients* only; the forward
# value stays exact so distances satisfy d(x, x) = 0 exactly.
NORM_GRAD_EPS = 1e-12


class GraphError(ValueError):
    """Shape mismatch, non-finite value, or tape misuse."""


def _as_f64(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Node:
    """One value in the graph. Created through Tape methods or operators."""

    __slots__ = ("tape", "value", "grad", "name", "needs_grad", "_backward")

    def __init__(self, tape, value, name, needs_grad, backward=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.name = name
        self.needs_grad = needs_grad
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    # Scalar-flavored arithmetic sugar; arrays go through the Tape methods.
    def __add__(self, other):
        return self.tape.add(self, self.tape.wrap(other))

    def __radd__(self, other):
        return self.tape.add(self.tape.wrap(other), self)

    def __sub__(self, other):
        return self.tape.sub(self, self.tape.wrap(other))

    def __rsub__(self, other):
        return self.tape.sub(self.tape.wrap(other), self)

    def __mul__(self, other):
        return self.tape.mul(self, self.tape.wrap(other))

    def __rmul__(self, other):
        return self.tape.mul(self.tape.wrap(other), self)

    def __neg__(self):
        return self.tape.neg(self)

    def __repr__(self):
        return f"Node({self.name}, shape={self.value.shape})"


_GELU_K = _GELU_C0 * _GELU_C1


def gelu_value(x: np.ndarray) -> np.ndarray:
    """Forward GELU (tanh approximation), shared by tape and plain paths."""
    t = np.tanh(x * (_GELU_C0 + _GELU_K * (x * x)))
    t += 1.0
    t *= 0.5 * x
    return t


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Execution-ordered primitive graph with a single backward sweep."""

    def __init__(self, validate: bool = False):
        self.nodes: list[Node] = []
        self.validate = validate
        self._ran_backward = False

    # ---- node construction -------------------------------------------------

    def _register(self, value, name, inputs, backward):
        value = _as_f64(value)
        if self.validate and not np.all(np.isfinite(value)):
            raise GraphError(f"non-finite output at node '{name}#{len(self.nodes)}'")
        needs = any(inp.needs_grad for inp in inputs)
        node = Node(self, value, f"{name}#{len(self.nodes)}", needs,
                    backward if needs else None)
        self.nodes.append(node)
        return node

    def _check_same_tape(self, name, *nodes):
        for n in nodes:
            if n.tape is not self:
                raise GraphError(f"{name}: input from a different tape")

    def leaf(self, value, name="leaf") -> Node:
        """Trainable input; gradient is accumulated here."""
        value = _as_f64(value)
        if not np.all(np.isfinite(value)):
            raise GraphError(f"non-finite leaf '{name}'")
        return self._new_leaf(value, name, True)

    def constant(self, value, name="const") -> Node:
        """Input that never receives gradient."""
        value = _as_f64(value)
        if not np.all(np.isfinite(value)):
            raise GraphError(f"non-finite constant '{name}'")
        return self._new_leaf(value, name, False)

    def _new_leaf(self, value, name, needs_grad):
        node = Node(self, value, f"{name}#{len(self.nodes)}", needs_grad, None)
        self.nodes.append(node)
        return node

    def wrap(self, other) -> Node:
        if isinstance(other, Node):
            if other.tape is not self:
                raise GraphError("operands belong to different tapes")
            return other
        return self.constant(other, name="scalar")

    def primitive(self, value, inputs, backward, name="custom") -> Node:
        """Hook for caller-defined primitives with a hand-coded backward."""
        self._check_same_tape(name, *inputs)
        return self._register(value, name, inputs, backward)

    @staticmethod
    def _accum(node: Node, grad: np.ndarray):
        if not node.needs_grad:
            return
        if node.grad is None:
            node.grad = grad.copy() if grad.base is not None else grad
        else:
            node.grad = node.grad + grad

    # ---- primitives ----------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        self._check_same_tape("add", a, b)
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise GraphError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

        def backward(g):
            self._accum(a, _unbroadcast(g, a.shape))
            self._accum(b, _unbroadcast(g, b.shape))

        return self._register(a.value + b.value, "add", (a, b), backward)

    def sub(self, a: Node, b: Node) -> Node:
        self._check_same_tape("sub", a, b)
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise GraphError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None

        def backward(g):
            self._accum(a, _unbroadcast(g, a.shape))
            self._accum(b, _unbroadcast(-g, b.shape))

        return self._register(a.value - b.value, "sub", (a, b), backward)

    def mul(self, a: Node, b: Node) -> Node:
        self._check_same_tape("mul", a, b)
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise GraphError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

        def backward(g):
            self._accum(a, _unbroadcast(g * b.value, a.shape))
            self._accum(b, _unbroadcast(g * a.value, b.shape))

        return self._register(a.value * b.value, "mul", (a, b), backward)

    def neg(self, a: Node) -> Node:
        def backward(g):
            self._accum(a, -g)

        return self._register(-a.value, "neg", (a,), backward)

    def matmul(self, a: Node, b: Node) -> Node:
        self._check_same_tape("matmul", a, b)
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise GraphError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

        def backward(g):
            self._accum(a, g @ b.value.T)
            self._accum(b, a.value.T @ g)

        return self._register(a.value @ b.value, "matmul", (a, b), backward)

    def concat(self, a: Node, b: Node) -> Node:
        """Column-wise concatenation of two matrices."""
        self._check_same_tape("concat", a, b)
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[0] != b.shape[0]:
            raise GraphError(f"concat: incompatible shapes {a.shape}, {b.shape}")
        na = a.shape[1]

        def backward(g):
            self._accum(a, g[:, :na])
            self._accum(b, g[:, na:])

        return self._register(np.concatenate([a.value, b.value], axis=1),
                              "concat", (a, b), backward)

    def slice_cols(self, a: Node, start: int, stop: int) -> Node:
        if a.value.ndim != 2 or not (0 <= start <= stop <= a.shape[1]):
            raise GraphError(f"slice_cols: bad range [{start}:{stop}] for shape {a.shape}")

        def backward(g):
            full = np.zeros_like(a.value)
            full[:, start:stop] = g
            self._accum(a, full)

        return self._register(a.value[:, start:stop].copy(), "slice_cols", (a,), backward)

    def reshape(self, a: Node, shape: tuple) -> Node:
        if int(np.prod(shape)) != a.value.size:
            raise GraphError(f"reshape: cannot view {a.shape} as {shape}")

        def backward(g):
            self._accum(a, g.reshape(a.shape))

        return self._register(a.value.reshape(shape), "reshape", (a,), backward)

    def gelu(self, a: Node) -> Node:
        x = a.value
        x2 = x * x
        t = np.tanh(x * (_GELU_C0 + _GELU_K * x2))

        def backward(g):
            # d/dx [0.5*x*(1+t)] with t = tanh(x*(c0 + c0*c1*x^2))
            local = (1.0 - t * t) * (0.5 * _GELU_C0 + (1.5 * _GELU_K) * x2)
            local *= x
            local += 0.5 * (1.0 + t)
            self._accum(a, g * local)

        return self._register(0.5 * x * (1.0 + t), "gelu", (a,), backward)

    def relu(self, a: Node) -> Node:
        """Positive part (x)+; subgradient 0 at the kink."""
        mask = a.value > 0.0

        def backward(g):
            self._accum(a, g * mask)

        return self._register(np.where(mask, a.value, 0.0), "relu", (a,), backward)

    def square(self, a: Node) -> Node:
        def backward(g):
            self._accum(a, g * (2.0 * a.value))

        return self._register(a.value * a.value, "square", (a,), backward)

    def exp(self, a: Node) -> Node:
        out = np.exp(a.value)

        def backward(g):
            self._accum(a, g * out)

        return self._register(out, "exp", (a,), backward)

    def log(self, a: Node) -> Node:
        if np.any(a.value <= 0.0):
            raise GraphError("log: non-positive input")

        def backward(g):
            self._accum(a, g / a.value)

        return self._register(np.log(a.value), "log", (a,), backward)

    def sigmoid(self, a: Node) -> Node:
        out = 1.0 / (1.0 + np.exp(-a.value))

        def backward(g):
            self._accum(a, g * out * (1.0 - out))

        return self._register(out, "sigmoid", (a,), backward)

    def l2norm_rows(self, a: Node) -> Node:
        """Row-wise Euclidean norm of a matrix, shape (B, D) -> (B,).

        Forward is the exact norm; the backward denominator is padded by
        NORM_GRAD_EPS so coincident encoder outputs do not produce NaN.
        """
        if a.value.ndim != 2:
            raise GraphError(f"l2norm_rows: expected a matrix, got shape {a.shape}")
        sq = np.einsum("ij,ij->i", a.value, a.value)
        out = np.sqrt(sq)

        def backward(g):
            denom = np.sqrt(sq + NORM_GRAD_EPS)
            self._accum(a, (g / denom)[:, None] * a.value)

        return self._register(out, "l2norm_rows", (a,), backward)

    def reduce_sum(self, a: Node, axis: int | None = None) -> Node:
        def backward(g):
            if axis is None:
                self._accum(a, np.full(a.shape, float(g)))
            else:
                self._accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

        return self._register(a.value.sum(axis=axis), "sum", (a,), backward)

    def reduce_mean(self, a: Node) -> Node:
        n = a.value.size

        def backward(g):
            self._accum(a, np.full(a.shape, float(g) / n))

        return self._register(a.value.mean(), "mean", (a,), backward)

    def reduce_max(self, a: Node, axis: int) -> Node:
        """Max over one axis; the subgradient goes to the first argmax."""
        out = a.value.max(axis=axis)
        idx = a.value.argmax(axis=axis)

        def backward(g):
            full = np.zeros_like(a.value)
            np.put_along_axis(full, np.expand_dims(idx, axis),
                              np.expand_dims(g, axis), axis=axis)
            self._accum(a, full)

        return self._register(out, "max", (a,), backward)

    def clip(self, a: Node, lo: float, hi: float) -> Node:
        inside = (a.value >= lo) & (a.value <= hi)

        def backward(g):
            self._accum(a, g * inside)

        return self._register(np.clip(a.value, lo, hi), "clip", (a,), backward)

    def stop_gradient(self, a: Node) -> Node:
        node = Node(self, a.value, f"stopgrad#{len(self.nodes)}", False, None)
        self.nodes.append(node)
        return node

    # ---- backward sweep ------------------------------------------------------

    def backward(self, output: Node, seed=None) -> None:
        if output.tape is not self:
            raise GraphError("backward: output from a different tape")
        if seed is None:
            if output.value.size != 1:
                raise GraphError("backward: scalar output required when no seed given")
            seed = np.ones_like(output.value)
        else:
            seed = _as_f64(seed)
            if seed.shape != output.value.shape:
                raise GraphError("backward: seed shape mismatch")
        if not np.all(np.isfinite(output.value)):
            raise GraphError(f"non-finite output at node '{output.name}'")
        if output.needs_grad:
            output.grad = seed
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        self._ran_backward = True

    def grad(self, node: Node) -> np.ndarray:
        if not self._ran_backward:
            raise GraphError("grad: backward has not been run on this tape")
        if node.grad is None:
            return np.zeros_like(node.value)
        return node.grad


# ---- dense networks -----------------------------------------------------------


@dataclass
class MlpParams:
    """Weights and biases of a GELU MLP; no activation after the last layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def tree(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def init_mlp(rng: np.random.Generator, sizes: list[int],
             final_scale: float = 1.0) -> MlpParams:
    """Fan-in-scaled uniform init; the last layer can be shrunk toward zero.

    ``sizes`` is [in, hidden..., out]; layer count must be >= 1.
    """
    if len(sizes) < 2:
        raise ValueError("init_mlp: need at least input and output sizes")
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in = sizes[i]
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(sizes[i], sizes[i + 1]))
        b = rng.uniform(-bound, bound, size=(sizes[i + 1],))
        if i == len(sizes) - 2 and final_scale != 1.0:
            w *= final_scale
            b *= final_scale
        weights.append(w)
        biases.append(b)
    return MlpParams(weights, biases)


def mlp_apply(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain forward pass: affine -> GELU per hidden layer, affine output."""
    x = _as_f64(x)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise GraphError(f"mlp_apply: input shape {x.shape} does not match "
                         f"in_dim {params.in_dim}")
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = gelu_value(h)
    return h


class LiftedMlp:
    """Tape view of an MlpParams bundle."""

    def __init__(self, tape: Tape, params: MlpParams, trainable: bool = True,
                 name: str = "mlp"):
        make = tape.leaf if trainable else tape.constant
        self.tape = tape
        self.weights = [make(w, f"{name}.w{i}") for i, w in enumerate(params.weights)]
        self.biases = [make(b, f"{name}.b{i}") for i, b in enumerate(params.biases)]

    def __call__(self, x: Node) -> Node:
        t = self.tape
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = t.add(t.matmul(h, w), b)
            if i < last:
                h = t.gelu(h)
        return h

    def tree(self, prefix: str) -> dict[str, Node]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out


# ---- optimizer ------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    mean: dict[str, np.ndarray]
    var: dict[str, np.ndarray]
    count: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(mean={k: np.zeros_like(v) for k, v in params.items()},
                   var={k: np.zeros_like(v) for k, v in params.items()})

    def copy(self) -> "AdamState":
        return AdamState(mean={k: v.copy() for k, v in self.mean.items()},
                         var={k: v.copy() for k, v in self.var.items()},
                         count=self.count)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam; parameter arrays are updated in place.

    lr = 0 is admitted so a training step can be exercised as a pure
    target-network update with every parameter frozen.
    """
    if lr < 0.0:
        raise ValueError("adam_step: lr must not be negative")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GraphError(f"adam_step: non-finite gradient for '{name}'")
        if g.shape != params[name].shape:
            raise GraphError(f"adam_step: gradient shape mismatch for '{name}'")
    state.count += 1
    t = state.count
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = state.mean[name]
        v = state.var[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        params[name] -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return params, state


def polyak_update(target: dict[str, np.ndarray], online: dict[str, np.ndarray],
                  rate: float) -> dict[str, np.ndarray]:
    """target <- (1 - rate) * target + rate * online, elementwise, in place."""
    for name, src in online.items():
        dst = target[name]
        if dst.shape != src.shape:
            raise GraphError(f"polyak_update: shape mismatch for '{name}'")
        dst *= 1.0 - rate
        dst += rate * src
    return target


# ---- finite differences ----------------------------------------------------------


def finite_diff_grad(fn, point: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, per coordinate."""
    if step <= 0.0:
        raise ValueError("finite_diff_grad: step must be positive")
    point = _as_f64(point)
    flat = point.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(point.reshape(point.shape))
        flat[i] = orig - step
        lo = fn(point.reshape(point.shape))
        flat[i] = orig
        grad[i] = (hi - lo) / (2.0 * step)
    return grad.reshape(point.shape)
