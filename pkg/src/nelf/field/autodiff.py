"""Reverse-mode automatic differentiation on numpy arrays.

A :class:`Tape` records array-valued operations as they execute; calling
:meth:`Tape.backward` on a scalar result walks the recorded nodes once in
reverse insertion order (a reverse topological order, since operands always
precede their results) and accumulates gradients into every leaf created with
``requires_grad=True``.

Only operations with at least one grad-requiring ancestor are recorded, so a
forward pass over frozen parameters costs no tape memory.
"""

from __future__ import annotations

import numpy as np


class Tape:
    def __init__(self):
        self._nodes: list[Var] = []

    def leaf(self, value, requires_grad: bool = False) -> "Var":
        return Var(np.asarray(value), self, needs_grad=requires_grad)

    def constant(self, value) -> "Var":
        return Var(np.asarray(value), self, needs_grad=False)

    def _record(self, var: "Var") -> None:
        self._nodes.append(var)

    def custom(self, value: np.ndarray, parents: tuple, vjp) -> "Var":
        """Register an externally computed op with its vector-Jacobian product.

        ``vjp(grad) -> tuple`` must return one gradient per parent (None for
        parents that do not require grad).
        """
        out = Var(value, self, needs_grad=any(p.needs_grad for p in parents))
        if out.needs_grad:
            out._parents = parents
            out._vjp = vjp
            self._record(out)
        return out

    def backward(self, root: "Var", seed=None) -> None:
        if seed is None:
            seed = np.ones_like(root.value)
        root.grad = np.asarray(seed, dtype=root.value.dtype)
        for node in reversed(self._nodes):
            if node.grad is None or node._vjp is None:
                continue
            grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.needs_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g
            node.grad = None  # free intermediate storage as we go

    def clear(self) -> None:
        self._nodes.clear()


class Var:
    __slots__ = ("value", "tape", "needs_grad", "grad", "_parents", "_vjp")

    def __init__(self, value: np.ndarray, tape: Tape, needs_grad: bool = False):
        self.value = value
        self.tape = tape
        self.needs_grad = needs_grad
        self.grad = None
        self._parents: tuple = ()
        self._vjp = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, needs_grad={self.needs_grad})"

    # Operator sugar; ndarray/scalar operands become constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.tape), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def _wrap(x, tape: Tape, dtype=None) -> Var:
    if isinstance(x, Var):
        return x
    a = np.asarray(x)
    if dtype is not None and a.ndim == 0:
        a = a.astype(dtype)  # keep python scalars from promoting float32 graphs
    return Var(a, tape, needs_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a, b, value, vjp_a, vjp_b) -> Var:
    tape = a.tape if isinstance(a, Var) else b.tape
    hint = a.value.dtype if isinstance(a, Var) else b.value.dtype
    a, b = _wrap(a, tape, hint), _wrap(b, tape, hint)
    out = Var(value(a.value, b.value), tape, needs_grad=a.needs_grad or b.needs_grad)
    if out.needs_grad:
        out._parents = (a, b)

        def vjp(g):
            ga = _unbroadcast(vjp_a(g, a.value, b.value), a.value.shape) if a.needs_grad else None
            gb = _unbroadcast(vjp_b(g, a.value, b.value), b.value.shape) if b.needs_grad else None
            return ga, gb

        out._vjp = vjp
        tape._record(out)
    return out


def _unary(a: Var, value: np.ndarray, vjp) -> Var:
    out = Var(value, a.tape, needs_grad=a.needs_grad)
    if out.needs_grad:
        out._parents = (a,)
        out._vjp = lambda g: (vjp(g),)
        a.tape._record(out)
    return out


def add(a, b) -> Var:
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Var:
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Var:
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Var:
    return _binary(
        a, b,
        lambda x, y: x / y,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
    )


def neg(a: Var) -> Var:
    return _unary(a, -a.value, lambda g: -g)


def matmul(a, b) -> Var:
    tape = a.tape if isinstance(a, Var) else b.tape
    a, b = _wrap(a, tape), _wrap(b, tape)  # matmul operands are never scalars
    out = Var(a.value @ b.value, tape, needs_grad=a.needs_grad or b.needs_grad)
    if out.needs_grad:
        out._parents = (a, b)

        def vjp(g):
            ga = g @ b.value.T if a.needs_grad else None
            gb = a.value.T @ g if b.needs_grad else None
            return ga, gb

        out._vjp = vjp
        tape._record(out)
    return out


def affine(x: Var, w: Var, b: Var) -> Var:
    """x @ w + b with the bias broadcast over rows."""
    tape = x.tape
    val = x.value @ w.value
    val += b.value
    out = Var(val, tape, needs_grad=x.needs_grad or w.needs_grad or b.needs_grad)
    if out.needs_grad:
        out._parents = (x, w, b)

        def vjp(g):
            gx = g @ w.value.T if x.needs_grad else None
            gw = x.value.T @ g if w.needs_grad else None
            gb = _unbroadcast(g, b.value.shape) if b.needs_grad else None
            return gx, gw, gb

        out._vjp = vjp
        tape._record(out)
    return out


def relu(a: Var) -> Var:
    val = np.maximum(a.value, 0.0)
    if not a.needs_grad:
        return Var(val, a.tape)
    keep = a.value > 0
    return _unary(a, val, lambda g: g * keep)


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free, minimal temporaries
    out = x * 0.5
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def softplus_values(x: np.ndarray) -> np.ndarray:
    out = np.abs(x)
    np.negative(out, out=out)
    np.exp(out, out=out)
    np.log1p(out, out=out)
    out += np.maximum(x, 0.0)
    return out


def sigmoid(a: Var) -> Var:
    s = sigmoid_values(a.value)
    return _unary(a, s, lambda g: g * s * (1.0 - s))


def softplus(a: Var) -> Var:
    s = sigmoid_values(a.value)
    return _unary(a, softplus_values(a.value), lambda g: g * s)


def exp(a: Var) -> Var:
    e = np.exp(a.value)
    return _unary(a, e, lambda g: g * e)


def log(a: Var) -> Var:
    return _unary(a, np.log(a.value), lambda g: g / a.value)


def absolute(a: Var) -> Var:
    return _unary(a, np.abs(a.value), lambda g: g * np.sign(a.value))


def vsum(a: Var, axis=None, keepdims: bool = False) -> Var:
    val = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        # read-only broadcast view; gradient accumulation is out-of-place
        return np.broadcast_to(g, a.value.shape)

    return _unary(a, val, vjp)


def vmean(a: Var, axis=None, keepdims: bool = False) -> Var:
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(vsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(parts: list[Var], axis: int = -1) -> Var:
    tape = parts[0].tape
    parts = [_wrap(p, tape) for p in parts]
    val = np.concatenate([p.value for p in parts], axis=axis)
    out = Var(val, tape, needs_grad=any(p.needs_grad for p in parts))
    if out.needs_grad:
        out._parents = tuple(parts)
        sizes = [p.value.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            g = np.moveaxis(g, axis, 0)
            outs = []
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                outs.append(
                    np.moveaxis(g[lo:hi], 0, axis) if p.needs_grad else None
                )
            return tuple(outs)

        out._vjp = vjp
        tape._record(out)
    return out


def reshape(a: Var, shape) -> Var:
    return _unary(a, a.value.reshape(shape), lambda g: g.reshape(a.value.shape))


def getitem(a: Var, key) -> Var:
    val = a.value[key]

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, key, g)
        return out

    return _unary(a, val, vjp)


def scatter_rows(values: Var, index: np.ndarray, length: int) -> Var:
    """Rows of ``values`` placed at ``index`` in a zero array of ``length`` rows."""
    shape = (length,) + values.value.shape[1:]
    out_val = np.zeros(shape, dtype=values.value.dtype)
    out_val[index] = values.value
    return _unary(values, out_val, lambda g: g[index])


def softmax(a: Var, axis: int = -1) -> Var:
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return s * (g - dot)

    return _unary(a, s, vjp)


# ---------------------------------------------------------------------------
# Finite-difference checking


def grad_dict(fn, params: dict) -> tuple[float, dict]:
    """Evaluate ``fn(tape, leaves)`` and return (value, gradients by name)."""
    tape = Tape()
    leaves = {k: tape.leaf(v, requires_grad=True) for k, v in params.items()}
    out = fn(tape, leaves)
    tape.backward(out)
    return float(out.value), {
        k: (np.zeros_like(params[k]) if leaves[k].grad is None else leaves[k].grad)
        for k in params
    }


def finite_difference(fn, params: dict, name: str, idx: tuple, h: float = 1e-5) -> float:
    """Central difference of the scalar ``fn`` along one parameter coordinate."""

    def eval_at(delta: float) -> float:
        shifted = {k: v.copy() for k, v in params.items()}
        shifted[name][idx] += delta
        tape = Tape()
        leaves = {k: tape.leaf(v) for k, v in shifted.items()}
        return float(fn(tape, leaves).value)

    return (eval_at(h) - eval_at(-h)) / (2.0 * h)
