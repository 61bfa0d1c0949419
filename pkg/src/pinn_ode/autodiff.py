"""Reverse-mode tape with forward second-order Taylor propagation in time.

Two mechanisms live here and compose:

* ``Tape``/``Node`` — reverse-mode automatic differentiation over numpy
  arrays. Only trainable parameters become tape leaves; collocation times
  and other fixed inputs stay plain ndarrays, so the same code evaluates
  with or without gradient tracking.
* ``Taylor2`` — a triple ``(value, d1, d2)`` of Taylor coefficients with
  respect to the scalar time input. Seeding the input as ``(t, 1, 0)`` and
  propagating through the arithmetic below yields exact first and second
  time derivatives of every downstream quantity. All three coefficients
  are ordinary primal values on the tape, so a single reverse sweep gives
  the gradient of any scalar loss (including ones built from ``d1``/``d2``)
  with respect to the parameters.

``d1``/``d2`` use ``None`` to mean "identically zero"; arithmetic skips the
corresponding work, which keeps plain value evaluation cheap.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericsError

__all__ = [
    "Tape",
    "Node",
    "Taylor2",
    "seed_input",
    "taylor_apply",
    "backward",
    "grad_check",
    "value_of",
    "sin",
    "cos",
    "exp",
    "tanh",
    "sigmoid",
    "relu",
    "step",
    "softplus",
    "matmul",
    "affine",
    "mean",
    "row",
    "slice1d",
]


class Tape:
    """Ordered record of primitive operations plus the parameter leaf.

    Nodes append themselves on construction, so list order is topological.
    ``param_vector`` registers the flat trainable vector; its accumulated
    adjoint after a reverse sweep is the loss gradient.
    """

    def __init__(self):
        self.nodes = []
        self.theta_node = None

    def param_vector(self, theta):
        """Register the flat parameter vector as the gradient target.

        Several forward passes may run on one tape (collocation, data,
        initial-condition points); they all share the same leaf, so
        re-registering identical values returns the existing node.
        """
        theta = np.asarray(theta, dtype=np.float64)
        if self.theta_node is not None:
            held = self.theta_node.value
            if held is theta or np.array_equal(held, theta):
                return self.theta_node
            raise ValueError("a different parameter vector is already on this tape")
        node = Node(self, theta, (), ())
        self.theta_node = node
        return node


class Node:
    """One recorded primitive: value, operand links, and their vjps.

    A vjp of ``None`` means identity (the adjoint passes through).
    ``grad_owned`` tracks whether ``grad`` may be mutated in place.
    """

    __slots__ = ("tape", "value", "parents", "vjps", "grad", "grad_owned")

    def __init__(self, tape, value, parents, vjps):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.grad = None
        self.grad_owned = False
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape if hasattr(self.value, "shape") else ()

    def __repr__(self):
        return f"Node(shape={np.shape(self.value)})"

    # -- operator overloads; non-Node operands are treated as constants --

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return Node(self.tape, -self.value, (self,), (_neg_vjp,))

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise TypeError("division by a tape node is not a supported primitive")
        return self * (1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def _neg_vjp(g):
    return -g


def _same_tape(a, b):
    if a.tape is not b.tape:
        raise ValueError("operands were recorded on different tapes")
    return a.tape


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if np.shape(g) == shape:
        return g
    while np.ndim(g) > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# identity vjp marker: backward passes the adjoint through untouched
_PASS = None


def _vjp_passthrough(src_shape, out_shape):
    if src_shape == out_shape:
        return _PASS
    return lambda g: _unbroadcast(g, src_shape)


def _add(a, b):
    if isinstance(a, Node):
        if isinstance(b, Node):
            tape = _same_tape(a, b)
            value = a.value + b.value
            return Node(
                tape,
                value,
                (a, b),
                (
                    _vjp_passthrough(a.shape, value.shape),
                    _vjp_passthrough(b.shape, value.shape),
                ),
            )
        value = a.value + b
        return Node(a.tape, value, (a,), (_vjp_passthrough(a.shape, np.shape(value)),))
    # b is the Node (radd path)
    value = a + b.value
    return Node(b.tape, value, (b,), (_vjp_passthrough(b.shape, np.shape(value)),))


def _neg_unbroadcast(src_shape, out_shape):
    if src_shape == out_shape:
        return _neg_vjp
    return lambda g: -_unbroadcast(g, src_shape)


def _sub(a, b):
    if isinstance(a, Node):
        if isinstance(b, Node):
            tape = _same_tape(a, b)
            value = a.value - b.value
            return Node(
                tape,
                value,
                (a, b),
                (
                    _vjp_passthrough(a.shape, value.shape),
                    _neg_unbroadcast(b.shape, value.shape),
                ),
            )
        value = a.value - b
        return Node(a.tape, value, (a,), (_vjp_passthrough(a.shape, np.shape(value)),))
    value = a - b.value
    return Node(b.tape, value, (b,), (_neg_unbroadcast(b.shape, np.shape(value)),))


def _mul_vjp(other_value, src_shape, out_shape):
    if src_shape == out_shape:
        return lambda g, ov=other_value: g * ov
    return lambda g, ov=other_value, s=src_shape: _unbroadcast(g * ov, s)


def _mul(a, b):
    if isinstance(a, Node):
        if isinstance(b, Node):
            tape = _same_tape(a, b)
            value = a.value * b.value
            shape = np.shape(value)
            return Node(
                tape,
                value,
                (a, b),
                (_mul_vjp(b.value, a.shape, shape), _mul_vjp(a.value, b.shape, shape)),
            )
        value = a.value * b
        return Node(a.tape, value, (a,), (_mul_vjp(b, a.shape, np.shape(value)),))
    value = a * b.value
    return Node(b.tape, value, (b,), (_mul_vjp(a, b.shape, np.shape(value)),))


# -- elementwise primitives (Node or plain ndarray in, same kind out) --


def sin(x):
    if isinstance(x, Node):
        return Node(x.tape, np.sin(x.value), (x,), (lambda g, v=x.value: g * np.cos(v),))
    return np.sin(x)


def cos(x):
    if isinstance(x, Node):
        return Node(x.tape, np.cos(x.value), (x,), (lambda g, v=x.value: -g * np.sin(v),))
    return np.cos(x)


def exp(x):
    if isinstance(x, Node):
        e = np.exp(x.value)
        return Node(x.tape, e, (x,), (lambda g, e=e: g * e,))
    return np.exp(x)


def tanh(x):
    if isinstance(x, Node):
        t = np.tanh(x.value)
        return Node(x.tape, t, (x,), (lambda g, t=t: g * (1.0 - t * t),))
    return np.tanh(x)


def _sigmoid_values(v):
    # split by sign for overflow safety
    out = np.empty_like(v, dtype=np.float64)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    if isinstance(x, Node):
        s = _sigmoid_values(np.asarray(x.value, dtype=np.float64))
        return Node(x.tape, s, (x,), (lambda g, s=s: g * (s * (1.0 - s)),))
    return _sigmoid_values(np.asarray(x, dtype=np.float64))


def relu(x):
    # subgradient convention: relu'(0) = 0
    if isinstance(x, Node):
        m = (x.value > 0).astype(np.float64)
        return Node(x.tape, x.value * m, (x,), (lambda g, m=m: g * m,))
    return x * (x > 0)


def step(x):
    """Heaviside mask with step(0) = 0, returned as a constant.

    The derivative of relu: treated as locally constant, so second
    derivatives through relu vanish identically.
    """
    v = x.value if isinstance(x, Node) else x
    return (v > 0).astype(np.float64)


def softplus(x):
    if isinstance(x, Node):
        return Node(
            x.tape,
            np.logaddexp(0.0, x.value),
            (x,),
            (lambda g, v=x.value: g * _sigmoid_values(np.asarray(v, dtype=np.float64)),),
        )
    return np.logaddexp(0.0, x)


def matmul(a, b):
    a_node = isinstance(a, Node)
    b_node = isinstance(b, Node)
    if a_node and b_node:
        tape = _same_tape(a, b)
        return Node(
            tape,
            a.value @ b.value,
            (a, b),
            (
                lambda g, bv=b.value: g @ bv.T,
                lambda g, av=a.value: av.T @ g,
            ),
        )
    if a_node:
        return Node(a.tape, a.value @ b, (a,), (lambda g, bv=b: g @ bv.T,))
    if b_node:
        return Node(b.tape, a @ b.value, (b,), (lambda g, av=a: av.T @ g,))
    return a @ b


def _bias_vjp(g):
    return g.sum(axis=1, keepdims=True)


def affine(w, b, x):
    """``w @ x + b`` fused; ``b`` broadcasts over columns. Any operand may be a Node."""
    w_node = isinstance(w, Node)
    b_node = isinstance(b, Node)
    x_node = isinstance(x, Node)
    if w_node and b_node:
        # the two layouts the network uses
        tape = _same_tape(w, b)
        wv, bv = w.value, b.value
        if x_node:
            _same_tape(w, x)
            xv = x.value
            return Node(
                tape,
                wv @ xv + bv,
                (w, b, x),
                (lambda g, xv=xv: g @ xv.T, _bias_vjp, lambda g, wv=wv: wv.T @ g),
            )
        return Node(
            tape,
            wv @ x + bv,
            (w, b),
            (lambda g, xv=x: g @ xv.T, _bias_vjp),
        )
    if not (w_node or b_node or x_node):
        return w @ x + b
    return matmul(w, x) + b


def mean(x):
    if isinstance(x, Node):
        n = np.size(x.value)
        return Node(
            x.tape,
            np.float64(np.mean(x.value)),
            (x,),
            (lambda g, n=n, shape=np.shape(x.value): np.full(shape, g / n),),
        )
    return np.float64(np.mean(x))


def row(x, i):
    """Row ``i`` of a matrix-shaped quantity."""
    if isinstance(x, Node):
        def vjp(g, i=i, shape=np.shape(x.value)):
            out = np.zeros(shape)
            out[i] = g
            return out

        return Node(x.tape, x.value[i], (x,), (vjp,))
    return x[i]


def slice1d(x, start, stop):
    """Contiguous slice of a vector-shaped quantity."""
    if isinstance(x, Node):
        def vjp(g, start=start, stop=stop, shape=np.shape(x.value)):
            out = np.zeros(shape)
            out[start:stop] = g
            return out

        return Node(x.tape, x.value[start:stop], (x,), (vjp,))
    return x[start:stop]


def segment(theta_node, start, stop, shape):
    """A reshaped slice of the flat parameter vector as a tape node."""
    def vjp(g, start=start, stop=stop, n=np.size(theta_node.value)):
        out = np.zeros(n)
        out[start:stop] = np.ravel(g)
        return out

    return Node(
        theta_node.tape,
        theta_node.value[start:stop].reshape(shape),
        (theta_node,),
        (vjp,),
    )


def value_of(x):
    """Primal value of a Node, or ``x`` itself if already plain."""
    return x.value if isinstance(x, Node) else x


def backward(tape, output):
    """Reverse sweep: gradient of scalar ``output`` over the flat parameters.

    Parameter slots untouched by the computation get 0. Raises if the
    output is not scalar or the tape has no registered parameter vector.
    """
    if not isinstance(output, Node):
        # output never touched a parameter; gradient is identically zero
        if tape.theta_node is None:
            raise ValueError("tape has no registered parameter vector")
        return np.zeros(np.size(tape.theta_node.value))
    if np.ndim(output.value) != 0:
        raise ValueError(f"backward target must be scalar, got shape {np.shape(output.value)}")
    if tape.theta_node is None:
        raise ValueError("tape has no registered parameter vector")

    for node in tape.nodes:
        node.grad = None
        node.grad_owned = False
    output.grad = np.float64(1.0)
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contribution = g if vjp is None else vjp(g)
            if parent.grad is None:
                # identity contributions are borrowed views; anything a vjp
                # computed is a fresh array we may mutate later
                parent.grad = contribution
                parent.grad_owned = vjp is not None
            elif parent.grad_owned and np.ndim(parent.grad) > 0:
                parent.grad += contribution
            else:
                parent.grad = parent.grad + contribution
                parent.grad_owned = True
    g = tape.theta_node.grad
    if g is None:
        return np.zeros(np.size(tape.theta_node.value))
    return np.asarray(g, dtype=np.float64)


# -- Taylor coefficients in the time variable -------------------------------


class Taylor2:
    """Scalar-input Taylor triple ``(value, d/dt, d2/dt2)``.

    ``d1``/``d2`` may be ``None`` (identically zero), a python float, or an
    array/Node matching ``value``'s shape.
    """

    __slots__ = ("value", "d1", "d2")

    def __init__(self, value, d1=None, d2=None):
        self.value = value
        self.d1 = d1
        self.d2 = d2

    def __repr__(self):
        return f"Taylor2({self.value!r}, {self.d1!r}, {self.d2!r})"

    def __add__(self, other):
        if isinstance(other, Taylor2):
            return Taylor2(
                self.value + other.value,
                _zadd(self.d1, other.d1),
                _zadd(self.d2, other.d2),
            )
        return Taylor2(self.value + other, self.d1, self.d2)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Taylor2):
            return Taylor2(
                self.value - other.value,
                _zsub(self.d1, other.d1),
                _zsub(self.d2, other.d2),
            )
        return Taylor2(self.value - other, self.d1, self.d2)

    def __rsub__(self, other):
        return Taylor2(other - self.value, _zneg(self.d1), _zneg(self.d2))

    def __neg__(self):
        return Taylor2(-self.value, _zneg(self.d1), _zneg(self.d2))

    def __mul__(self, other):
        if isinstance(other, Taylor2):
            # Leibniz to second order: (ab)'' = a''b + 2a'b' + ab''
            d1 = _zadd(_zmul(self.d1, other.value), _zmul(self.value, other.d1))
            d2 = _zadd(
                _zadd(_zmul(self.d2, other.value), _zmul(self.value, other.d2)),
                _zscale(_zmul(self.d1, other.d1), 2.0),
            )
            return Taylor2(self.value * other.value, d1, d2)
        return Taylor2(self.value * other, _zmul(self.d1, other), _zmul(self.d2, other))

    __rmul__ = __mul__


def _zadd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _zsub(a, b):
    if b is None:
        return a
    if a is None:
        return -b
    return a - b


def _zneg(a):
    return None if a is None else -a


def _zmul(a, b):
    if a is None or b is None:
        return None
    return a * b


def _zscale(a, c):
    return None if a is None else a * c


def seed_input(t):
    """Seed the time variable: value t, first derivative 1, second 0."""
    return Taylor2(t, 1.0, None)


def _chain_sin(v):
    s = sin(v)
    return s, cos(v), -s


def _chain_tanh(v):
    t = tanh(v)
    fp = 1.0 - t * t
    return t, fp, -2.0 * (t * fp)


def _chain_sigmoid(v):
    s = sigmoid(v)
    fp = s - s * s
    return s, fp, fp * (1.0 - 2.0 * s)


def _chain_relu(v):
    m = step(v)  # constant mask; relu'' = 0 everywhere
    return relu(v), m, None


def _chain_exp(v):
    e = exp(v)
    return e, e, e


def _chain_softplus(v):
    s = sigmoid(v)
    return softplus(v), s, s - s * s


def _chain_swish(v):
    # f = v*s, f' = s + v*s', f'' = 2s' + v*s''  with s = sigmoid(v)
    s = sigmoid(v)
    sp = s - s * s
    spp = sp * (1.0 - 2.0 * s)
    return v * s, s + v * sp, 2.0 * sp + v * spp


_UNARY_CHAINS = {
    "sin": _chain_sin,
    "sine": _chain_sin,
    "tanh": _chain_tanh,
    "sigmoid": _chain_sigmoid,
    "relu": _chain_relu,
    "exp": _chain_exp,
    "softplus": _chain_softplus,
    "swish": _chain_swish,
}


def taylor_apply(kind, x, *args):
    """Apply a primitive to Taylor coefficients via the second-order chain rule.

    Unary kinds: sin/sine, tanh, sigmoid, relu, exp, softplus, swish.
    Binary kinds: ``add``/``mul`` (second operand in ``args``);
    ``affine`` takes ``(scale, shift)`` constants.
    """
    if kind in _UNARY_CHAINS:
        f0, fp, fpp = _UNARY_CHAINS[kind](x.value)
        d1 = _zmul(fp, x.d1)
        d2 = None
        if x.d1 is not None and fpp is not None:
            d2 = fpp * (x.d1 * x.d1)
        d2 = _zadd(d2, _zmul(fp, x.d2))
        return Taylor2(f0, d1, d2)
    if kind == "add":
        return x + args[0]
    if kind == "mul":
        return x * args[0]
    if kind == "affine":
        scale, shift = args
        return x * scale + shift
    raise ConfigError(f"unsupported primitive kind: {kind!r}")


def grad_check(loss_fn, theta, h=1e-5):
    """Max relative discrepancy between analytic and central-difference gradients.

    ``loss_fn(theta)`` must return ``(loss_value, gradient)``. Relative
    error uses ``max(1, |fd_k|)`` in the denominator. Non-finite loss
    values raise ``NumericsError``.
    """
    if h <= 0:
        raise ConfigError("finite-difference step h must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    _, analytic = loss_fn(theta)
    analytic = np.asarray(analytic, dtype=np.float64)
    worst = 0.0
    for k in range(theta.size):
        bumped = theta.copy()
        bumped[k] = theta[k] + h
        f_plus, _ = loss_fn(bumped)
        bumped[k] = theta[k] - h
        f_minus, _ = loss_fn(bumped)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericsError(f"loss is non-finite near theta[{k}]")
        fd = (f_plus - f_minus) / (2.0 * h)
        rel = abs(analytic[k] - fd) / max(1.0, abs(fd))
        if rel > worst:
            worst = rel
    return worst
