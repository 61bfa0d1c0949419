"""Feed-forward network: spec, Glorot initialization, Taylor-2 forward pass.

The network maps scalar time to the ODE state. Hidden layers apply the
configured activation; the output layer is affine. An optional sinusoidal
feature layer replaces the raw input, and per-component output transforms
can pin initial conditions exactly or force positivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Taylor2
from .errors import ConfigError

ACTIVATIONS = ("tanh", "sigmoid", "relu", "sine", "swish")
INITIALIZERS = ("glorot-normal", "glorot-uniform")

__all__ = [
    "FeatureMap",
    "OutputTransform",
    "NetworkSpec",
    "param_count",
    "init_params",
    "glorot_sample",
    "forward",
    "predict",
    "ACTIVATIONS",
    "INITIALIZERS",
]


@dataclass(frozen=True)
class FeatureMap:
    """Input embedding: identity passes t through; sinusoidal emits sin(kt), k=1..n."""

    kind: str = "identity"
    n: int = 10

    def __post_init__(self):
        if self.kind not in ("identity", "sinusoidal"):
            raise ConfigError(f"unknown feature map kind: {self.kind!r}")
        if self.kind == "sinusoidal" and self.n < 1:
            raise ConfigError("sinusoidal feature map needs n >= 1 frequencies")

    @property
    def width(self):
        return self.n if self.kind == "sinusoidal" else 1


@dataclass(frozen=True)
class OutputTransform:
    """Per-component transform applied to the raw network output.

    kinds[j] is one of:
      * ``identity``  — raw output,
      * ``hard-ic``   — u0 + (t-t0)*N(t), or u0 + v0*(t-t0) + (t-t0)^2*N(t)
                        when a derivative initial value v0 is present, so
                        the initial condition holds exactly for any theta,
      * ``positivity`` — softplus(N(t)) > 0.
    """

    kinds: tuple = ()
    t0: float = 0.0
    u0: tuple = ()
    v0: tuple | None = None

    def __post_init__(self):
        for kind in self.kinds:
            if kind not in ("identity", "hard-ic", "positivity"):
                raise ConfigError(f"unknown output transform kind: {kind!r}")
        if "hard-ic" in self.kinds and len(self.u0) != len(self.kinds):
            raise ConfigError("hard-ic transform needs one u0 per output component")
        if self.v0 is not None and len(self.v0) != len(self.kinds):
            raise ConfigError("v0 must have one entry per output component")

    @classmethod
    def identity(cls, d_out):
        return cls(kinds=("identity",) * d_out)

    @classmethod
    def positivity(cls, d_out):
        return cls(kinds=("positivity",) * d_out)

    @classmethod
    def hard_ic(cls, t0, u0, v0=None):
        u0 = tuple(float(u) for u in u0)
        return cls(
            kinds=("hard-ic",) * len(u0),
            t0=float(t0),
            u0=u0,
            v0=None if v0 is None else tuple(float(v) for v in v0),
        )


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: L hidden layers of equal width plus affine output."""

    hidden_layers: int
    width: int
    activation: str = "tanh"
    d_in: int = 1
    d_out: int = 1
    initializer: str = "glorot-normal"
    feature_map: FeatureMap = field(default_factory=FeatureMap)
    output_transform: OutputTransform | None = None
    input_scale: float = 1.0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1:
            raise ConfigError("network needs at least one hidden layer and width >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}; choose from {ACTIVATIONS}"
            )
        if self.initializer not in INITIALIZERS:
            raise ConfigError(
                f"unknown initializer {self.initializer!r}; choose from {INITIALIZERS}"
            )
        if self.d_in != 1:
            raise ConfigError("only scalar time input is supported (d_in = 1)")
        if self.input_scale == 0:
            raise ConfigError("input_scale must be nonzero")

    def layer_dims(self):
        """Per-layer (fan_in, fan_out) pairs in order, output layer last."""
        dims = []
        prev = self.feature_map.width
        for _ in range(self.hidden_layers):
            dims.append((prev, self.width))
            prev = self.width
        dims.append((prev, self.d_out))
        return dims

    def transform(self):
        return self.output_transform or OutputTransform.identity(self.d_out)


def param_count(spec):
    return sum(fo * fi + fo for fi, fo in spec.layer_dims())


def glorot_sample(rng, shape, fan_in, fan_out, kind="glorot-normal"):
    """Draw weights with variance 2/(fan_in+fan_out) (normal) or the uniform equivalent."""
    if kind == "glorot-normal":
        return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)
    if kind == "glorot-uniform":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)
    raise ConfigError(f"unknown initializer {kind!r}")


def init_params(spec, seed):
    """Flat parameter vector: Glorot weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in spec.layer_dims():
        w = glorot_sample(rng, (fan_out, fan_in), fan_in, fan_out, spec.initializer)
        chunks.append(np.ravel(w))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def _layer_params(spec, theta, tape):
    """Yield (W, b) per layer, as tape nodes when a tape is given."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != param_count(spec):
        raise ValueError(
            f"theta has {theta.size} entries, spec needs {param_count(spec)}"
        )
    theta_node = tape.param_vector(theta) if tape is not None else None
    offset = 0
    out = []
    for fan_in, fan_out in spec.layer_dims():
        w_end = offset + fan_out * fan_in
        b_end = w_end + fan_out
        if tape is None:
            w = theta[offset:w_end].reshape(fan_out, fan_in)
            b = theta[w_end:b_end].reshape(fan_out, 1)
        else:
            w = ad.segment(theta_node, offset, w_end, (fan_out, fan_in))
            b = ad.segment(theta_node, w_end, b_end, (fan_out, 1))
        out.append((w, b))
        offset = b_end
    return out


def _input_features(spec, t, want_derivatives):
    """Taylor triple of the feature matrix, one feature per row. Constants only."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        t = t.reshape(1)
    n = t.size
    a = float(spec.input_scale)
    ts = t * a
    fm = spec.feature_map
    if fm.kind == "identity":
        value = ts[None, :]
        if not want_derivatives:
            return Taylor2(value)
        return Taylor2(value, np.full((1, n), a), None)
    ks = np.arange(1.0, fm.n + 1.0)[:, None]
    arg = ks * ts[None, :]
    s = np.sin(arg)
    if not want_derivatives:
        return Taylor2(s)
    c = np.cos(arg)
    return Taylor2(s, (a * ks) * c, -(a * a) * (ks * ks) * s)


def _affine(w, b, h):
    """W @ h + b on each Taylor coefficient (b only shifts the value)."""
    value = ad.affine(w, b, h.value)
    d1 = None if h.d1 is None else ad.matmul(w, h.d1)
    d2 = None if h.d2 is None else ad.matmul(w, h.d2)
    return Taylor2(value, d1, d2)


def forward(spec, theta, t, tape=None, want_derivatives=True):
    """Evaluate the network at times ``t``.

    Returns one ``Taylor2`` per output component, each holding arrays of
    shape ``(len(t),)``. With a tape, components are tape nodes and a
    reverse sweep gives parameter gradients; without one, plain arrays.
    ``want_derivatives=False`` skips all d/dt bookkeeping.
    """
    layers = _layer_params(spec, theta, tape)
    h = _input_features(spec, t, want_derivatives)
    kind = "sin" if spec.activation == "sine" else spec.activation
    for w, b in layers[:-1]:
        h = ad.taylor_apply(kind, _affine(w, b, h))
    w_out, b_out = layers[-1]
    u = _affine(w_out, b_out, h)

    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        t = t.reshape(1)
    transform = spec.transform()
    outputs = []
    for j, tkind in enumerate(transform.kinds):
        uj = Taylor2(
            ad.row(u.value, j),
            None if u.d1 is None else ad.row(u.d1, j),
            None if u.d2 is None else ad.row(u.d2, j),
        )
        if tkind == "identity":
            outputs.append(uj)
        elif tkind == "positivity":
            outputs.append(ad.taylor_apply("softplus", uj))
        else:  # hard-ic
            dt = Taylor2(t - transform.t0, 1.0 if want_derivatives else None, None)
            if transform.v0 is None:
                outputs.append(transform.u0[j] + dt * uj)
            else:
                outputs.append(
                    transform.u0[j] + transform.v0[j] * dt + (dt * dt) * uj
                )
    return outputs


def predict(spec, theta, t):
    """Network output values only, as an array of shape (len(t), d_out)."""
    outs = forward(spec, theta, t, tape=None, want_derivatives=False)
    return np.stack([np.asarray(o.value) for o in outs], axis=1)
