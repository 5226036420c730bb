"""Fully-connected networks with per-layer normalization and hand-written backprop.

Every network here is a stack of linear layers.  Hidden layers normalize their
pre-activations (mean zero, variance one, no learned scale or bias) and apply
LeakyReLU; the output layer is a plain linear map.  Parameters live in one flat
float64 vector (row-major weights followed by biases, layer by layer) so that
eligibility traces and optimizers can treat the whole network as a single
vector.  The backward pass is exact reverse-mode differentiation of a scalar
seeded output, including the Jacobian of the normalization statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAKY_RELU_SLOPE = 0.01

# A gradient buffer is a flat float64 vector with the same length as
# Network.params.
GradientBuffer = np.ndarray


@dataclass(frozen=True)
class LayerSpec:
    """Shape and behaviour of one linear layer."""

    input_width: int
    output_width: int
    has_layernorm: bool = False
    activation: str = "identity"  # "leaky_relu" or "identity"

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("layer widths must be >= 1")
        if self.activation not in ("leaky_relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def param_count(self) -> int:
        return self.output_width * self.input_width + self.output_width


def layernorm(a: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Normalize a vector to mean zero and (population) variance ~one.

    Constant vectors map to zero: the eps term keeps the division finite.
    """
    a = np.asarray(a, dtype=np.float64)
    mu = a.mean()
    var = a.var()
    return (a - mu) / np.sqrt(var + eps)


def layernorm_backward(g: np.ndarray, normed: np.ndarray, inv_std: float) -> np.ndarray:
    """Pull a gradient back through the normalization.

    `normed` is the forward output and `inv_std` is 1/sqrt(var + eps), both
    recorded on the tape.  The resulting vector is orthogonal to the constant
    direction because shifting every input by the same amount does not change
    the output.
    """
    return (g - g.mean() - normed * np.dot(g, normed) / g.size) * inv_std


class Tape:
    """Activation record of one forward pass, consumed by backward."""

    __slots__ = ("inputs", "normed", "inv_std", "post_act", "output", "version")

    def __init__(self, n_layers: int, version: int):
        self.inputs: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        self.normed: list[np.ndarray | None] = [None] * n_layers
        self.inv_std: list[float] = [0.0] * n_layers
        self.post_act: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        self.output: np.ndarray | None = None
        self.version = version


class Network:
    """A LayerNorm MLP over a flat float64 parameter vector.

    The flat vector is the authoritative storage; weight matrices and bias
    vectors are views into it.  Assigning `params` replaces the vector and
    invalidates any tape produced before the assignment.
    """

    def __init__(self, layers: list[LayerSpec], eps_ln: float = 1e-8):
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.output_width != nxt.input_width:
                raise ValueError("adjacent layer widths do not chain")
        last = layers[-1]
        if last.has_layernorm or last.activation != "identity":
            raise ValueError("final layer must be identity with no layernorm")
        self.layers = list(layers)
        self.eps_ln = float(eps_ln)
        self._params = np.zeros(sum(s.param_count for s in layers), dtype=np.float64)
        self._version = 0
        self._rebuild_views()

    def _rebuild_views(self):
        self._W: list[np.ndarray] = []
        self._b: list[np.ndarray] = []
        off = 0
        for spec in self.layers:
            wn = spec.output_width * spec.input_width
            self._W.append(self._params[off:off + wn].reshape(spec.output_width, spec.input_width))
            off += wn
            self._b.append(self._params[off:off + spec.output_width])
            off += spec.output_width

    @property
    def params(self) -> np.ndarray:
        return self._params

    @params.setter
    def params(self, value: np.ndarray):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._params.shape:
            raise ValueError(
                f"params length {value.size} != expected {self._params.size}"
            )
        self._params = value
        self._version += 1
        self._rebuild_views()

    @property
    def param_count(self) -> int:
        return self._params.size

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].output_width

    def weight_view(self, layer: int) -> np.ndarray:
        return self._W[layer]

    def bias_view(self, layer: int) -> np.ndarray:
        return self._b[layer]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Tape]:
        """Run the network on `x`, returning the output and an activation tape."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.layers[0].input_width,):
            raise ValueError(
                f"input shape {x.shape} != ({self.layers[0].input_width},)"
            )
        tape = Tape(len(self.layers), self._version)
        h = x
        for l, spec in enumerate(self.layers):
            tape.inputs[l] = h
            a = self._W[l] @ h + self._b[l]
            if spec.has_layernorm:
                centered = a - a.mean()
                inv_std = 1.0 / np.sqrt(centered @ centered / centered.size + self.eps_ln)
                a = centered * inv_std
                tape.normed[l] = a
                tape.inv_std[l] = inv_std
            if spec.activation == "leaky_relu":
                h = np.where(a > 0.0, a, LEAKY_RELU_SLOPE * a)
            else:
                h = a
            tape.post_act[l] = h
        tape.output = h
        return h, tape

    def value(self, x: np.ndarray) -> np.ndarray:
        """Forward pass when only the output is needed."""
        return self.forward(x)[0]

    def backward(self, tape: Tape, dy: np.ndarray) -> GradientBuffer:
        """Exact gradient of dy . output with respect to the flat params."""
        if tape.version != self._version:
            raise RuntimeError("stale tape: params changed since the forward pass")
        dy = np.asarray(dy, dtype=np.float64)
        if dy.shape != (self.layers[-1].output_width,):
            raise ValueError(
                f"dy shape {dy.shape} != ({self.layers[-1].output_width},)"
            )
        grads = np.zeros_like(self._params)
        goff = grads.size
        d = dy
        for l in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[l]
            if spec.activation == "leaky_relu":
                # LeakyReLU preserves sign, so the post-activation recovers the
                # branch even when the pre-activation was not stored.
                act_in = tape.normed[l] if spec.has_layernorm else tape.post_act[l]
                d = np.where(act_in > 0.0, d, LEAKY_RELU_SLOPE * d)
            if spec.has_layernorm:
                d = layernorm_backward(d, tape.normed[l], tape.inv_std[l])
            goff -= spec.output_width
            grads[goff:goff + spec.output_width] = d
            wn = spec.output_width * spec.input_width
            np.dot(d.reshape(-1, 1), tape.inputs[l].reshape(1, -1),
                   out=grads[goff - wn:goff].reshape(spec.output_width,
                                                     spec.input_width))
            goff -= wn
            if l > 0:
                d = self._W[l].T @ d
        return grads


def make_mlp(input_width: int, hidden: tuple[int, ...], output_width: int,
             layernorm: bool = True, eps_ln: float = 1e-8) -> Network:
    """Build the standard trunk: hidden LeakyReLU layers, linear output."""
    specs = []
    w = input_width
    for h in hidden:
        specs.append(LayerSpec(w, h, has_layernorm=layernorm, activation="leaky_relu"))
        w = h
    specs.append(LayerSpec(w, output_width))
    return Network(specs)


def sparse_init(net: Network, s: float, rng: np.random.Generator) -> Network:
    """Initialize weights sparsely, in place.

    For every output unit, round(s * fan_in) incoming weights (chosen by a
    fresh permutation per unit) are set to zero; the rest are drawn uniformly
    from [-1/sqrt(fan_in), 1/sqrt(fan_in)].  Biases are zero.  s = 0 is a
    dense LeCun-style uniform init and consumes no permutation draws.
    """
    if not 0.0 <= s < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    for l, spec in enumerate(net.layers):
        fan_in = spec.input_width
        bound = 1.0 / np.sqrt(fan_in)
        n_zero = int(round(s * fan_in))
        W = net.weight_view(l)
        for i in range(spec.output_width):
            W[i, :] = rng.uniform(-bound, bound, size=fan_in)
            if n_zero > 0:
                W[i, rng.permutation(fan_in)[:n_zero]] = 0.0
        net.bias_view(l)[:] = 0.0
    net._version += 1  # init mutates through views; invalidate old tapes
    return net
