"""Dense-network numeric core: activations, layers, forward/backward and losses.

Matrices are plain 2-D ``float64`` numpy arrays; rows are samples. Every public
operation checks its output for NaN/Inf and raises instead of propagating.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LEAKY_SLOPE = 0.01
# softplus^-1(1) = log(e - 1); the variance head starts out emitting ~1
SOFTPLUS_INV_ONE = float(np.log(np.expm1(1.0)))
_TINY = np.finfo(np.float64).tiny


class ConfigurationError(ValueError):
    """Shapes or layer settings that do not fit together."""


class UsageError(RuntimeError):
    """API called out of order, e.g. backward without a forward."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf showed up where only finite values are allowed."""


class InvalidWeightError(ValueError):
    """Loss weights that are not strictly positive and finite."""


def as_matrix(a, name: str = "input") -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array (1-D becomes a column)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise ConfigurationError(f"{name}: expected a 2-D matrix, got shape {m.shape}")
    return m


def check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        bad = int(np.size(a) - np.count_nonzero(np.isfinite(a)))
        raise NonFiniteError(f"{what}: {bad} non-finite value(s)")
    return a


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Activation:
    name: str
    slope: float = DEFAULT_LEAKY_SLOPE  # only used by leaky_relu

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.name == "identity":
            return z
        if self.name == "leaky_relu":
            if 0.0 <= self.slope <= 1.0:
                return np.maximum(z, self.slope * z)
            return np.where(z > 0, z, self.slope * z)
        if self.name == "softplus":
            # logaddexp is overflow-safe; clamp keeps the output > 0 where exp underflows
            return np.maximum(np.logaddexp(0.0, z), _TINY)
        raise ConfigurationError(f"unknown activation {self.name!r}")

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self.name == "identity":
            return np.ones_like(z)
        if self.name == "leaky_relu":
            return np.where(z > 0, 1.0, self.slope)
        if self.name == "softplus":
            return 0.5 * (1.0 + np.tanh(0.5 * z))  # logistic sigmoid, stable form
        raise ConfigurationError(f"unknown activation {self.name!r}")


IDENTITY = Activation("identity")
SOFTPLUS = Activation("softplus")


def leaky_relu(slope: float = DEFAULT_LEAKY_SLOPE) -> Activation:
    return Activation("leaky_relu", slope)


LEAKY_RELU = leaky_relu()
_ACTIVATIONS = ("identity", "leaky_relu", "softplus")


def activation_from_name(name: str, slope: float = DEFAULT_LEAKY_SLOPE) -> Activation:
    if name not in _ACTIVATIONS:
        raise ConfigurationError(f"unknown activation {name!r}; expected one of {_ACTIVATIONS}")
    return Activation(name, slope)


# ---------------------------------------------------------------------------
# layers and networks
# ---------------------------------------------------------------------------

@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: Activation = IDENTITY

    def __post_init__(self):
        self.weights = as_matrix(self.weights, "weights")
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ConfigurationError(
                f"bias length {self.bias.shape[0]} != weights out_dim {self.weights.shape[1]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: Activation, rng: np.random.Generator,
             bias: float = 0.0) -> "DenseLayer":
        """He-style uniform init scaled by fan-in: U(-sqrt(6/in), sqrt(6/in))."""
        limit = np.sqrt(6.0 / in_dim)
        w = rng.uniform(-limit, limit, size=(in_dim, out_dim))
        return cls(w, np.full(out_dim, float(bias)), activation)


@dataclass
class Gradients:
    """Parameter gradients in ``DenseNet.params()`` order plus d(loss)/d(input)."""
    params: list
    input: np.ndarray


@dataclass
class _Cache:
    inputs: list  # input to each layer
    pre: list  # pre-activations
    masks: list  # dropout mask per layer (None when not applied)
    output: np.ndarray


@dataclass
class DenseNet:
    layers: list
    _cache: _Cache | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("a DenseNet needs at least one layer")
        for k in range(len(self.layers) - 1):
            a, b = self.layers[k], self.layers[k + 1]
            if a.out_dim != b.in_dim:
                raise ConfigurationError(
                    f"layer {k} out_dim {a.out_dim} does not chain into layer {k + 1} in_dim {b.in_dim}"
                )

    @classmethod
    def build(cls, sizes, activations, rng: np.random.Generator, output_bias: float = 0.0) -> "DenseNet":
        """Build from layer widths ``sizes = [in, h1, ..., out]`` and one activation per layer."""
        sizes = list(sizes)
        activations = list(activations)
        if len(activations) != len(sizes) - 1:
            raise ConfigurationError("need exactly one activation per layer")
        layers = []
        for k, act in enumerate(activations):
            last = k == len(activations) - 1
            layers.append(DenseLayer.init(sizes[k], sizes[k + 1], act, rng, output_bias if last else 0.0))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def params(self) -> list:
        """Live references to every weight and bias array, layer by layer."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def forward(self, x, dropout_rate: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
        """Run the batch through every layer and cache intermediates for ``backward``.

        With ``dropout_rate > 0`` an inverted-dropout mask is drawn from ``rng``
        for the output of each hidden (non-final) layer.
        """
        x = as_matrix(x)
        if x.shape[1] != self.in_dim:
            raise ConfigurationError(f"input has {x.shape[1]} columns, network expects {self.in_dim}")
        if dropout_rate and rng is None:
            raise UsageError("dropout needs an explicit rng")
        inputs, pre, masks = [], [], []
        a = x
        last = len(self.layers) - 1
        for k, layer in enumerate(self.layers):
            inputs.append(a)
            z = a @ layer.weights + layer.bias
            pre.append(z)
            a = layer.activation(z)
            mask = None
            if dropout_rate > 0.0 and k < last:
                keep = 1.0 - dropout_rate
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
            masks.append(mask)
        check_finite(a, "forward output")
        self._cache = _Cache(inputs, pre, masks, a)
        return a

    __call__ = forward

    def backward(self, output_grad) -> Gradients:
        """Backpropagate ``output_grad`` through the cached forward pass.

        The cache is consumed, so a second backward needs a fresh forward.
        """
        if self._cache is None:
            raise UsageError("backward called without a preceding forward (or cache already consumed)")
        cache = self._cache
        g = as_matrix(output_grad, "output_grad")
        if g.shape != cache.output.shape:
            raise UsageError(f"output_grad shape {g.shape} != last forward output {cache.output.shape}")
        self._cache = None
        grads = [None] * (2 * len(self.layers))
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            if cache.masks[k] is not None:
                g = g * cache.masks[k]
            dz = g * layer.activation.derivative(cache.pre[k])
            grads[2 * k] = cache.inputs[k].T @ dz
            grads[2 * k + 1] = dz.sum(axis=0)
            g = dz @ layer.weights.T
        for i, gr in enumerate(grads):
            check_finite(gr, f"gradient of parameter {i}")
        return Gradients(grads, g)


# ---------------------------------------------------------------------------
# losses (mean over the batch; the sum form only rescales the learning rate)
# ---------------------------------------------------------------------------

def _same_shape(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ConfigurationError(f"shape mismatch: {sorted(shapes)}")


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred, target = as_matrix(pred, "pred"), as_matrix(target, "target")
    _same_shape(pred, target)
    r = target - pred
    n = pred.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.sum(r * r) / n)
    check_finite(np.float64(loss), "mse loss")
    return loss, -2.0 * r / n


def weighted_mse_loss(pred, target, weights) -> tuple[float, np.ndarray]:
    """Weighted squared error ``mean(w * (y - yhat)^2)`` and its gradient in ``pred``.

    ``weights`` are the precomputed inverse variances and are treated as
    constants. With ``weights == 1`` this is bit-identical to :func:`mse_loss`.
    """
    pred, target, w = as_matrix(pred, "pred"), as_matrix(target, "target"), as_matrix(weights, "weights")
    _same_shape(pred, target, w)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InvalidWeightError("loss weights must be strictly positive and finite")
    r = target - pred
    n = pred.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.sum(w * (r * r)) / n)
    check_finite(np.float64(loss), "weighted mse loss")
    return loss, -2.0 * (w * r) / n


def variance_loss(pred_v, abs_residual) -> tuple[float, np.ndarray]:
    """Squared error between the variance head output and detached residual targets."""
    pred_v, target = as_matrix(pred_v, "pred_v"), as_matrix(abs_residual, "abs_residual")
    _same_shape(pred_v, target)
    if np.any(target < 0):
        raise ValueError("residual targets must be non-negative")
    d = target - pred_v
    n = pred_v.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.sum(d * d) / n)
    check_finite(np.float64(loss), "variance loss")
    return loss, -2.0 * d / n
