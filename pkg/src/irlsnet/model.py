"""Uncertainty-aware regression network and the comparison models.

``UncertaintyNet`` is a shared trunk feeding two heads: a mean head with an
identity output and a noise-scale head with a softplus output. The baselines
are plain dense networks (optionally with dropout for MC-Dropout).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nncore import (
    IDENTITY,
    SOFTPLUS,
    SOFTPLUS_INV_ONE,
    ConfigurationError,
    DenseLayer,
    DenseNet,
    activation_from_name,
    as_matrix,
    leaky_relu,
)

DEFAULT_VARIANCE_FLOOR = 1e-3
# shrink the variance head's last weights so its initial output stays near softplus(bias) = 1
VAR_OUTPUT_INIT_SCALE = 0.01
CHECKPOINT_FORMAT = "irlsnet-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class UncertaintyNet:
    shared: DenseNet
    mean_head: DenseNet
    var_head: DenseNet
    min_variance_floor: float = DEFAULT_VARIANCE_FLOOR
    # "stddev": the head tracks |y - yhat|; "variance": it tracks (y - yhat)^2
    head_output: str = "stddev"

    def __post_init__(self):
        d = self.shared.out_dim
        if self.mean_head.in_dim != d or self.var_head.in_dim != d:
            raise ConfigurationError("both heads must take the shared output width as input")
        if self.mean_head.out_dim != 1 or self.var_head.out_dim != 1:
            raise ConfigurationError("heads must emit a single column")
        if not self.min_variance_floor > 0:
            raise ConfigurationError("variance floor must be positive")
        if self.head_output not in ("stddev", "variance"):
            raise ConfigurationError(f"head_output must be 'stddev' or 'variance', not {self.head_output!r}")

    @property
    def in_dim(self) -> int:
        return self.shared.in_dim

    @property
    def n_params(self) -> int:
        return self.shared.n_params + self.mean_head.n_params + self.var_head.n_params

    @property
    def mean_path_params(self) -> int:
        return self.shared.n_params + self.mean_head.n_params

    def mean_path_params_list(self) -> list:
        return self.shared.params() + self.mean_head.params()

    def sigma_from_head(self, head_out: np.ndarray) -> np.ndarray:
        """Noise scale implied by raw head output, clamped at the floor."""
        s = head_out if self.head_output == "stddev" else np.sqrt(head_out)
        return np.maximum(s, self.min_variance_floor)

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(mean, stddev)`` as 1-D arrays of length ``len(X)``."""
        X = as_matrix(X, "X")
        if X.shape[1] != self.in_dim:
            raise ConfigurationError(f"X has {X.shape[1]} features, network expects {self.in_dim}")
        h = self.shared.forward(X)
        mean = self.mean_head.forward(h)
        v = self.var_head.forward(h)
        return mean[:, 0].copy(), self.sigma_from_head(v)[:, 0]

    def predict_mean(self, X) -> np.ndarray:
        return self.mean_head.forward(self.shared.forward(X))[:, 0].copy()

    def predict_variance(self, X) -> np.ndarray:
        return self.predict(X)[1]

    def mean_path(self) -> DenseNet:
        """Shared trunk followed by the mean head, as one network (copied)."""
        return DenseNet(self.shared.copy().layers + self.mean_head.copy().layers)


@dataclass
class BaselineNet:
    net: DenseNet

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def predict(self, X) -> np.ndarray:
        return self.net.forward(X)[:, 0].copy()


@dataclass
class McDropoutNet:
    net: DenseNet
    dropout_rate: float = 0.1
    passes: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must lie in [0, 1)")
        if self.passes < 1:
            raise ConfigurationError("need at least one stochastic pass")

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def predict(self, X) -> np.ndarray:
        return mc_dropout_predict(self, X)[0]


def mc_dropout_predict(net: McDropoutNet, X) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std over ``net.passes`` forward passes with dropout on.

    Masks come from a generator re-seeded on every call, so repeated calls
    return identical arrays.
    """
    X = as_matrix(X, "X")
    rng = np.random.default_rng(net.seed)
    outs = np.empty((net.passes, X.shape[0]))
    for t in range(net.passes):
        outs[t] = net.net.forward(X, dropout_rate=net.dropout_rate, rng=rng if net.dropout_rate else None)[:, 0]
    if net.passes == 1 or net.dropout_rate == 0.0:
        return outs[0].copy(), np.zeros(X.shape[0])
    return outs.mean(axis=0), outs.std(axis=0)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_uncertainty_net(input_dim: int, shared_width: int, head_widths, rng: np.random.Generator,
                          slope: float = 0.01, floor: float = DEFAULT_VARIANCE_FLOOR,
                          head_output: str = "stddev") -> UncertaintyNet:
    """Shared trunk (one leaky-ReLU layer) plus two heads with the given hidden widths.

    Initialization order is shared, mean head, variance head, so a baseline
    drawn from the same seed shares the mean path's starting weights.
    """
    if input_dim < 1:
        raise ConfigurationError("input_dim must be >= 1")
    act = leaky_relu(slope)
    head_widths = list(head_widths)
    shared = DenseNet.build([input_dim, shared_width], [act], rng)
    sizes = [shared_width, *head_widths, 1]
    mean_head = DenseNet.build(sizes, [act] * len(head_widths) + [IDENTITY], rng)
    # variance head output starts at softplus(b) = 1 (or sqrt(1) for the variance reading)
    var_head = DenseNet.build(sizes, [act] * len(head_widths) + [SOFTPLUS], rng, output_bias=SOFTPLUS_INV_ONE)
    var_head.layers[-1].weights *= VAR_OUTPUT_INIT_SCALE
    return UncertaintyNet(shared, mean_head, var_head, floor, head_output)


def build_simulation_config(rng: np.random.Generator | None = None, **kw) -> UncertaintyNet:
    """1-D simulation topology: shared 100, heads 100 -> 50 -> 1."""
    rng = np.random.default_rng(0) if rng is None else rng
    return build_uncertainty_net(1, 100, (100, 50), rng, **kw)


def build_va_config(input_dim: int, rng: np.random.Generator | None = None, **kw) -> UncertaintyNet:
    """Portfolio topology: shared 200, heads 200 -> 200 -> 1."""
    rng = np.random.default_rng(0) if rng is None else rng
    return build_uncertainty_net(input_dim, 200, (200, 200), rng, **kw)


def _mlp_params(sizes) -> int:
    return sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))


def baseline_widths(input_dim: int, hidden, target_params: int) -> list:
    """Scale hidden widths by a common factor until the parameter count is closest to target."""
    hidden = list(hidden)
    best, best_err = hidden, None
    for f in np.linspace(0.5, 3.0, 2501):
        widths = [max(1, int(round(h * f))) for h in hidden]
        err = abs(_mlp_params([input_dim, *widths, 1]) - target_params)
        if best_err is None or err < best_err:
            best, best_err = widths, err
    return best


def build_baseline(unet: UncertaintyNet, match: str = "mean_path", rng: np.random.Generator | None = None,
                   slope: float = 0.01) -> BaselineNet:
    """Plain MSE network comparable to ``unet``.

    ``match="mean_path"`` copies the shared + mean-head layers exactly (same
    topology and starting weights). ``match="total"`` widens the hidden layers
    until the parameter count is within 2% of the whole ``unet``, freshly
    initialized from ``rng``.
    """
    if match == "mean_path":
        return BaselineNet(unet.mean_path())
    if match != "total":
        raise ConfigurationError(f"match must be 'total' or 'mean_path', not {match!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    hidden = [unet.shared.out_dim] + [layer.out_dim for layer in unet.mean_head.layers[:-1]]
    widths = baseline_widths(unet.in_dim, hidden, unet.n_params)
    act = leaky_relu(slope)
    net = DenseNet.build([unet.in_dim, *widths, 1], [act] * len(widths) + [IDENTITY], rng)
    return BaselineNet(net)


def build_mc_dropout(unet: UncertaintyNet, rng: np.random.Generator | None = None, dropout_rate: float = 0.1,
                     passes: int = 100, seed: int = 0, slope: float = 0.01,
                     match: str = "mean_path") -> McDropoutNet:
    """Baseline-shaped network (see :func:`build_baseline`) wrapped for T-pass dropout prediction."""
    base = build_baseline(unet, match, rng, slope)
    return McDropoutNet(base.net, dropout_rate, passes, seed)


# ---------------------------------------------------------------------------
# checkpoints (JSON; Python's float repr round-trips float64 exactly)
# ---------------------------------------------------------------------------

def _net_to_dict(net: DenseNet) -> list:
    return [
        {
            "in_dim": layer.in_dim,
            "out_dim": layer.out_dim,
            "activation": layer.activation.name,
            "slope": layer.activation.slope,
            "weights": layer.weights.ravel().tolist(),
            "bias": layer.bias.tolist(),
        }
        for layer in net.layers
    ]


def _net_from_dict(layers: list) -> DenseNet:
    out = []
    for spec in layers:
        w = np.array(spec["weights"], dtype=np.float64).reshape(spec["in_dim"], spec["out_dim"])
        out.append(DenseLayer(w, np.array(spec["bias"], dtype=np.float64),
                              activation_from_name(spec["activation"], spec["slope"])))
    return DenseNet(out)


def save_checkpoint(model, path) -> None:
    if isinstance(model, UncertaintyNet):
        body = {
            "kind": "uncertainty",
            "floor": model.min_variance_floor,
            "head_output": model.head_output,
            "blocks": {
                "shared": _net_to_dict(model.shared),
                "mean_head": _net_to_dict(model.mean_head),
                "var_head": _net_to_dict(model.var_head),
            },
        }
    elif isinstance(model, McDropoutNet):
        body = {"kind": "mc_dropout", "dropout_rate": model.dropout_rate, "passes": model.passes,
                "seed": model.seed, "blocks": {"net": _net_to_dict(model.net)}}
    elif isinstance(model, BaselineNet):
        body = {"kind": "baseline", "blocks": {"net": _net_to_dict(model.net)}}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **body}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an irlsnet checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    blocks = doc["blocks"]
    kind = doc["kind"]
    if kind == "uncertainty":
        return UncertaintyNet(_net_from_dict(blocks["shared"]), _net_from_dict(blocks["mean_head"]),
                              _net_from_dict(blocks["var_head"]), doc["floor"], doc["head_output"])
    if kind == "baseline":
        return BaselineNet(_net_from_dict(blocks["net"]))
    if kind == "mc_dropout":
        return McDropoutNet(_net_from_dict(blocks["net"]), doc["dropout_rate"], doc["passes"], doc["seed"])
    raise ValueError(f"{path}: unknown model kind {kind!r}")
