"""Training loops: interleaved mean/variance training, plain MSE, and fixed-weight WLS.

The interleaved loop alternates two updates on every batch:

1. shared trunk + mean head take a step on the weighted squared error, with
   weights ``1 / sigma_hat**2`` computed from the variance head and detached;
2. the variance head alone takes a step fitting the detached residuals of the
   freshly updated mean path (shared trunk frozen).

Each parameter group has its own optimizer instance. All losses are batch means.
"""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import BaselineNet, McDropoutNet, UncertaintyNet
from .nncore import NonFiniteError, as_matrix, mse_loss, variance_loss, weighted_mse_loss
from .optim import ConstantSchedule, CyclicalSchedule, make_optimizer


class TrainingAborted(RuntimeError):
    def __init__(self, epoch: int, batch: int, cause: Exception):
        self.epoch, self.batch, self.cause = epoch, batch, cause
        super().__init__(f"training aborted at epoch {epoch}, batch {batch}: {cause}")


@dataclass
class OptimizerSpec:
    kind: str = "adam"
    lr: float = 1e-3
    schedule: str = "constant"  # "constant" or "cyclical"
    min_lr: float = 0.001
    max_lr: float = 0.01
    steps_per_cycle: int = 100
    hyper: dict = field(default_factory=dict)

    def make_schedule(self):
        if self.schedule == "constant":
            return ConstantSchedule(self.lr)
        if self.schedule == "cyclical":
            return CyclicalSchedule(self.min_lr, self.max_lr, self.steps_per_cycle)
        raise ValueError(f"unknown schedule {self.schedule!r}")

    def make(self, params):
        return make_optimizer(self.kind, params, **self.hyper)


@dataclass
class TrainConfig:
    epochs: int = 2000
    batch_size: int | None = None  # None: full batch
    warmup_epochs: int | None = None  # None: 10% of epochs
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    variance_floor: float | None = None  # None: use the network's own floor
    seed: int = 0
    interleave: str = "batch"  # "batch" or "epoch"
    variance_target: str = "abs"  # "abs" or "squared"
    normalize_weights: bool = True  # rescale batch weights to mean 1 (argmin unchanged)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.warmup_epochs is not None and not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if self.interleave not in ("batch", "epoch"):
            raise ValueError("interleave must be 'batch' or 'epoch'")
        if self.variance_target not in ("abs", "squared"):
            raise ValueError("variance_target must be 'abs' or 'squared'")

    @property
    def warmup(self) -> int:
        return self.epochs // 10 if self.warmup_epochs is None else self.warmup_epochs

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    var_loss: float
    lr: float
    seconds: float


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    weights: np.ndarray | None = None  # fixed WLS weights, when used

    @property
    def mean_losses(self) -> list:
        return [r.mean_loss for r in self.records]

    @property
    def var_losses(self) -> list:
        return [r.var_loss for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "L_m", "L_v", "lr", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.mean_loss), repr(r.var_loss), repr(r.lr), f"{r.seconds:.6f}"])


def _xy(data):
    if isinstance(data, tuple):
        X, y = data
    else:
        X, y = data.features, data.targets
    X, y = as_matrix(X, "features"), as_matrix(y, "targets")
    if X.shape[0] == 0:
        raise ValueError("training data is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and targets disagree on row count")
    return X, y


def _batches(n: int, batch_size: int | None, rng: np.random.Generator):
    if batch_size is None or batch_size >= n:
        return [slice(None)]
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


class _Loop:
    """Shared bookkeeping: schedule, global step, per-epoch records, abort wrapping."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.schedule = cfg.optimizer.make_schedule()
        self.step = 0
        self.order_rng = np.random.default_rng([cfg.seed, 1])
        self.trace = TrainTrace()

    def lr(self) -> float:
        return self.schedule.lr_at(self.step)


def _weights_from_head(net: UncertaintyNet, head_out: np.ndarray, floor: float | None,
                       normalize: bool) -> np.ndarray:
    sigma = net.sigma_from_head(head_out)
    if floor is not None:
        sigma = np.maximum(sigma, floor)
    w = 1.0 / (sigma * sigma)
    if normalize:
        w = w / w.mean()
    return w


def _mean_step(net: UncertaintyNet, opt, Xb, yb, w, lr, context) -> float:
    """One update of shared + mean head; ``w`` is an array or a callable of the shared output."""
    h = net.shared.forward(Xb)
    if callable(w):
        w = w(h)
    yhat = net.mean_head.forward(h)
    loss, g = weighted_mse_loss(yhat, yb, w)
    gm = net.mean_head.backward(g)
    gs = net.shared.backward(gm.input)
    opt.apply(net.shared.params() + net.mean_head.params(), gs.params + gm.params, lr, context)
    return loss


def _variance_step(net: UncertaintyNet, opt, Xb, yb, lr, target: str, context) -> float:
    h = net.shared.forward(Xb)
    r = yb - net.mean_head.forward(h)
    r = np.abs(r) if target == "abs" else r * r
    v = net.var_head.forward(h)
    loss, g = variance_loss(v, r)
    gv = net.var_head.backward(g)
    opt.apply(net.var_head.params(), gv.params, lr, context)
    return loss


def train_interleaved(net: UncertaintyNet, data, cfg: TrainConfig) -> TrainTrace:
    """Train ``net`` in place with the alternating mean / variance schedule."""
    X, y = _xy(data)
    if X.shape[1] != net.in_dim:
        raise ValueError(f"data has {X.shape[1]} features, network expects {net.in_dim}")
    loop = _Loop(cfg)
    opt_m = cfg.optimizer.make(net.shared.params() + net.mean_head.params())
    opt_v = cfg.optimizer.make(net.var_head.params())
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        warm = epoch < cfg.warmup
        batches = _batches(X.shape[0], cfg.batch_size, loop.order_rng)
        lm, lv = [], []
        b = 0
        try:
            def mean_part(b, idx):
                Xb, yb = X[idx], y[idx]
                if warm:
                    w = np.ones_like(yb)
                else:
                    def w(h):
                        return _weights_from_head(net, net.var_head.forward(h), cfg.variance_floor,
                                                  cfg.normalize_weights)
                lm.append(_mean_step(net, opt_m, Xb, yb, w, loop.lr(), f"epoch {epoch}, batch {b}, mean step"))

            def var_part(b, idx):
                lv.append(_variance_step(net, opt_v, X[idx], y[idx], loop.lr(), cfg.variance_target,
                                         f"epoch {epoch}, batch {b}, variance step"))

            if cfg.interleave == "batch":
                for b, idx in enumerate(batches):
                    mean_part(b, idx)
                    var_part(b, idx)
                    loop.step += 1
            else:
                start = loop.step
                for b, idx in enumerate(batches):
                    mean_part(b, idx)
                    loop.step += 1
                loop.step = start
                for b, idx in enumerate(batches):
                    var_part(b, idx)
                    loop.step += 1
        except (NonFiniteError, FloatingPointError) as exc:
            raise TrainingAborted(epoch, b, exc) from exc
        loop.trace.records.append(EpochRecord(epoch, float(np.mean(lm)), float(np.mean(lv)),
                                              loop.schedule.lr_at(max(loop.step - 1, 0)),
                                              time.perf_counter() - t0))
    return loop.trace


def train_plain(net: BaselineNet | McDropoutNet, data, cfg: TrainConfig) -> TrainTrace:
    """Mini-batch MSE training; dropout masks are active when the net has a rate."""
    X, y = _xy(data)
    loop = _Loop(cfg)
    dense = net.net
    rate = getattr(net, "dropout_rate", 0.0)
    drop_rng = np.random.default_rng([cfg.seed, 2]) if rate else None
    opt = cfg.optimizer.make(dense.params())
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lm = []
        b = 0
        try:
            for b, idx in enumerate(_batches(X.shape[0], cfg.batch_size, loop.order_rng)):
                Xb, yb = X[idx], y[idx]
                out = dense.forward(Xb, dropout_rate=rate, rng=drop_rng)
                loss, g = mse_loss(out, yb)
                grads = dense.backward(g)
                opt.apply(dense.params(), grads.params, loop.lr(), f"epoch {epoch}, batch {b}")
                lm.append(loss)
                loop.step += 1
        except (NonFiniteError, FloatingPointError) as exc:
            raise TrainingAborted(epoch, b, exc) from exc
        loop.trace.records.append(EpochRecord(epoch, float(np.mean(lm)), float("nan"),
                                              loop.schedule.lr_at(max(loop.step - 1, 0)),
                                              time.perf_counter() - t0))
    return loop.trace


def train_oracle_wls(net: UncertaintyNet, data, true_sigma, cfg: TrainConfig) -> TrainTrace:
    """Train only the mean path with weights fixed to ``1 / max(sigma, floor)**2``.

    The variance head is never read or updated.
    """
    X, y = _xy(data)
    sigma = np.asarray(true_sigma, dtype=np.float64).reshape(-1, 1)
    if sigma.shape[0] != X.shape[0]:
        raise ValueError("true_sigma length must equal the sample count")
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("true_sigma must be strictly positive and finite")
    floor = net.min_variance_floor if cfg.variance_floor is None else cfg.variance_floor
    raw = 1.0 / np.maximum(sigma, floor) ** 2
    loop = _Loop(cfg)
    loop.trace.weights = raw[:, 0].copy()
    opt = cfg.optimizer.make(net.shared.params() + net.mean_head.params())
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lm = []
        b = 0
        try:
            for b, idx in enumerate(_batches(X.shape[0], cfg.batch_size, loop.order_rng)):
                w = raw[idx]
                if cfg.normalize_weights:
                    w = w / w.mean()
                lm.append(_mean_step(net, opt, X[idx], y[idx], w, loop.lr(), f"epoch {epoch}, batch {b}"))
                loop.step += 1
        except (NonFiniteError, FloatingPointError) as exc:
            raise TrainingAborted(epoch, b, exc) from exc
        loop.trace.records.append(EpochRecord(epoch, float(np.mean(lm)), float("nan"),
                                              loop.schedule.lr_at(max(loop.step - 1, 0)),
                                              time.perf_counter() - t0))
    return loop.trace
