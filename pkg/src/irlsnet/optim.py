"""First-order optimizers and learning-rate schedules.

Optimizers update parameter arrays in place. Each instance owns its moment
buffers, so two parameter groups that alternate objectives need two instances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nncore import NonFiniteError

DEFAULTS = {
    "sgdm": {"momentum": 0.9},
    "adagrad": {"eps": 1e-10},
    "rmsprop": {"decay": 0.99, "eps": 1e-8},
    "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
}
OPTIMIZERS = tuple(DEFAULTS)


class NonFiniteGradientError(NonFiniteError):
    def __init__(self, index: int, context: str = ""):
        self.index = index
        self.context = context
        where = f" ({context})" if context else ""
        super().__init__(f"non-finite gradient for parameter {index}{where}")


class Optimizer:
    kind = "base"

    def __init__(self, params, **hyper):
        unknown = set(hyper) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown {self.kind} hyperparameters: {sorted(unknown)}")
        self.hyper = {**DEFAULTS[self.kind], **hyper}
        self.shapes = [p.shape for p in params]
        self.step_count = 0
        self._init_buffers()

    def _init_buffers(self):
        pass

    def _zeros(self):
        return [np.zeros(s) for s in self.shapes]

    def apply(self, params, grads, lr: float, context: str = ""):
        """Take one step on ``params`` (in place) and return them."""
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if len(params) != len(self.shapes) or len(grads) != len(self.shapes):
            raise ValueError("params/grads do not match the optimizer's parameter set")
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != self.shapes[i] or np.shape(g) != self.shapes[i]:
                raise ValueError(f"parameter {i}: shape {p.shape} vs buffer {self.shapes[i]}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(i, context)
        self.step_count += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self._update(i, p, g, lr)
        return params

    def _update(self, i, p, g, lr):
        raise NotImplementedError


class SGDM(Optimizer):
    kind = "sgdm"

    def _init_buffers(self):
        self.velocity = self._zeros()

    def _update(self, i, p, g, lr):
        v = self.velocity[i]
        v *= self.hyper["momentum"]
        v += g
        p -= lr * v


class Adagrad(Optimizer):
    kind = "adagrad"

    def _init_buffers(self):
        self.accum = self._zeros()

    def _update(self, i, p, g, lr):
        self.accum[i] += g * g
        p -= lr * g / (np.sqrt(self.accum[i]) + self.hyper["eps"])


class RMSprop(Optimizer):
    kind = "rmsprop"

    def _init_buffers(self):
        self.square_avg = self._zeros()

    def _update(self, i, p, g, lr):
        rho = self.hyper["decay"]
        s = self.square_avg[i]
        s *= rho
        s += (1.0 - rho) * g * g
        p -= lr * g / (np.sqrt(s) + self.hyper["eps"])


class Adam(Optimizer):
    kind = "adam"

    def _init_buffers(self):
        self.m = self._zeros()
        self.v = self._zeros()

    def _update(self, i, p, g, lr):
        b1, b2, eps = self.hyper["beta1"], self.hyper["beta2"], self.hyper["eps"]
        m, v = self.m[i], self.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        t = self.step_count
        # bias-corrected m_hat / (sqrt(v_hat) + eps), written with fewer temporaries
        denom = np.sqrt(v / (1.0 - b2 ** t))
        denom += eps
        step = m / denom
        step *= lr / (1.0 - b1 ** t)
        p -= step


_CLASSES = {cls.kind: cls for cls in (SGDM, Adagrad, RMSprop, Adam)}


def make_optimizer(kind: str, params, **hyper) -> Optimizer:
    try:
        cls = _CLASSES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}") from None
    return cls(params, **hyper)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantSchedule:
    lr: float = 1e-3

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def lr_at(self, step: int) -> float:
        return self.lr


@dataclass(frozen=True)
class CyclicalSchedule:
    """Triangular cyclical LR: min -> max over the first half cycle, back to min over the second."""
    min_lr: float = 0.001
    max_lr: float = 0.01
    steps_per_cycle: int = 100

    def __post_init__(self):
        if not 0 < self.min_lr <= self.max_lr:
            raise ValueError("need 0 < min_lr <= max_lr")
        if self.steps_per_cycle < 2:
            raise ValueError("steps_per_cycle must be >= 2")

    def lr_at(self, step: int) -> float:
        if step < 0:
            raise ValueError("step must be >= 0")
        pos = step % self.steps_per_cycle
        half = self.steps_per_cycle / 2.0
        if pos == 0:
            return self.min_lr
        if pos == half:
            return self.max_lr
        frac = pos / half if pos < half else (self.steps_per_cycle - pos) / half
        lr = self.min_lr + (self.max_lr - self.min_lr) * frac
        return min(max(lr, self.min_lr), self.max_lr)


def lr_at(sched, step: int) -> float:
    return sched.lr_at(step)
