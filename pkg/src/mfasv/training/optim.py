"""Adam with decoupled weight decay, and the triangular cyclical schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericsError
from ..nncore import Parameter

__all__ = ["CyclicalLr", "Adam"]


@dataclass
class CyclicalLr:
    """Triangular wave between lr_min and lr_max with period cycle_steps.

    lr(0) == lr_min and lr(cycle_steps / 2) == lr_max exactly; the wave is
    linear in between and periodic.
    """

    lr_min: float = 1e-8
    lr_max: float = 1e-3
    cycle_steps: int = 1000

    def __post_init__(self):
        if not (0 < self.lr_min <= self.lr_max):
            raise ConfigError("need 0 < lr_min <= lr_max")
        if self.cycle_steps < 2:
            raise ConfigError("cycle_steps must be at least 2")

    def lr(self, step: int) -> float:
        if step < 0:
            raise ConfigError("step must be non-negative")
        half = self.cycle_steps / 2.0
        pos = step % self.cycle_steps
        frac = pos / half if pos <= half else (self.cycle_steps - pos) / half
        # Convex blend is exact at both endpoints.
        return self.lr_min * (1.0 - frac) + self.lr_max * frac


class Adam:
    """Moment-based updates plus a post-step multiplicative decay.

    The decay is decoupled: after the gradient step each decayed parameter
    is scaled by (1 - lr * weight_decay), so a zero-gradient step shrinks
    parameters by exactly that factor.
    """

    def __init__(self, params: dict[str, Parameter], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 2e-5):
        if not params:
            raise ConfigError("optimizer needs at least one parameter")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        self.params = {name: p for name, p in params.items() if p.requires_grad}
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericsError(f"non-finite gradient in parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= (lr * update).astype(p.data.dtype, copy=False)
            if self.weight_decay > 0.0:
                p.data *= p.data.dtype.type(1.0 - lr * self.weight_decay)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
