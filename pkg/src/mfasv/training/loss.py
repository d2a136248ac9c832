"""Additive angular margin softmax over cosine logits.

Embeddings and class weights are L2-normalized; the target class logit is
scale * cos(theta + margin), computed as cos*cos(m) - sin*sin(m) so no
arccos is needed, and every other logit is scale * cos(theta). With
margin = 0 and scale = 1 this reduces exactly to plain softmax
cross-entropy over the cosines.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericsError
from ..nncore import (
    Linear, Module, Parameter, Tensor, clamp_min, exp, log, sqrt, t_sum, uniform_init,
)

__all__ = ["AamSoftmax", "aam_softmax_loss", "cross_entropy_from_logits"]

_SIN_SQ_FLOOR = 1e-12
_EMB_NORM_FLOOR = 1e-8


def _unit_rows(x: Tensor, what: str) -> Tensor:
    sq = t_sum(x * x, axis=1, keepdims=True)
    if np.any(sq.data < _EMB_NORM_FLOOR ** 2):
        raise NumericsError(f"cannot normalize a zero-norm {what}")
    return x / sqrt(sq)


def cross_entropy_from_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood; stable log-sum-exp with a constant shift."""
    b, n = logits.shape
    onehot = np.zeros((b, n), dtype=logits.data.dtype)
    onehot[np.arange(b), labels] = 1.0
    shift = Tensor(logits.data.max(axis=1, keepdims=True))  # constant, no grad
    z = logits - shift
    lse = log(t_sum(exp(z), axis=1, keepdims=True)) + shift   # [B, 1]
    target = t_sum(logits * Tensor(onehot), axis=1, keepdims=True)
    return (lse - target).mean()


class AamSoftmax(Module):
    """Classification head returning the mean margin-softmax loss of a batch."""

    def __init__(self, n_classes: int, embed_dim: int = 192,
                 margin: float = 0.2, scale: float = 30.0,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        if n_classes < 2:
            raise ConfigError("need at least two classes")
        if margin < 0 or margin >= np.pi / 2:
            raise ConfigError(f"margin must lie in [0, pi/2), got {margin}")
        if scale <= 0:
            raise ConfigError("scale must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_classes = n_classes
        self.margin = float(margin)
        self.scale = float(scale)
        self.weight = Parameter(uniform_init(rng, (n_classes, embed_dim), embed_dim, dtype))

    def cosines(self, emb: Tensor) -> Tensor:
        from ..nncore import linear
        e = _unit_rows(emb, "embedding")
        w = _unit_rows(self.weight, "class weight")
        return linear(e, w)

    def forward(self, emb: Tensor, labels: np.ndarray) -> Tensor:
        if emb.ndim == 1:
            emb = emb.reshape((1, emb.shape[0]))
        labels = np.atleast_1d(np.asarray(labels))
        if labels.shape[0] != emb.shape[0]:
            raise ConfigError(f"{labels.shape[0]} labels for a batch of {emb.shape[0]}")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ConfigError("label out of range")
        cos = self.cosines(emb)
        b = cos.shape[0]
        onehot = np.zeros(cos.shape, dtype=cos.data.dtype)
        onehot[np.arange(b), labels] = 1.0
        onehot_t = Tensor(onehot)
        # cos(theta + m) via the angle-sum identity; sin floored away from 0
        # so the sqrt gradient stays finite at |cos| ~ 1.
        sin = sqrt(clamp_min(1.0 - cos * cos, _SIN_SQ_FLOOR))
        cos_margin = cos * float(np.cos(self.margin)) - sin * float(np.sin(self.margin))
        logits = (onehot_t * cos_margin + (1.0 - onehot_t) * cos) * self.scale
        return cross_entropy_from_logits(logits, labels)


def aam_softmax_loss(emb: Tensor, labels, weight: Tensor,
                     margin: float = 0.2, scale: float = 30.0) -> Tensor:
    """Functional form over an explicit class-weight tensor."""
    head = AamSoftmax.__new__(AamSoftmax)
    Module.__init__(head)
    head.n_classes = weight.shape[0]
    head.margin = float(margin)
    head.scale = float(scale)
    head.weight = weight  # any Tensor works; gradients flow to the caller's leaf
    return head(emb, labels)
