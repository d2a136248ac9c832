"""Finite-difference verification of analytic gradients.

The numeric side is an independent oracle: central differences on the same
forward function, run in float64. Relative error uses a unit floor in the
denominator so vanishing gradients are judged on absolute error:

    rel = |analytic - numeric| / max(|analytic|, |numeric|, 1)
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import GradientCheckError
from .tensor import Tensor

__all__ = ["gradcheck", "max_rel_error"]

DEFAULT_EPS = 1e-5
DEFAULT_TOL = 1e-4


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def _numeric_grad(fn: Callable[[], Tensor], leaf: Tensor, eps: float) -> np.ndarray:
    grad = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(fn().data)
        flat[i] = orig - eps
        f_minus = float(fn().data)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def gradcheck(fn: Callable[[], Tensor], leaves: Sequence[Tensor],
              eps: float = DEFAULT_EPS, tol: float = DEFAULT_TOL,
              raise_on_fail: bool = True) -> float:
    """Compare analytic gradients of a scalar-valued ``fn`` against central differences.

    ``fn`` must be a pure function of the current values of ``leaves`` (all
    float64, requires_grad=True). Returns the worst relative error seen.
    """
    for leaf in leaves:
        if leaf.data.dtype != np.float64:
            raise GradientCheckError("gradcheck requires float64 leaves")
        leaf.grad = None

    out = fn()
    if out.data.size != 1:
        raise GradientCheckError("gradcheck target must be scalar")
    out.backward()

    worst = 0.0
    for idx, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = _numeric_grad(fn, leaf, eps)
        err = max_rel_error(analytic, numeric)
        if err > worst:
            worst = err
        if raise_on_fail and err > tol:
            raise GradientCheckError(
                f"gradient mismatch on leaf {idx} shape {leaf.data.shape}: "
                f"max rel error {err:.3e} > {tol:.1e}")
    return worst
