"""Named finite-difference checks covering every layer family.

Shared by the `gradcheck` CLI command and the test suite. All checks run in
float64; inputs for piecewise-linear ops are kept away from their kinks so
central differences stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backbone import AttentiveStatsPooling, Res2Conv, SeBlock, SeRes2Block
from .frontend import DualPathModule, FaBlock, MfaConfig
from .nncore import (
    BatchNorm, Conv1d, Conv2d, Linear, Tensor,
    clamp_min, exp, log, relu, sigmoid, softmax, sqrt, tanh,
)
from .rng import child_rng
from .training import AamSoftmax

__all__ = ["GradCheck", "gradient_check_battery"]

F64 = np.float64


@dataclass
class GradCheck:
    name: str
    fn: Callable[[], Tensor]
    leaves: list[Tensor]


def _signed(rng, shape, low=0.2, high=1.5):
    """Magnitudes in [low, high] with random signs: no values near 0."""
    mag = rng.uniform(low, high, size=shape)
    sign = rng.choice([-1.0, 1.0], size=shape)
    return Tensor((mag * sign).astype(F64), requires_grad=True)


def _smooth(rng, shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _projected(module, x: Tensor, r: np.ndarray) -> Callable[[], Tensor]:
    ref = Tensor(r, requires_grad=False)

    def fn() -> Tensor:
        return (module(x) * ref).sum()

    return fn


def _module_check(name: str, module, x: Tensor, rng) -> GradCheck:
    probe = module(x)
    r = rng.standard_normal(probe.shape)
    leaves = [p for p in module.parameters()] + [x]
    return GradCheck(name, _projected(module, x, r), leaves)


def _op_check(name: str, op, x: Tensor, rng, **kwargs) -> GradCheck:
    probe = op(x, **kwargs)
    r = Tensor(rng.standard_normal(probe.shape), requires_grad=False)

    def fn() -> Tensor:
        return (op(x, **kwargs) * r).sum()

    return GradCheck(name, fn, [x])


def gradient_check_battery(seed: int = 0) -> list[GradCheck]:
    rng = child_rng(seed, "gradcheck")
    checks: list[GradCheck] = []

    checks.append(_module_check(
        "linear", Linear(5, 4, rng=rng, dtype=F64), _smooth(rng, (3, 5)), rng))
    checks.append(_module_check(
        "conv1d", Conv1d(3, 4, 3, rng=rng, dtype=F64), _smooth(rng, (2, 3, 7)), rng))
    checks.append(_module_check(
        "conv1d_dilated", Conv1d(3, 4, 3, dilation=2, rng=rng, dtype=F64),
        _smooth(rng, (2, 3, 9)), rng))
    checks.append(_module_check(
        "conv1d_strided", Conv1d(3, 4, 3, stride=2, rng=rng, dtype=F64),
        _smooth(rng, (2, 3, 8)), rng))
    checks.append(_module_check(
        "conv2d", Conv2d(2, 3, 3, rng=rng, dtype=F64), _smooth(rng, (2, 2, 6, 5)), rng))
    checks.append(_module_check(
        "conv2d_strided", Conv2d(2, 3, 3, stride=(2, 1), rng=rng, dtype=F64),
        _smooth(rng, (1, 2, 8, 5)), rng))

    bn_train = BatchNorm(4, dtype=F64)
    bn_train.train()
    checks.append(_module_check("batchnorm_train", bn_train, _smooth(rng, (3, 4, 6)), rng))

    bn_eval = BatchNorm(4, dtype=F64)
    bn_eval.eval()
    bn_eval.running_mean[:] = rng.standard_normal(4)
    bn_eval.running_var[:] = rng.uniform(0.5, 2.0, 4)
    checks.append(_module_check("batchnorm_eval", bn_eval, _smooth(rng, (3, 4, 6)), rng))

    checks.append(_op_check("relu", relu, _signed(rng, (4, 5)), rng))
    checks.append(_op_check("sigmoid", sigmoid, _smooth(rng, (4, 5)), rng))
    checks.append(_op_check("tanh", tanh, _smooth(rng, (4, 5)), rng))
    checks.append(_op_check("softmax", softmax, _smooth(rng, (3, 6)), rng, axis=1))
    checks.append(_op_check("exp", exp, _smooth(rng, (4, 5), scale=0.5), rng))

    pos = Tensor(rng.uniform(0.3, 2.0, (4, 5)), requires_grad=True)
    checks.append(_op_check("log", log, pos, rng))

    # clamp kink sits at 0.1; signed inputs keep a 0.1 margin on either side
    clamped = _signed(rng, (4, 5))
    probe_r = Tensor(rng.standard_normal((4, 5)), requires_grad=False)
    checks.append(GradCheck(
        "sqrt_clamped",
        lambda: (sqrt(clamp_min(clamped, 0.1)) * probe_r).sum(),
        [clamped]))

    checks.append(_module_check(
        "attentive_pooling", AttentiveStatsPooling(6, 4, rng=rng, dtype=F64),
        _smooth(rng, (2, 6, 7)), rng))
    checks.append(_module_check(
        "se_gate", SeBlock(6, 3, rng=rng, dtype=F64), _smooth(rng, (2, 6, 5)), rng))
    checks.append(_module_check(
        "res2_hierarchy", Res2Conv(8, 4, 3, 2, rng=rng, dtype=F64),
        _smooth(rng, (2, 8, 6)), rng))
    checks.append(_module_check(
        "se_res2_block", SeRes2Block(8, 3, 2, 4, 4, rng=rng, dtype=F64),
        _smooth(rng, (2, 8, 6)), rng))
    checks.append(_module_check(
        "freq_attention", FaBlock(4, 2, rng=rng, dtype=F64), _smooth(rng, (2, 2, 2, 5)), rng))

    dm_cfg = MfaConfig(in_bins=8, channels=4, n_scales=2, reduction=2, out_channels=8)
    dm = DualPathModule(dm_cfg, rng=rng, dtype=F64)
    dm.train()
    checks.append(_module_check("dual_path_module", dm, _smooth(rng, (2, 4, 2, 5)), rng))

    head = AamSoftmax(3, 4, rng=rng, dtype=F64)
    emb = _smooth(rng, (2, 4))
    labels = np.array([0, 2])
    checks.append(GradCheck(
        "margin_head", lambda: head(emb, labels), [head.weight, emb]))

    return checks
