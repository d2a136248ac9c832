"""Multi-scale frequency-channel attention front-end.

Dataflow for an input map [B, 1, D, L]:

  stem     two 3x3 conv+bn+relu layers, each striding frequency by 2,
           so D collapses to D' = D / 4 while time is preserved
  split    channels divide into s equal groups x_1..x_s
  2-D path hierarchical: y_i = relu(bn(conv3x3(x_i + y_{i-1}))), y_0 = 0
  FA       per group, squeeze y_i over time, flatten channel-major to a
           n*D' vector, gate it through a bottleneck MLP with sigmoid
  1-D path flatten gated maps to [n*D', L]; hierarchical TDNN:
           z_i = relu(bn(conv_k3(f_i + z_{i-1}))), z_0 = 0
  fusion   concat(z_1..z_s) -> pointwise conv to C_E channels + bn + relu

The fused [B, C_E, L] sequence replaces the first frame-level layer of the
embedding backbone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .nncore import (
    BatchNorm, Conv1d, Conv2d, Linear, Module, ModuleList, Tensor,
    ComplexityReport, concat, count_params, mean_over_time, narrow, relu, reshape, sigmoid,
)

__all__ = ["MfaConfig", "FaBlock", "ScaleStage", "DualPathModule", "MfaFrontend",
           "DmState", "split_scales", "fa_squeeze", "fa_apply"]


@dataclass
class MfaConfig:
    in_bins: int = 80
    channels: int = 32          # stem width C; groups get n = C / n_scales
    n_scales: int = 4
    reduction: int = 8
    out_channels: int = 512     # C_E handed to the backbone
    stem_strides: tuple[tuple[int, int], ...] = ((2, 1), (2, 1))
    cnn_hierarchical: bool = True
    tdnn_hierarchical: bool = True

    def __post_init__(self):
        if self.n_scales < 1:
            raise ConfigError("n_scales must be >= 1")
        if self.channels % self.n_scales != 0:
            raise ConfigError(
                f"channels ({self.channels}) must divide evenly into {self.n_scales} scales")
        if self.reduction < 1:
            raise ConfigError("reduction must be >= 1")
        for s in self.stem_strides:
            if s[0] < 1 or s[1] < 1:
                raise ConfigError("stem strides must be >= 1")

    @property
    def group_channels(self) -> int:
        return self.channels // self.n_scales

    @property
    def reduced_bins(self) -> int:
        d = self.in_bins
        for s_f, _ in self.stem_strides:
            d = (d - 1) // s_f + 1
        return d

    @property
    def group_width(self) -> int:
        """Flattened per-group channel count n * D'."""
        return self.group_channels * self.reduced_bins


def split_scales(x: Tensor, n_scales: int) -> list[Tensor]:
    """Divide the channel axis (axis 1 of [B,C,D,L]) into equal groups."""
    c = x.shape[1]
    if c % n_scales != 0:
        raise ShapeError(f"cannot split {c} channels into {n_scales} groups")
    n = c // n_scales
    return [narrow(x, 1, i * n, n) for i in range(n_scales)]


def fa_squeeze(y: Tensor) -> Tensor:
    """Average a [B, n, D', L] map over time, flatten channel-major to [B, n*D']."""
    pooled = mean_over_time(y)  # [B, n, D']
    b, n, d = pooled.shape
    return reshape(pooled, (b, n * d))


def fa_apply(y: Tensor, gates: Tensor) -> Tensor:
    """Scale map cell (c, f, t) by gate index c * D' + f, broadcast over time."""
    b, n, d, _ = y.shape
    return y * reshape(gates, (b, n, d, 1))


class FaBlock(Module):
    """Frequency-channel attention: bottleneck MLP over the squeezed map."""

    def __init__(self, width: int, reduction: int = 8,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        hidden = max(1, width // reduction)
        self.width = width
        self.fc1 = Linear(width, hidden, rng=rng, dtype=dtype)
        self.fc2 = Linear(hidden, width, rng=rng, dtype=dtype)

    def gates(self, squeezed: Tensor) -> Tensor:
        return sigmoid(self.fc2(relu(self.fc1(squeezed))))

    def forward(self, y: Tensor) -> Tensor:
        return fa_apply(y, self.gates(fa_squeeze(y)))

    def macs(self) -> int:
        return self.fc1.macs() + self.fc2.macs()


class ScaleStage(Module):
    """One scale's layers: 2-D conv+bn, FA, flattened TDNN conv+bn."""

    def __init__(self, group_channels: int, reduced_bins: int, reduction: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        width = group_channels * reduced_bins
        self.conv2d = Conv2d(group_channels, group_channels, 3, rng=rng, dtype=dtype)
        self.bn2d = BatchNorm(group_channels, dtype=dtype)
        self.fa = FaBlock(width, reduction, rng=rng, dtype=dtype)
        self.tdnn = Conv1d(width, width, 3, rng=rng, dtype=dtype)
        self.bn1d = BatchNorm(width, dtype=dtype)


@dataclass
class DmState:
    """Per-scale intermediates, exposed so hierarchy probes can inspect them."""

    cnn_maps: list[Tensor] = field(default_factory=list)    # y_i, pre-gating
    gates: list[Tensor] = field(default_factory=list)       # FA gate vectors
    tdnn_maps: list[Tensor] = field(default_factory=list)   # z_i


class DualPathModule(Module):
    """Hierarchical 2-D and TDNN paths over the channel groups, FA in between."""

    def __init__(self, cfg: MfaConfig, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.stages = ModuleList(
            ScaleStage(cfg.group_channels, cfg.reduced_bins, cfg.reduction, rng=rng, dtype=dtype)
            for _ in range(cfg.n_scales)
        )

    def forward_state(self, x: Tensor, force_unit_gates: bool = False) -> DmState:
        if x.shape[1] != self.cfg.channels:
            raise ShapeError(f"expected {self.cfg.channels} channels, got {x.shape[1]}")
        groups = split_scales(x, self.cfg.n_scales)
        state = DmState()
        prev_y: Tensor | None = None
        for group, stage in zip(groups, self.stages):
            inp = group + prev_y if (prev_y is not None and self.cfg.cnn_hierarchical) else group
            y = relu(stage.bn2d(stage.conv2d(inp)))
            state.cnn_maps.append(y)
            prev_y = y

            gates = stage.fa.gates(fa_squeeze(y))
            state.gates.append(gates)

        prev_z: Tensor | None = None
        for y, gates, stage in zip(state.cnn_maps, state.gates, self.stages):
            gated = y if force_unit_gates else fa_apply(y, gates)
            b, n, d, l = gated.shape
            flat = reshape(gated, (b, n * d, l))
            inp = flat + prev_z if (prev_z is not None and self.cfg.tdnn_hierarchical) else flat
            z = relu(stage.bn1d(stage.tdnn(inp)))
            state.tdnn_maps.append(z)
            prev_z = z
        return state

    def forward(self, x: Tensor, force_unit_gates: bool = False) -> Tensor:
        state = self.forward_state(x, force_unit_gates=force_unit_gates)
        return concat(state.tdnn_maps, axis=1)


class MfaFrontend(Module):
    """Stem + dual-path module + pointwise fusion producing [B, C_E, L]."""

    def __init__(self, cfg: MfaConfig | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        cfg = cfg or MfaConfig()
        self.cfg = cfg
        strides = cfg.stem_strides
        self.stem_conv1 = Conv2d(1, cfg.channels, 3, stride=strides[0], rng=rng, dtype=dtype)
        self.stem_bn1 = BatchNorm(cfg.channels, dtype=dtype)
        self.stem_conv2 = Conv2d(cfg.channels, cfg.channels, 3, stride=strides[1], rng=rng, dtype=dtype)
        self.stem_bn2 = BatchNorm(cfg.channels, dtype=dtype)
        self.dm = DualPathModule(cfg, rng=rng, dtype=dtype)
        self.fusion = Conv1d(cfg.n_scales * cfg.group_width, cfg.out_channels, 1, rng=rng, dtype=dtype)
        self.fusion_bn = BatchNorm(cfg.out_channels, dtype=dtype)

    def stem(self, x: Tensor) -> Tensor:
        y = relu(self.stem_bn1(self.stem_conv1(x)))
        return relu(self.stem_bn2(self.stem_conv2(y)))

    def forward(self, x: Tensor, force_unit_gates: bool = False) -> Tensor:
        squeeze = x.ndim == 3
        if squeeze:
            x = reshape(x, (1,) + x.shape)
        if x.shape[1] != 1 or x.shape[2] != self.cfg.in_bins:
            raise ShapeError(
                f"front-end expects [B, 1, {self.cfg.in_bins}, L], got {x.shape}")
        y = self.stem(x)
        z = self.dm(y, force_unit_gates=force_unit_gates)
        out = relu(self.fusion_bn(self.fusion(z)))
        if squeeze:
            out = reshape(out, out.shape[1:])
        return out

    # -- complexity -------------------------------------------------------------

    def complexity(self, frames: int) -> ComplexityReport:
        cfg = self.cfg
        rep = ComplexityReport("mfa-frontend", frames)
        d = cfg.in_bins
        extents = (d, frames)
        macs = self.stem_conv1.macs(extents)
        extents = self.stem_conv1.out_extent(extents)
        macs += self.stem_conv2.macs(extents)
        extents = self.stem_conv2.out_extent(extents)
        stem_params = (count_params(self.stem_conv1) + count_params(self.stem_bn1)
                       + count_params(self.stem_conv2) + count_params(self.stem_bn2))
        rep.add("stem", stem_params, macs)
        for i, stage in enumerate(self.dm.stages):
            macs = stage.conv2d.macs(extents) + stage.fa.macs() + stage.tdnn.macs(frames)
            rep.add(f"scale{i + 1}", count_params(stage), macs)
        rep.add("fusion", count_params(self.fusion) + count_params(self.fusion_bn),
                self.fusion.macs(frames))
        return rep
