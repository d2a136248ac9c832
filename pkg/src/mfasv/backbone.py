"""TDNN embedding backbone and the four model variants.

Backbone: frame stage (variant-dependent) -> three SE-Res2 blocks with
dilations 2/3/4 -> concatenated block outputs -> pointwise aggregation conv
-> attentive statistics pooling with global context -> bn -> linear to a
192-dim embedding.

Variants:
  ecapa-tdnn      k=5 frame conv straight on the 80-bin features
  ecapa-cnn-tdnn  4-layer 3x3 conv stem (1->128->128->128->128, frequency
                  stride 2 at layers 1 and 3), flattened and fused pointwise
  mfa-standard    multi-scale frequency-channel attention front-end, C=32
  mfa-lite        same with C=24 and a 480-wide fusion
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InputError, ShapeError
from .features import FeatureMap
from .frontend import MfaConfig, MfaFrontend
from .nncore import (
    BatchNorm, ComplexityReport, Conv1d, Conv2d, Linear, Module, ModuleList,
    Tensor, broadcast_to, clamp_min, concat, count_params, mean_over_time,
    narrow, no_grad, relu, reshape, sigmoid, softmax, sqrt, t_mean, tanh,
)
from .rng import child_rng

__all__ = [
    "ModelVariant", "BackboneConfig", "ModelConfig",
    "TdnnBlock", "Res2Conv", "SeBlock", "SeRes2Block",
    "AttentiveStatsPooling", "CnnFrontend", "SpeakerEmbedder",
    "build_model", "embed", "VARIANT_CONFIGS",
]

STD_FLOOR = 1e-9


class ModelVariant(str, enum.Enum):
    ECAPA_TDNN = "ecapa-tdnn"
    ECAPA_CNN_TDNN = "ecapa-cnn-tdnn"
    MFA_STANDARD = "mfa-standard"
    MFA_LITE = "mfa-lite"

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(v.value for v in cls)
            raise ConfigError(f"unknown variant {name!r}; expected one of: {valid}") from None


@dataclass
class BackboneConfig:
    channels: int = 512          # C_E, width of the frame-level trunk
    dilations: tuple[int, ...] = (2, 3, 4)
    res2_scale: int = 8
    se_channels: int = 128
    agg_channels: int = 1536
    attn_channels: int = 128
    embed_dim: int = 192

    def __post_init__(self):
        if self.channels % self.res2_scale != 0:
            raise ConfigError(
                f"trunk width {self.channels} must divide by res2 scale {self.res2_scale}")


@dataclass
class ModelConfig:
    variant: str = ModelVariant.MFA_STANDARD.value
    in_bins: int = 80
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    mfa: MfaConfig | None = None          # set for the two MFA variants
    cnn_channels: int = 128               # width of the cnn-tdnn stem
    frame_kernel: int = 5                 # first conv kernel for plain ecapa-tdnn

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "in_bins": self.in_bins,
            "backbone": vars(self.backbone).copy(),
            "cnn_channels": self.cnn_channels,
            "frame_kernel": self.frame_kernel,
        }
        out["backbone"]["dilations"] = list(self.backbone.dilations)
        if self.mfa is not None:
            mfa = vars(self.mfa).copy()
            mfa["stem_strides"] = [list(s) for s in self.mfa.stem_strides]
            out["mfa"] = mfa
        else:
            out["mfa"] = None
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        bb = dict(d["backbone"])
        bb["dilations"] = tuple(bb["dilations"])
        mfa = None
        if d.get("mfa") is not None:
            m = dict(d["mfa"])
            m["stem_strides"] = tuple(tuple(s) for s in m["stem_strides"])
            mfa = MfaConfig(**m)
        return cls(variant=d["variant"], in_bins=d["in_bins"],
                   backbone=BackboneConfig(**bb), mfa=mfa,
                   cnn_channels=d.get("cnn_channels", 128),
                   frame_kernel=d.get("frame_kernel", 5))


def _scaled(value: int, mult: float, step: int = 1) -> int:
    scaled = max(step, int(round(value * mult / step)) * step)
    return scaled


def variant_config(variant: ModelVariant, width_multiplier: float = 1.0,
                   mfa_channels: int | None = None) -> ModelConfig:
    """Reference configuration for a variant, optionally shrunk for desk runs."""
    if width_multiplier <= 0:
        raise ConfigError("width_multiplier must be positive")
    bb = BackboneConfig()
    if variant is ModelVariant.MFA_LITE:
        bb = replace(bb, channels=480)
    if width_multiplier != 1.0:
        bb = replace(
            bb,
            channels=_scaled(bb.channels, width_multiplier, bb.res2_scale),
            agg_channels=_scaled(bb.agg_channels, width_multiplier, 8),
            se_channels=_scaled(bb.se_channels, width_multiplier, 8),
            attn_channels=_scaled(bb.attn_channels, width_multiplier, 8),
        )
    cfg = ModelConfig(variant=variant.value, backbone=bb)
    if variant in (ModelVariant.MFA_STANDARD, ModelVariant.MFA_LITE):
        channels = mfa_channels if mfa_channels is not None else (
            32 if variant is ModelVariant.MFA_STANDARD else 24)
        cfg.mfa = MfaConfig(channels=channels, out_channels=bb.channels)
    elif variant is ModelVariant.ECAPA_CNN_TDNN and width_multiplier != 1.0:
        cfg.cnn_channels = _scaled(cfg.cnn_channels, width_multiplier, 8)
    return cfg


VARIANT_CONFIGS = {v: variant_config(v) for v in ModelVariant}


class TdnnBlock(Module):
    """conv1d -> bn -> relu."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 1,
                 dilation: int = 1, rng=None, dtype=np.float32):
        super().__init__()
        self.conv = Conv1d(in_channels, out_channels, kernel, dilation=dilation, rng=rng, dtype=dtype)
        self.bn = BatchNorm(out_channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.bn(self.conv(x)))

    def macs(self, frames: int) -> int:
        return self.conv.macs(frames)


class Res2Conv(Module):
    """Channel-split hierarchical convolution: chunk 0 passes through,
    chunk 1 is convolved alone, later chunks add the previous output."""

    def __init__(self, channels: int, scale: int, kernel: int, dilation: int,
                 rng=None, dtype=np.float32):
        super().__init__()
        if channels % scale != 0:
            raise ConfigError(f"{channels} channels do not split into {scale} chunks")
        self.scale = scale
        self.width = channels // scale
        self.blocks = ModuleList(
            TdnnBlock(self.width, self.width, kernel, dilation, rng=rng, dtype=dtype)
            for _ in range(scale - 1)
        )

    def forward(self, x: Tensor) -> Tensor:
        chunks = [narrow(x, 1, i * self.width, self.width) for i in range(self.scale)]
        outs = [chunks[0]]
        prev: Tensor | None = None
        for i in range(1, self.scale):
            inp = chunks[i] if prev is None else chunks[i] + prev
            prev = self.blocks[i - 1](inp)
            outs.append(prev)
        return concat(outs, axis=1)

    def macs(self, frames: int) -> int:
        return sum(b.macs(frames) for b in self.blocks)


class SeBlock(Module):
    """Squeeze-excitation over time: per-channel sigmoid gates from the GAP."""

    def __init__(self, channels: int, bottleneck: int, rng=None, dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(channels, bottleneck, rng=rng, dtype=dtype)
        self.fc2 = Linear(bottleneck, channels, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        pooled = mean_over_time(x)  # [B, C]
        gate = sigmoid(self.fc2(relu(self.fc1(pooled))))
        b, c = gate.shape
        return x * reshape(gate, (b, c, 1))

    def macs(self) -> int:
        return self.fc1.macs() + self.fc2.macs()


class SeRes2Block(Module):
    """1x1 conv -> res2 dilated conv -> 1x1 conv -> SE, with a residual add."""

    def __init__(self, channels: int, kernel: int, dilation: int, res2_scale: int,
                 se_channels: int, rng=None, dtype=np.float32):
        super().__init__()
        self.tdnn1 = TdnnBlock(channels, channels, 1, rng=rng, dtype=dtype)
        self.res2 = Res2Conv(channels, res2_scale, kernel, dilation, rng=rng, dtype=dtype)
        self.tdnn2 = TdnnBlock(channels, channels, 1, rng=rng, dtype=dtype)
        self.se = SeBlock(channels, se_channels, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        y = self.tdnn1(x)
        y = self.res2(y)
        y = self.tdnn2(y)
        y = self.se(y)
        return y + x

    def macs(self, frames: int) -> int:
        return (self.tdnn1.macs(frames) + self.res2.macs(frames)
                + self.tdnn2.macs(frames) + self.se.macs())


class AttentiveStatsPooling(Module):
    """Channel-wise attention over time with global-context conditioning.

    Produces concat(weighted mean, weighted std); the variance is floored at
    1e-9 before the square root.
    """

    def __init__(self, channels: int, attn_channels: int, rng=None, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.conv1 = Conv1d(3 * channels, attn_channels, 1, rng=rng, dtype=dtype)
        self.bn = BatchNorm(attn_channels, dtype=dtype)
        self.conv2 = Conv1d(attn_channels, channels, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        b, c, l = x.shape
        if l < 2:
            raise InputError(f"attentive pooling needs at least 2 frames, got {l}")
        mu = t_mean(x, axis=2, keepdims=True)                       # [B,C,1]
        var = t_mean(x * x, axis=2, keepdims=True) - mu * mu
        sd = _sqrt_floor(var)
        ctx = concat([x, broadcast_to(mu, (b, c, l)), broadcast_to(sd, (b, c, l))], axis=1)
        scores = self.conv2(tanh(self.bn(relu(self.conv1(ctx)))))
        alpha = softmax(scores, axis=2)                              # sums to 1 over time
        mean = (alpha * x).sum(axis=2)
        meansq = (alpha * (x * x)).sum(axis=2)
        std = _sqrt_floor(meansq - mean * mean)
        return concat([mean, std], axis=1)                           # [B, 2C]

    def macs(self, frames: int) -> int:
        return self.conv1.macs(frames) + self.conv2.macs(frames)


def _sqrt_floor(var: Tensor) -> Tensor:
    return sqrt(clamp_min(var, STD_FLOOR))


class CnnFrontend(Module):
    """Plain 2-D conv stem: four 3x3 layers, frequency stride 2 at 1 and 3,
    flattened channel-major and fused pointwise to the trunk width."""

    def __init__(self, in_bins: int, channels: int, out_channels: int,
                 rng=None, dtype=np.float32):
        super().__init__()
        self.in_bins = in_bins
        strides = ((2, 1), (1, 1), (2, 1), (1, 1))
        self.convs = ModuleList()
        self.bns = ModuleList()
        c_in = 1
        d = in_bins
        for s in strides:
            self.convs.append(Conv2d(c_in, channels, 3, stride=s, rng=rng, dtype=dtype))
            self.bns.append(BatchNorm(channels, dtype=dtype))
            c_in = channels
            d = (d - 1) // s[0] + 1
        self.reduced_bins = d
        self.flat_width = channels * d
        self.fusion = Conv1d(self.flat_width, out_channels, 1, rng=rng, dtype=dtype)
        self.fusion_bn = BatchNorm(out_channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        for conv, bn in zip(self.convs, self.bns):
            x = relu(bn(conv(x)))
        b, c, d, l = x.shape
        flat = reshape(x, (b, c * d, l))
        return relu(self.fusion_bn(self.fusion(flat)))

    def complexity(self, frames: int) -> ComplexityReport:
        rep = ComplexityReport("cnn-frontend", frames)
        extents = (self.in_bins, frames)
        macs = 0
        params = 0
        for conv, bn in zip(self.convs, self.bns):
            macs += conv.macs(extents)
            extents = conv.out_extent(extents)
            params += count_params(conv) + count_params(bn)
        rep.add("stem", params, macs)
        rep.add("fusion", count_params(self.fusion) + count_params(self.fusion_bn),
                self.fusion.macs(frames))
        return rep


class SpeakerEmbedder(Module):
    """Front-end + trunk + pooling -> fixed 192-dim embedding."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.config = config
        variant = ModelVariant.parse(config.variant)
        bb = config.backbone
        rng = child_rng(seed, "model", variant.value)

        self.frontend: Module | None = None
        self.frame_conv: Module | None = None
        if variant is ModelVariant.ECAPA_TDNN:
            self.frame_conv = TdnnBlock(config.in_bins, bb.channels, config.frame_kernel,
                                        rng=rng, dtype=dtype)
        elif variant is ModelVariant.ECAPA_CNN_TDNN:
            self.frontend = CnnFrontend(config.in_bins, config.cnn_channels, bb.channels,
                                        rng=rng, dtype=dtype)
        else:
            if config.mfa is None:
                raise ConfigError("MFA variants need an MfaConfig")
            if config.mfa.out_channels != bb.channels:
                raise ConfigError(
                    f"front-end fusion width {config.mfa.out_channels} must equal "
                    f"trunk width {bb.channels}")
            self.frontend = MfaFrontend(config.mfa, rng=rng, dtype=dtype)

        self.blocks = ModuleList(
            SeRes2Block(bb.channels, 3, d, bb.res2_scale, bb.se_channels, rng=rng, dtype=dtype)
            for d in bb.dilations
        )
        agg_in = bb.channels * len(bb.dilations)
        self.agg = TdnnBlock(agg_in, bb.agg_channels, 1, rng=rng, dtype=dtype)
        self.pool = AttentiveStatsPooling(bb.agg_channels, bb.attn_channels, rng=rng, dtype=dtype)
        self.post_bn = BatchNorm(2 * bb.agg_channels, dtype=dtype)
        self.fc = Linear(2 * bb.agg_channels, bb.embed_dim, rng=rng, dtype=dtype)

    @property
    def variant(self) -> ModelVariant:
        return ModelVariant.parse(self.config.variant)

    def frame_stage(self, x: Tensor) -> Tensor:
        """Map features to the trunk width: [B,1,D,L] or [B,D,L] -> [B,C_E,L]."""
        if self.frame_conv is not None:
            if x.ndim == 4:
                b, c, d, l = x.shape
                if c != 1:
                    raise ShapeError(f"expected a single input channel, got {c}")
                x = reshape(x, (b, d, l))
            return self.frame_conv(x)
        if x.ndim == 3:
            x = reshape(x, (x.shape[0], 1) + x.shape[1:])
        return self.frontend(x)

    def forward(self, x: Tensor) -> Tensor:
        h = self.frame_stage(x)
        block_outs = []
        cur = h
        for block in self.blocks:
            cur = block(cur)
            block_outs.append(cur)
        agg = self.agg(concat(block_outs, axis=1))
        stats = self.post_bn(self.pool(agg))
        return self.fc(stats)

    # -- complexity ---------------------------------------------------------------

    def complexity(self, frames: int) -> ComplexityReport:
        bb = self.config.backbone
        rep = ComplexityReport(self.config.variant, frames)
        if self.frame_conv is not None:
            rep.add("frame_conv", count_params(self.frame_conv), self.frame_conv.macs(frames))
        else:
            sub = self.frontend.complexity(frames)
            rep.add("frontend", sum(p.params for p in sub.parts), sub.total_macs)
        for i, block in enumerate(self.blocks):
            rep.add(f"block{i + 1}", count_params(block), block.macs(frames))
        rep.add("aggregation", count_params(self.agg), self.agg.macs(frames))
        rep.add("pooling", count_params(self.pool), self.pool.macs(frames))
        rep.add("head", count_params(self.post_bn) + count_params(self.fc), self.fc.macs())
        return rep


def build_model(variant: ModelVariant | str, seed: int = 0,
                width_multiplier: float = 1.0, mfa_channels: int | None = None,
                dtype=np.float32) -> SpeakerEmbedder:
    """Construct a variant at reference or reduced width, deterministically."""
    v = ModelVariant.parse(variant) if isinstance(variant, str) else variant
    cfg = variant_config(v, width_multiplier=width_multiplier, mfa_channels=mfa_channels)
    return SpeakerEmbedder(cfg, seed=seed, dtype=dtype)


def embed(fmap: FeatureMap, model: SpeakerEmbedder) -> np.ndarray:
    """Embed one utterance; always runs in eval mode without graph capture."""
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            x = Tensor(fmap.data[None])  # [1, 1, D, L]
            out = model(x)
    finally:
        if was_training:
            model.train()
    vec = out.data[0]
    if not np.all(np.isfinite(vec)):
        raise InputError(f"non-finite embedding for {fmap.utterance_id or 'utterance'}")
    return vec
