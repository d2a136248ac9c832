"""Trunk blocks, pooling oracles, variant wiring, and the embed() contract."""

import numpy as np
import pytest

from mfasv.backbone import (
    STD_FLOOR, AttentiveStatsPooling, BackboneConfig, CnnFrontend, ModelConfig,
    ModelVariant, Res2Conv, SeBlock, SeRes2Block, SpeakerEmbedder, build_model,
    embed, variant_config,
)
from mfasv.errors import ConfigError, InputError
from mfasv.features import FeatureMap
from mfasv.frontend import MfaConfig
from mfasv.nncore import Tensor

TOY = dict(width_multiplier=1 / 32, mfa_channels=8)


def toy_model(variant: str, seed: int = 0) -> SpeakerEmbedder:
    kw = dict(TOY)
    if not variant.startswith("mfa"):
        kw.pop("mfa_channels")
    return build_model(variant, seed=seed, **kw)


# -- res2 hierarchy -----------------------------------------------------------------


def test_res2_chunk_zero_passes_through(rng):
    r2 = Res2Conv(8, scale=4, kernel=3, dilation=1, rng=rng)
    x = rng.standard_normal((2, 8, 9)).astype(np.float32)
    out = r2(Tensor(x)).data
    np.testing.assert_array_equal(out[:, :2], x[:, :2])


def test_res2_perturbation_respects_chunk_order(rng):
    r2 = Res2Conv(8, scale=4, kernel=3, dilation=2, rng=rng)
    x = rng.standard_normal((2, 8, 9)).astype(np.float32)
    base = r2(Tensor(x)).data
    for j in range(1, 4):
        alt_x = x.copy()
        alt_x[:, j * 2:(j + 1) * 2] += 1.0
        alt = r2(Tensor(alt_x)).data
        np.testing.assert_array_equal(alt[:, :j * 2], base[:, :j * 2])
        assert not np.array_equal(alt[:, j * 2:(j + 1) * 2], base[:, j * 2:(j + 1) * 2])


def test_res2_rejects_uneven_split():
    with pytest.raises(ConfigError):
        Res2Conv(10, scale=4, kernel=3, dilation=1)


# -- squeeze-excitation --------------------------------------------------------------


def test_se_gates_are_per_channel_and_bounded(rng):
    se = SeBlock(6, 3, rng=rng)
    x = rng.uniform(0.5, 2.0, size=(2, 6, 7)).astype(np.float32)
    out = se(Tensor(x)).data
    ratio = out / x
    # one gate per (batch, channel), constant across time, strictly inside (0,1)
    np.testing.assert_allclose(ratio, np.broadcast_to(ratio[:, :, :1], ratio.shape),
                               rtol=1e-5)
    assert np.all(ratio > 0.0) and np.all(ratio < 1.0)


def test_se_saturated_gate_is_identity(rng):
    se = SeBlock(6, 3, rng=rng)
    se.fc2.bias.data[:] = 40.0
    x = rng.standard_normal((2, 6, 7)).astype(np.float32)
    np.testing.assert_allclose(se(Tensor(x)).data, x, rtol=0, atol=1e-6)


def test_se_res2_block_is_residual(rng):
    blk = SeRes2Block(8, 3, 2, res2_scale=4, se_channels=4, rng=rng)
    # zeroing the last conv turns the branch into exactly zero, leaving the skip
    blk.tdnn2.conv.weight.data[:] = 0.0
    blk.tdnn2.conv.bias.data[:] = 0.0
    x = rng.standard_normal((2, 8, 9)).astype(np.float32)
    np.testing.assert_array_equal(blk(Tensor(x)).data, x)


def test_se_res2_block_shape(rng):
    blk = SeRes2Block(8, 3, 3, res2_scale=4, se_channels=4, rng=rng)
    assert blk(Tensor(rng.standard_normal((2, 8, 9)).astype(np.float32))).shape == (2, 8, 9)


# -- attentive stats pooling -----------------------------------------------------------


def test_pooling_constant_input_recovers_mean_and_floor_std(rng):
    asp = AttentiveStatsPooling(5, 3, rng=rng)
    v = rng.standard_normal((2, 5, 1)).astype(np.float32)
    x = np.repeat(v, 6, axis=2)
    out = asp(Tensor(x)).data
    assert out.shape == (2, 10)
    # time-constant input makes the attention uniform, so the weighted mean is
    # the plain mean; the variance is all f32 cancellation noise, bounded below
    # by the floor and above by sqrt of the rounding error of v*v
    np.testing.assert_allclose(out[:, :5], v[:, :, 0], rtol=1e-5)
    assert np.all(out[:, 5:] >= np.sqrt(STD_FLOOR) * 0.999)
    assert np.all(out[:, 5:] < 1e-3)


def test_pooling_weighted_moments_stay_in_range(rng):
    asp = AttentiveStatsPooling(5, 3, rng=rng)
    x = rng.standard_normal((3, 5, 11)).astype(np.float32)
    out = asp(Tensor(x)).data
    mean, std = out[:, :5], out[:, 5:]
    assert np.all(mean >= x.min(axis=2) - 1e-5) and np.all(mean <= x.max(axis=2) + 1e-5)
    assert np.all(std >= 0.0)


def test_pooling_needs_two_frames(rng):
    asp = AttentiveStatsPooling(5, 3, rng=rng)
    with pytest.raises(InputError, match="2 frames"):
        asp(Tensor(np.zeros((1, 5, 1), dtype=np.float32)))


# -- variant wiring ---------------------------------------------------------------------


def test_variant_parse_rejects_unknown():
    with pytest.raises(ConfigError, match="ecapa-tdnn"):
        ModelVariant.parse("resnet34")


def test_plain_variant_uses_frame_conv_only():
    m = toy_model("ecapa-tdnn")
    assert m.frame_conv is not None and m.frontend is None


@pytest.mark.parametrize("variant", ["mfa-standard", "mfa-lite"])
def test_mfa_variants_use_frontend_only(variant):
    m = toy_model(variant)
    assert m.frame_conv is None and m.frontend is not None
    assert m.frontend.cfg.out_channels == m.config.backbone.channels


def test_cnn_variant_stem_geometry():
    m = toy_model("ecapa-cnn-tdnn")
    assert isinstance(m.frontend, CnnFrontend)
    assert m.frontend.reduced_bins == 20
    ref = build_model("ecapa-cnn-tdnn").frontend
    assert ref.flat_width == 128 * 20


def test_mfa_config_required_for_mfa_variant():
    cfg = ModelConfig(variant="mfa-standard", mfa=None)
    with pytest.raises(ConfigError, match="MfaConfig"):
        SpeakerEmbedder(cfg)


def test_mfa_fusion_width_must_match_trunk():
    cfg = ModelConfig(variant="mfa-standard", mfa=MfaConfig(out_channels=256))
    with pytest.raises(ConfigError, match="trunk width"):
        SpeakerEmbedder(cfg)


def test_variant_config_width_scaling():
    cfg = variant_config(ModelVariant.ECAPA_TDNN, width_multiplier=0.25)
    assert cfg.backbone.channels == 128
    assert cfg.backbone.channels % cfg.backbone.res2_scale == 0
    assert cfg.backbone.embed_dim == 192  # embedding size is part of the contract
    with pytest.raises(ConfigError):
        variant_config(ModelVariant.ECAPA_TDNN, width_multiplier=0.0)


def test_mfa_lite_narrows_the_trunk():
    assert variant_config(ModelVariant.MFA_LITE).backbone.channels == 480
    assert variant_config(ModelVariant.MFA_STANDARD).backbone.channels == 512


def test_model_config_dict_round_trip():
    for variant in ModelVariant:
        cfg = variant_config(variant, **(TOY if variant.value.startswith("mfa")
                                         else {"width_multiplier": TOY["width_multiplier"]}))
        again = ModelConfig.from_dict(cfg.to_dict())
        assert again == cfg


# -- forward and embed --------------------------------------------------------------------


@pytest.mark.parametrize("variant", [v.value for v in ModelVariant])
def test_forward_produces_embedding_batch(rng, variant):
    m = toy_model(variant)
    out = m(Tensor(rng.standard_normal((2, 1, 80, 24)).astype(np.float32)))
    assert out.shape == (2, 192)
    assert np.all(np.isfinite(out.data))


def test_embed_is_deterministic_and_restores_mode(rng):
    m = toy_model("mfa-standard")
    m.train()
    fmap = FeatureMap(rng.standard_normal((80, 30)).astype(np.float32), 0.01, "u1")
    v1 = embed(fmap, m)
    assert m.training  # eval mode is an implementation detail that must not leak
    v2 = embed(fmap, m)
    assert v1.shape == (192,)
    np.testing.assert_array_equal(v1, v2)


def test_embed_rejects_non_finite_output(rng):
    m = toy_model("ecapa-tdnn")
    m.fc.weight.data[:] = np.inf
    fmap = FeatureMap(rng.standard_normal((80, 30)).astype(np.float32), 0.01, "bad-utt")
    with pytest.raises(InputError, match="bad-utt"):
        embed(fmap, m)


def test_same_seed_same_model_different_seed_differs(rng):
    a = toy_model("ecapa-tdnn", seed=5)
    b = toy_model("ecapa-tdnn", seed=5)
    c = toy_model("ecapa-tdnn", seed=6)
    pa = dict(a.named_parameters())
    pb = dict(b.named_parameters())
    pc = dict(c.named_parameters())
    assert all(np.array_equal(pa[k].data, pb[k].data) for k in pa)
    assert any(not np.array_equal(pa[k].data, pc[k].data) for k in pa)
