"""Checkpoint round trips must be bit-exact and corrupt files must fail closed."""

import json
import struct

import numpy as np
import pytest

from mfasv.backbone import build_model, embed
from mfasv.checkpoint import FORMAT_VERSION, load_checkpoint, load_into, save_checkpoint
from mfasv.errors import (
    CheckpointShapeError, CheckpointTruncatedError, CheckpointVersionError,
)
from mfasv.features import FeatureMap
from mfasv.nncore import Tensor

TOY = dict(width_multiplier=1 / 32)


def dirty_model(rng, variant="mfa-standard", seed=0):
    """A toy model whose batchnorm running buffers hold non-trivial values."""
    kw = dict(TOY, mfa_channels=8) if variant.startswith("mfa") else dict(TOY)
    m = build_model(variant, seed=seed, **kw)
    m.train()
    for _ in range(3):
        m(Tensor(rng.standard_normal((2, 1, 80, 16)).astype(np.float32)))
    return m


def test_embed_bit_exact_after_round_trip(tmp_path, rng):
    m = dirty_model(rng)
    fmap = FeatureMap(rng.standard_normal((80, 40)).astype(np.float32), 0.01, "u")
    before = embed(fmap, m)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m, training_step=7)
    loaded, step = load_checkpoint(path)
    assert step == 7
    assert loaded.config == m.config
    np.testing.assert_array_equal(embed(fmap, loaded), before)


def test_state_arrays_round_trip(tmp_path, rng):
    m = dirty_model(rng, variant="ecapa-tdnn")
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m)
    loaded, _ = load_checkpoint(path)
    for (name, kind, a), (name2, _, b) in zip(m.state_items(), loaded.state_items()):
        assert name == name2
        if kind == "param":
            np.testing.assert_array_equal(a, b)
        else:
            # running buffers are stored as f32; the reload must match that cast
            np.testing.assert_array_equal(a.astype(np.float32), b.astype(np.float32))


def test_load_into_existing_model(tmp_path, rng):
    src = dirty_model(rng, seed=1)
    dst = dirty_model(rng, seed=2)
    fmap = FeatureMap(rng.standard_normal((80, 25)).astype(np.float32), 0.01, "u")
    assert not np.array_equal(embed(fmap, src), embed(fmap, dst))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, src, training_step=40)
    assert load_into(dst, path) == 40
    np.testing.assert_array_equal(embed(fmap, dst), embed(fmap, src))


def test_cross_variant_load_fails_closed(tmp_path, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, dirty_model(rng, variant="ecapa-tdnn"))
    other = dirty_model(rng, variant="mfa-standard")
    before = {n: a.copy() for n, _, a in other.state_items()}
    with pytest.raises(CheckpointShapeError, match="m.ckpt"):
        load_into(other, path)
    # failing closed means no state was touched
    for name, _, arr in other.state_items():
        np.testing.assert_array_equal(arr, before[name])


def test_width_mismatch_names_the_parameter(tmp_path, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build_model("ecapa-tdnn", width_multiplier=1 / 32))
    wider = build_model("ecapa-tdnn", width_multiplier=1 / 16)
    with pytest.raises(CheckpointShapeError, match="model expects"):
        load_into(wider, path)


# -- corrupt files -------------------------------------------------------------------


def rewrite_manifest(path, mutate):
    blob = path.read_bytes()
    (head_len,) = struct.unpack_from("<I", blob, 0)
    manifest = json.loads(blob[4:4 + head_len])
    mutate(manifest)
    head = json.dumps(manifest, sort_keys=True).encode()
    path.write_bytes(struct.pack("<I", len(head)) + head + blob[4 + head_len:])


@pytest.fixture
def saved(tmp_path, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, dirty_model(rng, variant="ecapa-tdnn"))
    return path


def test_unknown_version_rejected(saved, rng):
    rewrite_manifest(saved, lambda m: m.update(format_version="MFAC0"))
    with pytest.raises(CheckpointVersionError, match=FORMAT_VERSION):
        load_checkpoint(saved)


def test_garbage_manifest_rejected(saved):
    saved.write_bytes(struct.pack("<I", 7) + b"notjson" + b"\0" * 16)
    with pytest.raises(CheckpointVersionError, match="JSON"):
        load_checkpoint(saved)


def test_truncated_blob_rejected(saved):
    blob = saved.read_bytes()
    saved.write_bytes(blob[:-4])
    with pytest.raises(CheckpointTruncatedError, match="promises"):
        load_checkpoint(saved)


def test_trailing_bytes_rejected(saved):
    saved.write_bytes(saved.read_bytes() + b"\0\0\0\0")
    with pytest.raises(CheckpointTruncatedError, match="trailing"):
        load_checkpoint(saved)


def test_short_header_rejected(saved):
    blob = saved.read_bytes()
    saved.write_bytes(blob[:2])
    with pytest.raises(CheckpointTruncatedError, match="length prefix"):
        load_checkpoint(saved)
    saved.write_bytes(blob[:10])
    with pytest.raises(CheckpointTruncatedError, match="cut short"):
        load_checkpoint(saved)


def test_duplicate_entry_rejected(saved, rng):
    rewrite_manifest(saved, lambda m: m["entries"].append(m["entries"][0]))
    model = dirty_model(rng, variant="ecapa-tdnn")
    with pytest.raises(CheckpointShapeError, match="duplicate"):
        load_into(model, saved)


def test_missing_entry_rejected(saved, rng):
    rewrite_manifest(saved, lambda m: m["entries"].pop())
    model = dirty_model(rng, variant="ecapa-tdnn")
    with pytest.raises(CheckpointShapeError, match="missing"):
        load_into(model, saved)
