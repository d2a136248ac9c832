"""Model checkpoints.

File layout:
    u32 LE     manifest byte length
    bytes      UTF-8 JSON manifest
    f32[] LE   concatenated value blobs, one per manifest entry, in order

The manifest carries the format version ("MFAC1"), the model variant and
config, the training step, and the full state inventory (name, kind, shape).
Loading validates the version and the inventory against the target model
before touching any blob, and fails closed on truncation.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .backbone import ModelConfig, SpeakerEmbedder
from .errors import (
    CheckpointShapeError, CheckpointTruncatedError, CheckpointVersionError,
)

__all__ = ["FORMAT_VERSION", "save_checkpoint", "load_checkpoint", "load_into"]

FORMAT_VERSION = "MFAC1"


def save_checkpoint(path: str | Path, model: SpeakerEmbedder, training_step: int = 0) -> None:
    items = model.state_items()
    manifest = {
        "format_version": FORMAT_VERSION,
        "variant": model.config.variant,
        "config": model.config.to_dict(),
        "training_step": int(training_step),
        "entries": [
            {"name": name, "kind": kind, "shape": list(arr.shape)}
            for name, kind, arr in items
        ],
    }
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for _, _, arr in items:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_manifest(blob: bytes, path) -> tuple[dict, int]:
    if len(blob) < 4:
        raise CheckpointTruncatedError(f"{path}: file shorter than its length prefix")
    (head_len,) = struct.unpack_from("<I", blob, 0)
    if len(blob) < 4 + head_len:
        raise CheckpointTruncatedError(f"{path}: manifest cut short")
    try:
        manifest = json.loads(blob[4:4 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointVersionError(f"{path}: manifest is not valid JSON ({exc})") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version!r} not supported (expected {FORMAT_VERSION!r})")
    return manifest, 4 + head_len


def _read_blobs(blob: bytes, offset: int, entries: list[dict], path) -> dict[str, np.ndarray]:
    total = sum(int(np.prod(e["shape"], dtype=np.int64)) if e["shape"] else 1 for e in entries)
    expected = total * 4
    if len(blob) - offset < expected:
        raise CheckpointTruncatedError(
            f"{path}: blob section is {len(blob) - offset} bytes, manifest promises {expected}")
    if len(blob) - offset > expected:
        raise CheckpointTruncatedError(
            f"{path}: {len(blob) - offset - expected} trailing bytes beyond the manifest inventory")
    arrays: dict[str, np.ndarray] = {}
    off = offset
    for e in entries:
        shape = tuple(e["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arrays[e["name"]] = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
        off += count * 4
    return arrays


def _validate_inventory(model: SpeakerEmbedder, entries: list[dict], path) -> None:
    """Shapes are checked entry by entry before any blob is consumed."""
    model_items = model.state_items()
    file_index = {e["name"]: tuple(e["shape"]) for e in entries}
    if len(file_index) != len(entries):
        raise CheckpointShapeError(f"{path}: duplicate entry names in manifest")
    for name, _, arr in model_items:
        if name not in file_index:
            raise CheckpointShapeError(f"{path}: checkpoint is missing parameter {name!r}")
        if file_index[name] != arr.shape:
            raise CheckpointShapeError(
                f"{path}: parameter {name!r} has shape {file_index[name]}, "
                f"model expects {arr.shape}")
    model_names = {name for name, _, _ in model_items}
    for e in entries:
        if e["name"] not in model_names:
            raise CheckpointShapeError(
                f"{path}: checkpoint carries unexpected parameter {e['name']!r}")


def load_into(model: SpeakerEmbedder, path: str | Path) -> int:
    """Load a checkpoint into an existing model; returns the training step.

    Fails closed: version, then inventory, then blob sizes, before any state
    is mutated.
    """
    blob = Path(path).read_bytes()
    manifest, offset = _read_manifest(blob, path)
    entries = manifest["entries"]
    _validate_inventory(model, entries, path)
    arrays = _read_blobs(blob, offset, entries, path)
    model.load_state(arrays)
    return int(manifest.get("training_step", 0))


def load_checkpoint(path: str | Path) -> tuple[SpeakerEmbedder, int]:
    """Rebuild the model described by the manifest and load its state."""
    blob = Path(path).read_bytes()
    manifest, offset = _read_manifest(blob, path)
    config = ModelConfig.from_dict(manifest["config"])
    model = SpeakerEmbedder(config)
    entries = manifest["entries"]
    _validate_inventory(model, entries, path)
    arrays = _read_blobs(blob, offset, entries, path)
    model.load_state(arrays)
    return model, int(manifest.get("training_step", 0))
