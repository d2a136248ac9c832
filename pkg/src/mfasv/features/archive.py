"""Binary feature archive, one file per utterance.

Layout (little endian):
    8 bytes  magic "MFAF0001"
    u32      D (mel bins)
    u32      L (frames)
    f32      frame hop in seconds
    u32      byte length of the utterance id
    bytes    utterance id, UTF-8
    f32[D*L] map values, row-major (frequency-major)

Round trips are bit-exact for float32 maps.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ArchiveError
from .fbank import FeatureMap

__all__ = ["MAGIC", "save_features", "load_features"]

MAGIC = b"MFAF0001"
_HEADER = struct.Struct("<IIfI")


def save_features(path: str | Path, fmap: FeatureMap) -> None:
    d, l = fmap.n_bins, fmap.n_frames
    ident = fmap.utterance_id.encode("utf-8")
    payload = np.ascontiguousarray(fmap.data[0], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(d, l, fmap.frame_hop_s, len(ident)))
        fh.write(ident)
        fh.write(payload)


def load_features(path: str | Path) -> FeatureMap:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ArchiveError(f"{path}: bad magic {blob[:8]!r}, expected {MAGIC!r}")
    if len(blob) < 8 + _HEADER.size:
        raise ArchiveError(f"{path}: truncated header")
    d, l, hop_s, id_len = _HEADER.unpack_from(blob, 8)
    off = 8 + _HEADER.size
    if len(blob) < off + id_len:
        raise ArchiveError(f"{path}: truncated utterance id")
    ident = blob[off:off + id_len].decode("utf-8")
    off += id_len
    expected = d * l * 4
    if len(blob) - off != expected:
        raise ArchiveError(
            f"{path}: payload is {len(blob) - off} bytes, expected {expected} for a {d}x{l} map")
    data = np.frombuffer(blob, dtype="<f4", count=d * l, offset=off).reshape(d, l)
    return FeatureMap(data.copy(), float(hop_s), ident)
