"""Feature- and waveform-level augmentation used by the trainer.

All functions are pure given their Generator, so a training run is fully
reproducible from its seed.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, InputError
from .audio_io import Waveform
from .fbank import FbankConfig, FeatureMap

__all__ = ["time_mask", "speed_perturb", "crop_segment"]


def time_mask(fmap: FeatureMap, max_frames: int, rng: np.random.Generator) -> FeatureMap:
    """Blank one contiguous span of up to ``max_frames`` frames.

    Masked cells are filled with that bin's mean over time (computed before
    masking), so the map's per-bin statistics stay roughly in place.
    ``max_frames = 0`` returns the input unchanged.
    """
    if max_frames < 0:
        raise ConfigError("max_frames must be >= 0")
    if max_frames == 0:
        return FeatureMap(fmap.data.copy(), fmap.frame_hop_s, fmap.utterance_id)
    length = fmap.n_frames
    width = int(rng.integers(0, min(max_frames, length) + 1))
    start = int(rng.integers(0, length - width + 1))
    data = fmap.data.copy()
    if width > 0:
        fill = fmap.data[0].mean(axis=1)
        data[0, :, start:start + width] = fill[:, None]
    return FeatureMap(data, fmap.frame_hop_s, fmap.utterance_id)


def speed_perturb(wav: Waveform, factor: float) -> Waveform:
    """Resample by linear interpolation; output length is round(len / factor).

    factor < 1 slows the audio down (more samples), factor > 1 speeds it up.
    factor == 1.0 is the identity.
    """
    if factor <= 0:
        raise ConfigError("speed factor must be positive")
    if factor == 1.0:
        return Waveform(wav.samples.copy(), wav.sample_rate)
    n_in = wav.samples.size
    n_out = int(round(n_in / factor))
    if n_out < 2:
        raise InputError("waveform too short to resample")
    pos = np.arange(n_out, dtype=np.float64) * factor
    base = np.floor(pos).astype(np.int64)
    frac = (pos - base).astype(np.float32)
    base = np.clip(base, 0, n_in - 1)
    nxt = np.clip(base + 1, 0, n_in - 1)
    out = wav.samples[base] * (1.0 - frac) + wav.samples[nxt] * frac
    return Waveform(out.astype(np.float32), wav.sample_rate)


def crop_segment(fmap: FeatureMap, seconds: float, rng: np.random.Generator,
                 cfg: FbankConfig | None = None) -> FeatureMap:
    """Uniform random window of exactly the frame count a ``seconds``-long
    waveform would produce under ``cfg``.

    Shorter maps are wrap-padded (tiled from the start) up to the target.
    """
    cfg = cfg or FbankConfig()
    target = cfg.frames_for_duration(seconds)
    if target < 1:
        raise ConfigError(f"crop of {seconds} s yields no frames")
    length = fmap.n_frames
    if length >= target:
        start = int(rng.integers(0, length - target + 1))
        data = fmap.data[:, :, start:start + target].copy()
    else:
        reps = -(-target // length)
        data = np.tile(fmap.data, (1, 1, reps))[:, :, :target].copy()
    return FeatureMap(data, fmap.frame_hop_s, fmap.utterance_id)
