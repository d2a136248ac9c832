"""Log mel filterbank features.

Pipeline: pre-emphasis -> framing (no padding, so a frame exists only when it
fits entirely) -> Hamming window -> power spectrum -> triangular mel bank ->
log(energy + floor). Frame count for N samples is floor((N - win) / hop) + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, InputError
from .audio_io import Waveform

__all__ = ["FbankConfig", "FeatureMap", "compute_fbank", "mel_filterbank", "hz_to_mel", "mel_to_hz"]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class FbankConfig:
    n_mels: int = 80
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    preemphasis: float = 0.97
    mel_fmin: float = 20.0
    mel_fmax: float | None = None  # defaults to Nyquist
    log_floor: float = 1e-10
    mean_norm: bool = False  # per-utterance mean subtraction over time, per bin

    def __post_init__(self):
        if self.window_ms <= self.hop_ms:
            raise ConfigError("window_ms must exceed hop_ms")
        if self.n_mels < 2:
            raise ConfigError("n_mels must be at least 2")
        if self.fft_size < self.window_samples:
            raise ConfigError("fft_size must cover the analysis window")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def fmax(self) -> float:
        return self.sample_rate / 2.0 if self.mel_fmax is None else self.mel_fmax

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.window_samples:
            return 0
        return (n_samples - self.window_samples) // self.hop_samples + 1

    def frames_for_duration(self, seconds: float) -> int:
        return self.num_frames(int(round(seconds * self.sample_rate)))

    def mel_centers_hz(self) -> np.ndarray:
        """Peak frequency of each triangular filter."""
        edges = np.linspace(hz_to_mel(self.mel_fmin), hz_to_mel(self.fmax), self.n_mels + 2)
        return mel_to_hz(edges[1:-1])


@dataclass
class FeatureMap:
    """A [1, D, L] log-mel map plus the metadata scoring needs."""

    data: np.ndarray
    frame_hop_s: float
    utterance_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3 or self.data.shape[0] != 1:
            raise InputError(f"feature maps are [1, D, L], got shape {self.data.shape}")

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    @property
    def n_frames(self) -> int:
        return self.data.shape[2]


def mel_filterbank(cfg: FbankConfig) -> np.ndarray:
    """[n_mels, fft_size // 2 + 1] triangular weights on the mel scale."""
    n_bins = cfg.fft_size // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    edges_mel = np.linspace(hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    edges_hz = mel_to_hz(edges_mel)
    bank = np.zeros((cfg.n_mels, n_bins), dtype=np.float64)
    for b in range(cfg.n_mels):
        lo, center, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        up = (fft_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - center, 1e-12)
        bank[b] = np.maximum(0.0, np.minimum(up, down))
    return bank


def compute_fbank(wav: Waveform, cfg: FbankConfig | None = None,
                  utterance_id: str = "") -> FeatureMap:
    """Extract a [1, n_mels, L] log-mel map from a waveform."""
    cfg = cfg or FbankConfig()
    if wav.sample_rate != cfg.sample_rate:
        raise InputError(
            f"waveform rate {wav.sample_rate} does not match config rate {cfg.sample_rate}")
    x = wav.samples.astype(np.float64)
    n_frames = cfg.num_frames(x.size)
    if n_frames < 1:
        raise InputError(
            f"waveform too short for one {cfg.window_ms:.0f} ms frame: {x.size} samples")

    if cfg.preemphasis > 0.0:
        x = np.concatenate([x[:1], x[1:] - cfg.preemphasis * x[:-1]])

    win = cfg.window_samples
    hop = cfg.hop_samples
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hamming(win)[None, :]

    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    mel_energy = power @ mel_filterbank(cfg).T
    logmel = np.log(mel_energy + cfg.log_floor).T  # [D, L]
    if cfg.mean_norm:
        logmel = logmel - logmel.mean(axis=1, keepdims=True)
    return FeatureMap(logmel.astype(np.float32), cfg.hop_ms / 1000.0, utterance_id)
