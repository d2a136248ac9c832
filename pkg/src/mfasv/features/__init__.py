"""Waveforms, log-mel features, augmentation, synthetic corpus, archives."""

from .audio_io import Waveform, read_wav, write_wav
from .fbank import FbankConfig, FeatureMap, compute_fbank, mel_filterbank, hz_to_mel, mel_to_hz
from .augment import time_mask, speed_perturb, crop_segment
from .synth import SpeakerProfile, Utterance, SynthCorpus, synth_corpus, SPLITS
from .archive import MAGIC, save_features, load_features

__all__ = [
    "Waveform", "read_wav", "write_wav",
    "FbankConfig", "FeatureMap", "compute_fbank", "mel_filterbank", "hz_to_mel", "mel_to_hz",
    "time_mask", "speed_perturb", "crop_segment",
    "SpeakerProfile", "Utterance", "SynthCorpus", "synth_corpus", "SPLITS",
    "MAGIC", "save_features", "load_features",
]
