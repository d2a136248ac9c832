import numpy as np
import pytest

from mfasv.features import FbankConfig, compute_fbank, synth_corpus


@pytest.fixture(scope="session")
def micro_corpus():
    """10 speakers x 3 short utterances; enough for every split to be usable."""
    return synth_corpus(n_speakers=10, utts_per_speaker=3,
                        duration_range_s=(1.5, 2.5), seed=13)


@pytest.fixture(scope="session")
def micro_features(micro_corpus):
    cfg = FbankConfig()
    return {u.utterance_id: compute_fbank(u.waveform, cfg, u.utterance_id)
            for u in micro_corpus.utterances}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
