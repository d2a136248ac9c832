"""Short-utterance evaluation protocol: cap test audio at its first N seconds.

Utterances already at or below the cap pass through unaltered, and the trial
list never changes, so truncation is idempotent and keeps trial counts fixed.
"""

from __future__ import annotations

from ..errors import ConfigError
from ..features import Utterance, Waveform

__all__ = ["MIN_DURATION_S", "MAX_DURATION_S", "check_duration",
           "truncate_waveform", "truncate_testset"]

MIN_DURATION_S = 4
MAX_DURATION_S = 10


def check_duration(max_duration_s: float) -> None:
    if not (MIN_DURATION_S <= max_duration_s <= MAX_DURATION_S):
        raise ConfigError(
            f"max duration must lie in [{MIN_DURATION_S}, {MAX_DURATION_S}] s, "
            f"got {max_duration_s}")


def truncate_waveform(wav: Waveform, max_duration_s: float) -> Waveform:
    check_duration(max_duration_s)
    limit = int(round(max_duration_s * wav.sample_rate))
    if wav.samples.size <= limit:
        return Waveform(wav.samples.copy(), wav.sample_rate)
    return Waveform(wav.samples[:limit].copy(), wav.sample_rate)


def truncate_testset(utterances: list[Utterance], max_duration_s: float) -> list[Utterance]:
    """Truncated copies of all utterances; ids, speakers and order preserved."""
    check_duration(max_duration_s)
    return [
        Utterance(u.utterance_id, u.speaker_id, u.split,
                  truncate_waveform(u.waveform, max_duration_s))
        for u in utterances
    ]
