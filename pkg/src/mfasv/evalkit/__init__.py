"""Scoring, normalization, detection metrics, and the truncation protocol."""

from .trials import Trial, TrialList, ScoreSet
from .metrics import roc_points, compute_eer, compute_mindcf, relative_improvement
from .scoring import cosine_score, score_trials, snorm_from_stats, snorm_one, snorm_scores
from .truncate import (
    MIN_DURATION_S, MAX_DURATION_S, check_duration, truncate_waveform, truncate_testset,
)

__all__ = [
    "Trial", "TrialList", "ScoreSet",
    "roc_points", "compute_eer", "compute_mindcf", "relative_improvement",
    "cosine_score", "score_trials", "snorm_from_stats", "snorm_one", "snorm_scores",
    "MIN_DURATION_S", "MAX_DURATION_S", "check_duration", "truncate_waveform",
    "truncate_testset",
]
