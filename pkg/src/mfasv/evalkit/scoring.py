"""Cosine scoring and score normalization."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from .trials import ScoreSet, TrialList

__all__ = ["cosine_score", "score_trials", "snorm_from_stats", "snorm_one", "snorm_scores"]

_NORM_EPS = 1e-12


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; rejects (near-)zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"cosine_score expects matching vectors, got {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < _NORM_EPS or nb < _NORM_EPS:
        raise InputError("cannot score a zero-norm embedding")
    return float(a @ b / (na * nb))


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms < _NORM_EPS):
        raise InputError("cohort or trial embeddings contain a zero-norm vector")
    return mat / norms


def score_trials(trials: TrialList, embeddings: dict[str, np.ndarray],
                 system: str = "") -> ScoreSet:
    """Cosine-score every trial from an id -> embedding table."""
    missing = sorted(i for i in trials.ids() if i not in embeddings)
    if missing:
        raise InputError(f"embeddings missing for {len(missing)} trial ids, first: {missing[0]}")
    scores = np.array(
        [cosine_score(embeddings[t.enroll], embeddings[t.test]) for t in trials],
        dtype=np.float64)
    return ScoreSet(trials, scores, system=system)


def snorm_from_stats(score: float, mu_e: float, sd_e: float,
                     mu_t: float, sd_t: float) -> float:
    """Symmetric normalization of one score given both cohort statistics."""
    if sd_e < _NORM_EPS or sd_t < _NORM_EPS:
        raise InputError("cohort standard deviation vanishes; cohort is degenerate")
    return 0.5 * ((score - mu_e) / sd_e + (score - mu_t) / sd_t)


def snorm_one(score: float, enroll_cohort_scores: np.ndarray,
              test_cohort_scores: np.ndarray, top_k: int | None = None) -> float:
    """S-norm one trial score from the raw cohort score lists of both sides.

    With ``top_k`` set, only the k largest cohort scores per side enter the
    statistics. Invariant under positive affine transforms applied jointly
    to the trial and cohort scores.
    """
    def prep(cs):
        cs = np.asarray(cs, dtype=np.float64)
        if cs.size < 2:
            raise InputError("need at least two cohort scores per side")
        if top_k is not None:
            if top_k < 2:
                raise InputError("top_k must be at least 2")
            cs = np.sort(cs)[-min(top_k, cs.size):]
        return cs

    e = prep(enroll_cohort_scores)
    t = prep(test_cohort_scores)
    return snorm_from_stats(score, float(e.mean()), float(e.std()),
                            float(t.mean()), float(t.std()))


def snorm_scores(scoreset: ScoreSet, embeddings: dict[str, np.ndarray],
                 cohort: np.ndarray, top_k: int | None = None) -> ScoreSet:
    """Symmetric score normalization against a cohort of embeddings.

    Each trial side is scored against every cohort embedding; the trial score
    is z-normalized with the per-side mean/std and the two sides averaged.
    With ``top_k`` set, only the k best cohort scores per side feed the
    statistics (adaptive variant). Cohort speakers must be disjoint from the
    trial speakers; this function cannot check identity, only size.
    """
    cohort = np.asarray(cohort, dtype=np.float64)
    if cohort.ndim != 2 or cohort.shape[0] < 2:
        raise InputError("cohort needs at least two embeddings")
    unit_cohort = _unit_rows(cohort)

    cohort_scores: dict[str, np.ndarray] = {}

    def side_scores(utt_id: str) -> np.ndarray:
        if utt_id not in cohort_scores:
            v = np.asarray(embeddings[utt_id], dtype=np.float64)
            n = np.linalg.norm(v)
            if n < _NORM_EPS:
                raise InputError(f"zero-norm embedding for {utt_id}")
            cohort_scores[utt_id] = unit_cohort @ (v / n)
        return cohort_scores[utt_id]

    normalized = np.empty_like(scoreset.scores)
    for i, t in enumerate(scoreset.trials):
        normalized[i] = snorm_one(scoreset.scores[i], side_scores(t.enroll),
                                  side_scores(t.test), top_k=top_k)
    return ScoreSet(scoreset.trials, scoreset.scores, normalized=normalized,
                    system=scoreset.system)
