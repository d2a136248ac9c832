"""Detection metrics over trial scores.

Both metrics sweep every distinct score as a decision threshold (accept when
score >= threshold) together with a reject-all sentinel. They depend on the
scores only through their ordering, so any strictly increasing transform of
the scores leaves them unchanged.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError

__all__ = ["roc_points", "compute_eer", "compute_mindcf", "relative_improvement"]


def _split_scores(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise InputError(f"scores and labels must be aligned 1-D, got {scores.shape}, {labels.shape}")
    if not np.all(np.isfinite(scores)):
        raise InputError("scores must be finite")
    tgt = scores[labels == 1]
    non = scores[labels == 0]
    if tgt.size == 0 or non.size == 0:
        raise InputError("need at least one target and one non-target trial")
    return tgt, non


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(P_miss, P_fa) at each distinct threshold, ascending, plus reject-all.

    P_miss(t) = fraction of targets with score < t
    P_fa(t)   = fraction of non-targets with score >= t
    """
    tgt, non = _split_scores(scores, labels)
    thresholds = np.unique(np.concatenate([tgt, non]))
    # searchsorted('left') counts values strictly below each threshold. Both
    # rates are a single count/size division so they match a naive tally bit
    # for bit.
    p_miss = np.searchsorted(np.sort(tgt), thresholds, side="left") / tgt.size
    p_fa = (non.size - np.searchsorted(np.sort(non), thresholds, side="left")) / non.size
    p_miss = np.append(p_miss, 1.0)  # reject-all sentinel
    p_fa = np.append(p_fa, 0.0)
    return p_miss, p_fa


def compute_eer(scores, labels) -> float:
    """Equal error rate as a fraction in [0, 1].

    The operating point is linearly interpolated between the two adjacent
    thresholds where P_miss - P_fa changes sign.
    """
    p_miss, p_fa = roc_points(scores, labels)
    diff = p_miss - p_fa
    idx = int(np.argmax(diff >= 0.0))  # first non-negative; diff starts at -1
    if diff[idx] == 0.0:
        return float(p_miss[idx])
    if idx == 0:
        return float(p_miss[0])
    d0, d1 = diff[idx - 1], diff[idx]
    t = -d0 / (d1 - d0)
    eer = p_miss[idx - 1] + t * (p_miss[idx] - p_miss[idx - 1])
    return float(eer)


def compute_mindcf(scores, labels, p_target: float = 0.01,
                   c_miss: float = 1.0, c_fa: float = 1.0) -> float:
    """Minimum normalized detection cost over all thresholds.

    DCF(t) = c_miss * p_target * P_miss(t) + c_fa * (1 - p_target) * P_fa(t),
    normalized by min(c_miss * p_target, c_fa * (1 - p_target)).
    """
    if not (0.0 < p_target < 1.0):
        raise InputError("p_target must lie strictly between 0 and 1")
    p_miss, p_fa = roc_points(scores, labels)
    dcf = c_miss * p_target * p_miss + c_fa * (1.0 - p_target) * p_fa
    norm = min(c_miss * p_target, c_fa * (1.0 - p_target))
    return float(dcf.min() / norm)


def relative_improvement(baseline: float, improved: float) -> float:
    """Percent reduction of an error metric relative to the baseline."""
    if baseline <= 0:
        raise InputError("baseline metric must be positive")
    return 100.0 * (baseline - improved) / baseline
