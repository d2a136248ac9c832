"""Trial lists and score sets, with their on-disk formats.

Trial file: one trial per line, ``<0|1> <enroll-id> <test-id>``.
Score file: one score per line, ``<enroll-id> <test-id> <score>`` at 6 decimals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InputError

__all__ = ["Trial", "TrialList", "ScoreSet"]


@dataclass(frozen=True)
class Trial:
    label: int  # 1 = same speaker, 0 = different
    enroll: str
    test: str


@dataclass
class TrialList:
    trials: list[Trial]

    def __post_init__(self):
        seen: set[tuple[str, str]] = set()
        for t in self.trials:
            if t.label not in (0, 1):
                raise InputError(f"trial label must be 0 or 1, got {t.label!r}")
            if not t.enroll or not t.test:
                raise InputError("trial ids must be non-empty")
            key = (t.enroll, t.test)
            if key in seen:
                raise InputError(f"duplicate trial pair {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=np.int64)

    def ids(self) -> set[str]:
        out: set[str] = set()
        for t in self.trials:
            out.add(t.enroll)
            out.add(t.test)
        return out

    @classmethod
    def from_file(cls, path: str | Path) -> "TrialList":
        trials = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("0", "1"):
                raise InputError(f"{path}:{lineno}: expected '<0|1> <enroll> <test>', got {line!r}")
            trials.append(Trial(int(parts[0]), parts[1], parts[2]))
        return cls(trials)

    def to_file(self, path: str | Path) -> None:
        lines = [f"{t.label} {t.enroll} {t.test}" for t in self.trials]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ScoreSet:
    """Per-trial raw scores, optionally with a normalized companion."""

    trials: TrialList
    scores: np.ndarray
    normalized: np.ndarray | None = None
    system: str = ""

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.trials),):
            raise InputError(
                f"need one score per trial: {self.scores.shape} vs {len(self.trials)} trials")
        if self.normalized is not None:
            self.normalized = np.asarray(self.normalized, dtype=np.float64)
            if self.normalized.shape != self.scores.shape:
                raise InputError("normalized scores must align with raw scores")

    def to_file(self, path: str | Path, normalized: bool = False) -> None:
        values = self.normalized if normalized else self.scores
        if values is None:
            raise InputError("no normalized scores to write")
        lines = [f"{t.enroll} {t.test} {s:.6f}" for t, s in zip(self.trials, values)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path: str | Path, trials: TrialList) -> "ScoreSet":
        table: dict[tuple[str, str], float] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InputError(f"{path}:{lineno}: expected '<enroll> <test> <score>'")
            table[(parts[0], parts[1])] = float(parts[2])
        try:
            scores = np.array([table[(t.enroll, t.test)] for t in trials], dtype=np.float64)
        except KeyError as exc:
            raise InputError(f"{path}: missing score for trial pair {exc.args[0]}") from None
        return cls(trials, scores)
