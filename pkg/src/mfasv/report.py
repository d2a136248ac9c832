"""Evaluation reports: delimited text plus matplotlib figures on disk.

Everything here is file-producing and headless (Agg backend). The text
formats are stable one-record-per-line `key=value` fields so that shell
tools can grep them; the figures carry the same numbers for humans.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be fixed first)

from .evalkit import compute_eer, compute_mindcf
from .nncore import ComplexityReport

__all__ = [
    "ConditionResult", "EvalReport", "evaluate_condition",
    "plot_training_curves", "plot_score_distribution",
    "plot_condition_metrics", "plot_complexity",
]


@dataclass
class ConditionResult:
    label: str
    eer: float
    mindcf: float
    n_target: int
    n_nontarget: int

    def line(self) -> str:
        # eer is reported in percent, mindcf as the normalized cost itself
        return (f"condition={self.label} eer={self.eer * 100:.4f} mindcf={self.mindcf:.4f} "
                f"targets={self.n_target} nontargets={self.n_nontarget}")


def evaluate_condition(label: str, scores: np.ndarray, labels: np.ndarray,
                       p_target: float = 0.01) -> ConditionResult:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    return ConditionResult(
        label=label,
        eer=compute_eer(scores, labels),
        mindcf=compute_mindcf(scores, labels, p_target=p_target),
        n_target=int(np.sum(labels == 1)),
        n_nontarget=int(np.sum(labels == 0)),
    )


@dataclass
class EvalReport:
    conditions: list[ConditionResult] = field(default_factory=list)

    def add(self, result: ConditionResult) -> None:
        self.conditions.append(result)

    def text(self) -> str:
        return "\n".join(c.line() for c in self.conditions) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.text())
        return path


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_training_curves(entries, path: str | Path) -> Path:
    """Per-epoch mean loss and validation EER, twin y axes."""
    epochs = [e.epoch for e in entries]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, [e.loss for e in entries], marker="o", color="tab:blue", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(epochs, [e.val_eer * 100 for e in entries], marker="s", color="tab:red",
             label="val EER")
    ax2.set_ylabel("validation EER (%)", color="tab:red")
    ax.set_title("training progress")
    fig.tight_layout()
    return _save(fig, path)


def plot_score_distribution(scores: np.ndarray, labels: np.ndarray,
                            path: str | Path, title: str = "trial scores") -> Path:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    bins = np.linspace(float(scores.min()), float(scores.max()) + 1e-9, 40)
    ax.hist(scores[labels == 1], bins=bins, alpha=0.6, label="target", color="tab:green")
    ax.hist(scores[labels == 0], bins=bins, alpha=0.6, label="non-target", color="tab:orange")
    ax.set_xlabel("cosine score")
    ax.set_ylabel("trials")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_condition_metrics(report: EvalReport, path: str | Path) -> Path:
    """Grouped bars: EER and minDCF per evaluation condition."""
    labels = [c.label for c in report.conditions]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6.4, 1.6 * len(labels)), 4.0))
    ax.bar(x - 0.2, [c.eer * 100 for c in report.conditions], width=0.4,
           label="EER (%)", color="tab:blue")
    ax.bar(x + 0.2, [c.mindcf * 100 for c in report.conditions], width=0.4,
           label="minDCF (x100)", color="tab:purple")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("metric")
    ax.set_title("evaluation conditions")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_complexity(reports: list[ComplexityReport], path: str | Path) -> Path:
    """Parameter and MAC totals per variant, side by side."""
    names = [r.variant for r in reports]
    x = np.arange(len(names))
    fig, (ax_p, ax_m) = plt.subplots(1, 2, figsize=(9.6, 4.0))
    ax_p.bar(x, [r.total_params / 1e6 for r in reports], color="tab:blue")
    ax_p.set_xticks(x)
    ax_p.set_xticklabels(names, rotation=20, ha="right")
    ax_p.set_ylabel("parameters (M)")
    ax_m.bar(x, [r.total_macs / 1e9 for r in reports], color="tab:red")
    ax_m.set_xticks(x)
    ax_m.set_xticklabels(names, rotation=20, ha="right")
    ax_m.set_ylabel(f"MACs (G) at {reports[0].frames if reports else 0} frames")
    fig.suptitle("model complexity")
    fig.tight_layout()
    return _save(fig, path)
