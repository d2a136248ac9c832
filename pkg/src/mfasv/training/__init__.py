"""Loss, optimizer, schedule and the toy training loop."""

from .loop import TrainConfig, TrainResult, all_pairs_trials, train_toy
from .loss import AamSoftmax, aam_softmax_loss, cross_entropy_from_logits
from .optim import Adam, CyclicalLr

__all__ = [
    "AamSoftmax", "aam_softmax_loss", "cross_entropy_from_logits",
    "Adam", "CyclicalLr",
    "TrainConfig", "TrainResult", "all_pairs_trials", "train_toy",
]
