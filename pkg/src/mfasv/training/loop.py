"""Desk-scale training loop over a synthetic corpus.

Small widths, 3-second crops with time masking, additive angular margin
loss, Adam under a triangular cyclical schedule. Every epoch scores a
held-out validation trial set; the checkpoint with the lowest validation
EER wins (earlier epoch on ties).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..backbone import ModelVariant, SpeakerEmbedder, build_model, embed
from ..errors import ConfigError, TrainingDiverged
from ..evalkit import Trial, TrialList, compute_eer, score_trials
from ..features import FbankConfig, FeatureMap, SynthCorpus, compute_fbank, crop_segment, time_mask
from ..nncore import Tensor
from ..rng import child_rng
from .loss import AamSoftmax
from .optim import Adam, CyclicalLr

__all__ = ["TrainConfig", "TrainResult", "train_toy", "all_pairs_trials"]


@dataclass
class TrainConfig:
    epochs: int = 8
    steps_per_epoch: int = 40
    batch_size: int = 16
    segment_seconds: float = 3.0
    mask_max_frames: int = 30
    margin: float = 0.2
    scale: float = 30.0
    lr_min: float = 1e-8
    lr_max: float = 1e-3
    cycle_epochs: int = 2
    weight_decay: float = 2e-5
    width_multiplier: float = 0.25
    mfa_channels: int | None = 16   # only consulted for the MFA variants
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (batch statistics)")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("epochs and steps_per_epoch must be positive")
        if self.segment_seconds <= 0:
            raise ConfigError("segment_seconds must be positive")
        if self.cycle_epochs < 1:
            raise ConfigError("cycle_epochs must be at least 1")

    def schedule(self) -> CyclicalLr:
        return CyclicalLr(self.lr_min, self.lr_max,
                          cycle_steps=max(2, self.cycle_epochs * self.steps_per_epoch))


@dataclass
class EpochEntry:
    epoch: int
    step: int
    lr: float
    loss: float
    val_eer: float

    def line(self) -> str:
        return (f"epoch={self.epoch} step={self.step} lr={self.lr:.6e} "
                f"loss={self.loss:.6f} val_eer={self.val_eer:.6f}")


@dataclass
class TrainResult:
    model: SpeakerEmbedder
    head: AamSoftmax
    entries: list[EpochEntry] = field(default_factory=list)
    best_epoch: int = 0
    best_val_eer: float = 1.0
    initial_loss: float = 0.0
    final_loss: float = 0.0

    def log_lines(self) -> list[str]:
        return [e.line() for e in self.entries]

    def log_text(self) -> str:
        return "\n".join(self.log_lines()) + "\n"


def all_pairs_trials(utts) -> TrialList:
    """Every ordered-once pair among the utterances: same speaker = target."""
    trials = []
    for a, b in itertools.combinations(utts, 2):
        trials.append(Trial(int(a.speaker_id == b.speaker_id), a.utterance_id, b.utterance_id))
    return TrialList(trials)


def _validation_eer(model: SpeakerEmbedder, fmaps: dict[str, FeatureMap],
                    trials: TrialList) -> float:
    embeddings = {uid: embed(fmaps[uid], model) for uid in sorted(trials.ids())}
    scores = score_trials(trials, embeddings)
    return compute_eer(scores.scores, trials.labels)


def train_toy(corpus: SynthCorpus, variant: ModelVariant | str = ModelVariant.MFA_STANDARD,
              cfg: TrainConfig | None = None, fbank_cfg: FbankConfig | None = None,
              feature_cache: dict[str, FeatureMap] | None = None) -> TrainResult:
    """Train a reduced-width model on the corpus' train split.

    Deterministic given (corpus, cfg.seed): two runs produce identical logs
    and identical parameters.
    """
    cfg = cfg or TrainConfig()
    fbank_cfg = fbank_cfg or FbankConfig()
    variant = ModelVariant.parse(variant) if isinstance(variant, str) else variant

    train_utts = corpus.split("train")
    valid_utts = corpus.split("valid")
    if not train_utts or not valid_utts:
        raise ConfigError("corpus needs non-empty train and valid splits")
    if len({u.speaker_id for u in valid_utts}) < 2:
        raise ConfigError("validation EER needs at least two validation speakers")

    fmaps = feature_cache if feature_cache is not None else {}
    for utt in corpus.utterances:
        if utt.utterance_id not in fmaps:
            fmaps[utt.utterance_id] = compute_fbank(utt.waveform, fbank_cfg, utt.utterance_id)

    speakers = sorted({u.speaker_id for u in train_utts})
    if len(speakers) < 2:
        raise ConfigError("need at least two training speakers")
    spk_index = {s: i for i, s in enumerate(speakers)}
    labels_all = np.array([spk_index[u.speaker_id] for u in train_utts], dtype=np.int64)

    model = build_model(variant, seed=cfg.seed, width_multiplier=cfg.width_multiplier,
                        mfa_channels=cfg.mfa_channels if variant.value.startswith("mfa") else None)
    head = AamSoftmax(len(speakers), model.config.backbone.embed_dim,
                      margin=cfg.margin, scale=cfg.scale,
                      rng=child_rng(cfg.seed, "head"))

    params = {f"model.{n}": p for n, p in model.named_parameters()}
    params.update({f"head.{n}": p for n, p in head.named_parameters()})
    optimizer = Adam(params, weight_decay=cfg.weight_decay)
    schedule = cfg.schedule()

    batch_rng = child_rng(cfg.seed, "batches")
    augment_rng = child_rng(cfg.seed, "augment")
    val_trials = all_pairs_trials(valid_utts)

    result = TrainResult(model=model, head=head)
    best_state: dict[str, np.ndarray] | None = None
    last_good: dict[str, np.ndarray] = model.state_snapshot()
    global_step = 0

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        epoch_losses: list[float] = []
        lr = schedule.lr(global_step)
        for _ in range(cfg.steps_per_epoch):
            lr = schedule.lr(global_step)
            picks = batch_rng.integers(0, len(train_utts), size=cfg.batch_size)
            batch = np.empty(
                (cfg.batch_size, 1, fbank_cfg.n_mels,
                 fbank_cfg.frames_for_duration(cfg.segment_seconds)),
                dtype=np.float32)
            for row, utt_idx in enumerate(picks):
                fmap = fmaps[train_utts[utt_idx].utterance_id]
                crop = crop_segment(fmap, cfg.segment_seconds, augment_rng, fbank_cfg)
                crop = time_mask(crop, cfg.mask_max_frames, augment_rng)
                batch[row] = crop.data
            labels = labels_all[picks]

            model.zero_grad()
            head.zero_grad()
            loss = head(model(Tensor(batch)), labels)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} step {global_step}",
                    last_good=best_state or last_good)
            if global_step == 0:
                result.initial_loss = loss_value
            loss.backward()
            optimizer.step(lr)
            global_step += 1
            epoch_losses.append(loss_value)

        last_good = model.state_snapshot()
        val_eer = _validation_eer(model, fmaps, val_trials)
        entry = EpochEntry(epoch, global_step, lr, float(np.mean(epoch_losses)), val_eer)
        result.entries.append(entry)
        if val_eer < result.best_val_eer:
            result.best_val_eer = val_eer
            result.best_epoch = epoch
            best_state = model.state_snapshot()

    result.final_loss = result.entries[-1].loss
    if best_state is not None:
        model.load_state(best_state)
    return result
