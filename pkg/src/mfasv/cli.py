"""Command-line pipeline from corpus synthesis to evaluation reports.

One binary, nine subcommands, one run directory per experiment:

    runs/<name>/
      config/       effective run configuration, written by synth
      checkpoints/  best model by validation EER
      features/     corpus wavs, filterbank archives, embeddings
      scores/       trial lists and score files
      reports/      delimited metric reports and figures

Exit codes: 0 success, 2 configuration or usage, 3 missing or malformed
artifact, 4 shape mismatch, 5 gradient check failure, 6 run directory
locked, 7 training diverged or numerics failure.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .backbone import ModelVariant, build_model, embed
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, dump_run_config, load_run_config
from .errors import (
    ArchiveError, CheckpointError, ConfigError, GradientCheckError, InputError,
    NumericsError, RunDirLocked, ShapeError, ToolkitError, TrainingDiverged,
)
from .evalkit import (
    ScoreSet, TrialList, check_duration, score_trials, snorm_scores, truncate_testset,
)
from .features import (
    FeatureMap, SynthCorpus, Utterance, compute_fbank, load_features,
    read_wav, save_features, synth_corpus, write_wav,
)
from .nncore import REFERENCE_FRAMES
from .report import (
    EvalReport, evaluate_condition, plot_complexity, plot_condition_metrics,
    plot_score_distribution, plot_training_curves,
)
from .training import all_pairs_trials, train_toy

SUBDIRS = ("config", "checkpoints", "features", "scores", "reports")

# params and MACs both grow along this chain at reference widths
EFFICIENCY_ORDER = ("mfa-lite", "ecapa-tdnn", "mfa-standard", "ecapa-cnn-tdnn")


class RunDir:
    """Fixed layout inside one experiment directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def ensure(self) -> "RunDir":
        for name in SUBDIRS:
            (self.root / name).mkdir(parents=True, exist_ok=True)
        return self

    @property
    def config_file(self) -> Path:
        return self.root / "config" / "run.json"

    @property
    def corpus_dir(self) -> Path:
        return self.root / "features" / "corpus"

    @property
    def manifest_file(self) -> Path:
        return self.corpus_dir / "manifest.json"

    @property
    def fbank_dir(self) -> Path:
        return self.root / "features" / "fbank"

    @property
    def embeddings_dir(self) -> Path:
        return self.root / "features" / "embeddings"

    @property
    def checkpoint_file(self) -> Path:
        return self.root / "checkpoints" / "best.ckpt"

    @property
    def scores_dir(self) -> Path:
        return self.root / "scores"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def figures_dir(self) -> Path:
        return self.reports_dir / "figures"

    def trials_file(self, split: str) -> Path:
        return self.scores_dir / f"trials_{split}.txt"

    def scores_file(self, split: str, tag: str = "") -> Path:
        stem = f"{split}_{tag}" if tag else split
        return self.scores_dir / f"{stem}.scores.txt"

    def snorm_file(self, split: str) -> Path:
        return self.scores_dir / f"{split}.snorm.txt"


@contextmanager
def run_lock(run: RunDir):
    """One process per run directory; the lock file names the owner pid."""
    run.root.mkdir(parents=True, exist_ok=True)
    lock = run.root / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        owner = lock.read_text().strip() if lock.exists() else "unknown"
        raise RunDirLocked(
            f"run directory {run.root} is locked by pid {owner}; "
            f"remove {lock} if that process is gone") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield run
    finally:
        lock.unlink(missing_ok=True)


def _config_for(run: RunDir, args) -> RunConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config)
    if run.config_file.exists():
        return load_run_config(run.config_file)
    return RunConfig()


def _write_effective_config(run: RunDir, cfg: RunConfig) -> None:
    run.config_file.parent.mkdir(parents=True, exist_ok=True)
    run.config_file.write_text(dump_run_config(cfg))


# -- corpus and feature plumbing ----------------------------------------------------


def _wav_path(run: RunDir, utterance_id: str) -> Path:
    return run.corpus_dir / f"{utterance_id}.wav"


def _archive_path(run: RunDir, utterance_id: str) -> Path:
    return run.fbank_dir / f"{utterance_id}.mfaf"


def _load_manifest(run: RunDir) -> dict:
    if not run.manifest_file.exists():
        raise InputError(f"corpus manifest not found: {run.manifest_file} (run synth first)")
    return json.loads(run.manifest_file.read_text())


def _load_corpus(run: RunDir) -> SynthCorpus:
    manifest = _load_manifest(run)
    utts = []
    for entry in manifest["utterances"]:
        wav = read_wav(run.corpus_dir / entry["wav"])
        utts.append(Utterance(entry["id"], entry["speaker"], entry["split"], wav))
    return SynthCorpus(speakers=[], utterances=utts, seed=int(manifest["seed"]))


def _feature_cache(run: RunDir, cfg: RunConfig,
                   corpus: SynthCorpus | None = None) -> dict[str, FeatureMap]:
    """Prefer saved archives; fall back to recomputing from the corpus wavs."""
    manifest = _load_manifest(run)
    ids = [e["id"] for e in manifest["utterances"]]
    if all(_archive_path(run, i).exists() for i in ids):
        return {i: load_features(_archive_path(run, i)) for i in ids}
    corpus = corpus if corpus is not None else _load_corpus(run)
    return {u.utterance_id: compute_fbank(u.waveform, cfg.features, u.utterance_id)
            for u in corpus.utterances}


def _write_embeddings(run: RunDir, ids: list[str], vectors: np.ndarray) -> None:
    run.embeddings_dir.mkdir(parents=True, exist_ok=True)
    (run.embeddings_dir / "ids.txt").write_text("\n".join(ids) + "\n")
    np.save(run.embeddings_dir / "vectors.npy", vectors.astype(np.float32))


def _read_embeddings(run: RunDir) -> dict[str, np.ndarray]:
    ids_file = run.embeddings_dir / "ids.txt"
    vec_file = run.embeddings_dir / "vectors.npy"
    if not ids_file.exists() or not vec_file.exists():
        raise InputError(f"embeddings not found under {run.embeddings_dir} (run embed first)")
    ids = ids_file.read_text().splitlines()
    vectors = np.load(vec_file)
    if len(ids) != vectors.shape[0]:
        raise InputError(f"{vec_file}: {vectors.shape[0]} vectors for {len(ids)} ids")
    return {i: vectors[n] for n, i in enumerate(ids)}


# -- subcommands ---------------------------------------------------------------------


def cmd_synth(args) -> int:
    run = RunDir(args.out).ensure()
    with run_lock(run):
        cfg = _config_for(run, args)
        if args.seed is not None:
            cfg.corpus.seed = args.seed
        c = cfg.corpus
        corpus = synth_corpus(n_speakers=c.n_speakers, utts_per_speaker=c.utts_per_speaker,
                              duration_range_s=c.duration_range_s, seed=c.seed,
                              sample_rate=c.sample_rate)
        manifest = {"seed": c.seed, "sample_rate": c.sample_rate, "utterances": []}
        for utt in corpus.utterances:
            path = _wav_path(run, utt.utterance_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            write_wav(path, utt.waveform)
            manifest["utterances"].append({
                "id": utt.utterance_id,
                "speaker": utt.speaker_id,
                "split": utt.split,
                "wav": f"{utt.utterance_id}.wav",
                "duration_s": round(utt.waveform.duration_s, 6),
            })
        run.manifest_file.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        for split in ("valid", "test"):
            trials = all_pairs_trials(corpus.split(split))
            trials.to_file(run.trials_file(split))
            print(f"trials: split={split} count={len(trials)} -> {run.trials_file(split)}")
        _write_effective_config(run, cfg)
        print(f"corpus: {len(corpus.utterances)} utterances, "
              f"{len({u.speaker_id for u in corpus.utterances})} speakers -> {run.corpus_dir}")
    return 0


def cmd_fbank(args) -> int:
    run = RunDir(args.out).ensure()
    with run_lock(run):
        cfg = _config_for(run, args)
        corpus = _load_corpus(run)
        for utt in corpus.utterances:
            fmap = compute_fbank(utt.waveform, cfg.features, utt.utterance_id)
            path = _archive_path(run, utt.utterance_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            save_features(path, fmap)
        print(f"features: {len(corpus.utterances)} archives ({cfg.features.n_mels} bins) "
              f"-> {run.fbank_dir}")
    return 0


def cmd_train(args) -> int:
    run = RunDir(args.out).ensure()
    with run_lock(run):
        cfg = _config_for(run, args)
        if args.variant:
            cfg.model.variant = args.variant
        if args.seed is not None:
            cfg.training.seed = args.seed
        corpus = _load_corpus(run)
        cache = _feature_cache(run, cfg, corpus)
        result = train_toy(corpus, cfg.model.variant, cfg.training, cfg.features,
                           feature_cache=cache)
        for line in result.log_lines():
            print(line)
        step = result.best_epoch * cfg.training.steps_per_epoch
        save_checkpoint(run.checkpoint_file, result.model, training_step=step)
        (run.reports_dir / "train_log.txt").write_text(result.log_text())
        plot_training_curves(result.entries, run.figures_dir / "training_curves.png")
        _write_effective_config(run, cfg)
        print(f"best: epoch={result.best_epoch} val_eer={result.best_val_eer:.6f} "
              f"-> {run.checkpoint_file}")
    return 0


def cmd_embed(args) -> int:
    run = RunDir(args.out).ensure()
    with run_lock(run):
        cfg = _config_for(run, args)
        ckpt = Path(args.checkpoint) if args.checkpoint else run.checkpoint_file
        if not ckpt.exists():
            raise InputError(f"checkpoint not found: {ckpt} (run train first)")
        model, step = load_checkpoint(ckpt)
        cache = _feature_cache(run, cfg)
        ids = sorted(cache)
        vectors = np.stack([embed(cache[i], model) for i in ids])
        _write_embeddings(run, ids, vectors)
        print(f"embeddings: {len(ids)} utterances x {vectors.shape[1]} dims "
              f"(checkpoint step {step}) -> {run.embeddings_dir}")
    return 0


def cmd_score(args) -> int:
    run = RunDir(args.out).ensure()
    with run_lock(run):
        trials = TrialList.from_file(run.trials_file(args.split))
        embeddings = _read_embeddings(run)
        scoreset = score_trials(trials, embeddings, system=args.split)
        raw_path = run.scores_file(args.split)
        scoreset.to_file(raw_path)
        print(f"scores: split={args.split} trials={len(trials)} -> {raw_path}")
        if args.snorm:
            manifest = _load_manifest(run)
            cohort_ids = sorted(e["id"] for e in manifest["utterances"]
                                if e["split"] == "train")[:args.cohort_size]
            if len(cohort_ids) < 2:
                raise InputError("s-norm cohort needs at least two train-split utterances")
            cohort = np.stack([embeddings[i] for i in cohort_ids])
            normalized = snorm_scores(scoreset, embeddings, cohort, top_k=args.top_k)
            normalized.to_file(run.snorm_file(args.split), normalized=True)
            print(f"scores: split={args.split} snorm cohort={len(cohort_ids)} "
                  f"top_k={args.top_k if args.top_k else 'off'} -> {run.snorm_file(args.split)}")
    return 0


_TRUNC_RE = re.compile(r"_trunc([0-9.]+)s\.scores\.txt$")


def cmd_eval(args) -> int:
    run = RunDir(args.out).ensure()
    with run_lock(run):
        trials = TrialList.from_file(run.trials_file(args.split))
        labels = trials.labels
        conditions: list[tuple[str, Path]] = []
        if run.scores_file(args.split).exists():
            conditions.append(("full", run.scores_file(args.split)))
        truncated = []
        for path in sorted(run.scores_dir.glob(f"{args.split}_trunc*.scores.txt")):
            m = _TRUNC_RE.search(path.name)
            if m:
                truncated.append((float(m.group(1)), path))
        for seconds, path in sorted(truncated):
            conditions.append((f"trunc{seconds:g}s", path))
        if run.snorm_file(args.split).exists():
            conditions.append(("full-snorm", run.snorm_file(args.split)))
        if not conditions:
            raise InputError(f"no score files for split {args.split!r} under {run.scores_dir} "
                             "(run score first)")

        report = EvalReport()
        first_scores: np.ndarray | None = None
        for label, path in conditions:
            scoreset = ScoreSet.from_file(path, trials)
            report.add(evaluate_condition(label, scoreset.scores, labels,
                                          p_target=args.p_target))
            if first_scores is None:
                first_scores = scoreset.scores
        report_path = run.reports_dir / f"eval_{args.split}.txt"
        report.write(report_path)
        plot_score_distribution(first_scores, labels,
                                run.figures_dir / f"scores_{args.split}.png",
                                title=f"{args.split} trial scores ({conditions[0][0]})")
        plot_condition_metrics(report, run.figures_dir / f"conditions_{args.split}.png")
        print(report.text(), end="")
        print(f"report: {report_path}")
    return 0


def cmd_truncate(args) -> int:
    check_duration(args.max_duration)  # reject bad durations before touching the run
    run = RunDir(args.out).ensure()
    with run_lock(run):
        cfg = _config_for(run, args)
        ckpt = Path(args.checkpoint) if args.checkpoint else run.checkpoint_file
        if not ckpt.exists():
            raise InputError(f"checkpoint not found: {ckpt} (run train first)")
        model, _ = load_checkpoint(ckpt)
        corpus = _load_corpus(run)
        trials = TrialList.from_file(run.trials_file("test"))
        cut = truncate_testset(corpus.split("test"), args.max_duration)
        embeddings = {
            u.utterance_id: embed(
                compute_fbank(u.waveform, cfg.features, u.utterance_id), model)
            for u in cut
        }
        scoreset = score_trials(trials, embeddings, system=f"trunc{args.max_duration:g}s")
        path = run.scores_file("test", tag=f"trunc{args.max_duration:g}s")
        scoreset.to_file(path)
        result = evaluate_condition(f"trunc{args.max_duration:g}s", scoreset.scores,
                                    trials.labels)
        print(result.line())
        print(f"scores: {len(trials)} trials at <= {args.max_duration:g}s -> {path}")
    return 0


def cmd_complexity(args) -> int:
    variants = [args.variant] if args.variant else [v.value for v in ModelVariant]
    reports = [build_model(v).complexity(args.frames) for v in variants]
    lines: list[str] = []
    for rep in reports:
        lines.extend(rep.lines())
    if len(reports) == len(ModelVariant):
        totals_p = {r.variant: r.total_params for r in reports}
        totals_m = {r.variant: r.total_macs for r in reports}
        chain = "<".join(EFFICIENCY_ORDER)
        for metric, totals in (("params", totals_p), ("macs", totals_m)):
            values = [totals[v] for v in EFFICIENCY_ORDER]
            verdict = "ok" if all(a < b for a, b in zip(values, values[1:])) else "violated"
            lines.append(f"ordering metric={metric} {chain} verdict={verdict}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        run = RunDir(args.out).ensure()
        (run.reports_dir / "complexity.txt").write_text(text)
        plot_complexity(reports, run.figures_dir / "complexity.png")
        print(f"report: {run.reports_dir / 'complexity.txt'}")
    return 0


def cmd_gradcheck(args) -> int:
    from .battery import gradient_check_battery
    from .nncore import gradcheck

    checks = gradient_check_battery(args.seed)
    failures = []
    for check in checks:
        try:
            worst = gradcheck(check.fn, check.leaves, tol=args.tol)
            print(f"check={check.name} max_rel_err={worst:.3e} limit={args.tol:g} status=ok")
        except GradientCheckError as exc:
            failures.append(check.name)
            print(f"check={check.name} limit={args.tol:g} status=fail ({exc})")
    if failures:
        raise GradientCheckError(
            f"{len(failures)} gradient checks failed: {', '.join(failures)}")
    print(f"gradcheck: all {len(checks)} checks passed")
    return 0


# -- argument parsing -----------------------------------------------------------------


def _add_common(sp, seed_help: str):
    sp.add_argument("--out", default="runs/default", metavar="DIR",
                    help="run directory (default: runs/default)")
    sp.add_argument("--config", default=None, metavar="PATH",
                    help="run config JSON; defaults to <out>/config/run.json if present")
    sp.add_argument("--seed", type=int, default=None, help=seed_help)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mfasv",
        description="Speaker-verification toolkit: synthetic corpus, filterbank "
                    "features, multi-scale frequency-attentive embedding models, "
                    "training, scoring and evaluation.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = sub.add_parser("synth", help="synthesize the toy corpus and trial lists")
    _add_common(sp, "override corpus seed")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("fbank", help="extract filterbank archives for every utterance")
    _add_common(sp, "(unused)")
    sp.set_defaults(func=cmd_fbank)

    sp = sub.add_parser("train", help="train a model on the train split")
    _add_common(sp, "override training seed")
    sp.add_argument("--variant", choices=[v.value for v in ModelVariant], default=None,
                    help="model architecture (default: from config)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("embed", help="embed every utterance with a trained checkpoint")
    _add_common(sp, "(unused)")
    sp.add_argument("--checkpoint", default=None, metavar="PATH",
                    help="checkpoint file (default: <out>/checkpoints/best.ckpt)")
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("score", help="cosine-score the trial list of a split")
    _add_common(sp, "(unused)")
    sp.add_argument("--split", choices=("valid", "test"), default="test")
    sp.add_argument("--snorm", action="store_true",
                    help="also write symmetrically normalized scores")
    sp.add_argument("--cohort-size", type=int, default=50, metavar="N",
                    help="train-split utterances in the normalization cohort (default 50)")
    sp.add_argument("--top-k", type=int, default=None, metavar="K",
                    help="adaptive s-norm: keep only the K best cohort scores per side")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="EER/minDCF report over every scored condition")
    _add_common(sp, "(unused)")
    sp.add_argument("--split", choices=("valid", "test"), default="test")
    sp.add_argument("--p-target", type=float, default=0.01,
                    help="target prior for the detection cost (default 0.01)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("truncate",
                        help="score the test trials with utterances cut to their first seconds")
    _add_common(sp, "(unused)")
    sp.add_argument("--max-duration", type=float, required=True, metavar="4..10",
                    help="keep only the first SECONDS of every test utterance")
    sp.add_argument("--checkpoint", default=None, metavar="PATH")
    sp.set_defaults(func=cmd_truncate)

    sp = sub.add_parser("complexity", help="parameter/MAC report per model variant")
    sp.add_argument("--variant", choices=[v.value for v in ModelVariant], default=None,
                    help="single variant (default: all four, with ordering verdicts)")
    sp.add_argument("--frames", type=int, default=REFERENCE_FRAMES,
                    help=f"feature frames for MAC counts (default {REFERENCE_FRAMES})")
    sp.add_argument("--out", default=None, metavar="DIR",
                    help="also write the report and a figure into this run directory")
    sp.set_defaults(func=cmd_complexity)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every layer family")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-4,
                    help="max relative error per layer (default 1e-4)")
    sp.set_defaults(func=cmd_gradcheck)

    return p


_ERROR_EXITS: tuple[tuple[type, int], ...] = (
    (ConfigError, 2),
    (RunDirLocked, 6),
    (GradientCheckError, 5),
    (TrainingDiverged, 7),
    (NumericsError, 7),
    (ShapeError, 4),
    (CheckpointError, 3),
    (ArchiveError, 3),
    (InputError, 3),
    (FileNotFoundError, 3),
)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except tuple(t for t, _ in _ERROR_EXITS) as exc:
        for err_type, code in _ERROR_EXITS:
            if isinstance(exc, err_type):
                print(f"error: {exc}", file=sys.stderr)
                return code
        raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
