"""Acceptance gate: one test per shipping criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdicts inline.
The training-efficacy criterion performs two full toy trainings and dominates
the runtime of this module (a few minutes on a laptop CPU).
"""

import contextlib
import io
import re
import time

import numpy as np
import pytest

from mfasv.backbone import build_model, embed
from mfasv.battery import gradient_check_battery
from mfasv.checkpoint import load_checkpoint, save_checkpoint
from mfasv.cli import main
from mfasv.config import CorpusSpec
from mfasv.errors import CheckpointShapeError
from mfasv.evalkit import compute_eer, compute_mindcf, snorm_one, truncate_testset
from mfasv.features import (
    FbankConfig, FeatureMap, Utterance, Waveform, compute_fbank, load_features,
    save_features, synth_corpus,
)
from mfasv.frontend import DualPathModule, MfaConfig, MfaFrontend, fa_squeeze, split_scales
from mfasv.nncore import Tensor, concat, gradcheck
from mfasv.training import (
    Adam, AamSoftmax, CyclicalLr, TrainConfig, all_pairs_trials, train_toy,
)
from mfasv.nncore import Parameter


def report(num: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'}"
          + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} {name}: {detail}"


# -- 1: complexity reproduction ------------------------------------------------------------

PARAM_BANDS = {
    "ecapa-tdnn": (6.19e6, 0.02),
    "mfa-standard": (7.32e6, 0.10),
    "mfa-lite": (5.93e6, 0.10),
    "ecapa-cnn-tdnn": (7.66e6, 0.10),
}
EFFICIENCY_ORDER = ("mfa-lite", "ecapa-tdnn", "mfa-standard", "ecapa-cnn-tdnn")


def test_criterion_1_complexity_reproduction():
    start = time.perf_counter()
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(["complexity"])
    elapsed = time.perf_counter() - start
    text = out.getvalue()

    totals: dict[str, tuple[int, int]] = {}
    current = None
    for line in text.splitlines():
        m = re.match(r"variant=(\S+) frames=300", line)
        if m:
            current = m.group(1)
        m = re.match(r"\s+total params=(\d+) macs=(\d+)", line)
        if m and current:
            totals[current] = (int(m.group(1)), int(m.group(2)))

    problems = []
    if code != 0:
        problems.append(f"exit code {code}")
    for variant, (target, tol) in PARAM_BANDS.items():
        params = totals.get(variant, (0, 0))[0]
        if not (target * (1 - tol) <= params <= target * (1 + tol)):
            problems.append(f"{variant} params {params} outside {target}+-{tol:.0%}")
    for metric, idx in (("params", 0), ("macs", 1)):
        values = [totals.get(v, (0, 0))[idx] for v in EFFICIENCY_ORDER]
        if not all(a < b for a, b in zip(values, values[1:])):
            problems.append(f"{metric} ordering violated: {values}")
        if f"ordering metric={metric}" not in text or "verdict=ok" not in text:
            problems.append(f"missing ok verdict line for {metric}")
    if elapsed >= 5.0:
        problems.append(f"took {elapsed:.1f}s (budget 5s)")

    report(1, "complexity reproduction", not problems,
           "; ".join(problems) or f"{elapsed:.1f}s, "
           + " ".join(f"{v}={totals[v][0]}" for v in EFFICIENCY_ORDER))


# -- 2: gradient integrity ------------------------------------------------------------------


def test_criterion_2_gradient_integrity():
    start = time.perf_counter()
    worst = 0.0
    worst_name = ""
    n_checks = 0
    for seed in range(10):
        for check in gradient_check_battery(seed):
            err = gradcheck(check.fn, check.leaves, tol=1e-4)
            n_checks += 1
            if err > worst:
                worst, worst_name = err, f"{check.name}@seed{seed}"
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 120.0
    report(2, "gradient integrity", ok,
           f"{n_checks} checks over 10 seeds, worst {worst:.2e} ({worst_name}), "
           f"{elapsed:.1f}s")


# -- 3: MFA structural invariants -------------------------------------------------------------


def test_criterion_3_mfa_structural_invariants():
    rng = np.random.default_rng(42)
    problems = []
    for n_scales in (2, 4):
        for channels in (24, 32):
            cfg = MfaConfig(channels=channels, n_scales=n_scales, out_channels=512)
            dm = DualPathModule(cfg, rng=rng)
            group = cfg.group_channels
            d = cfg.reduced_bins
            for length in (50, 298):
                tag = f"s={n_scales},C={channels},L={length}"
                x = rng.standard_normal((2, channels, d, length))

                state = dm.forward_state(Tensor(x))
                for g in state.gates:
                    if not (np.all(g.data > 0.0) and np.all(g.data < 1.0)):
                        problems.append(f"{tag}: gate left (0,1)")

                # frame permutation moves FA-gated maps framewise, gates fixed
                perm = rng.permutation(length)
                stage = dm.stages[0]
                y = rng.standard_normal((2, group, d, length))
                g1 = stage.fa.gates(fa_squeeze(Tensor(y))).data
                g2 = stage.fa.gates(fa_squeeze(Tensor(y[:, :, :, perm]))).data
                out = stage.fa(Tensor(y)).data
                out_p = stage.fa(Tensor(y[:, :, :, perm])).data
                if not np.allclose(g1, g2, atol=1e-6, rtol=0):
                    problems.append(f"{tag}: gates not permutation-invariant")
                if not np.allclose(out_p, out[:, :, :, perm], atol=1e-6, rtol=0):
                    problems.append(f"{tag}: FA not frame-equivariant")

                groups = split_scales(Tensor(x), n_scales)
                if not np.array_equal(concat(groups, axis=1).data, x):
                    problems.append(f"{tag}: split/concat not an identity")

                base = dm.forward_state(Tensor(x))
                for j in range(n_scales):
                    bumped = x.copy()
                    bumped[:, j * group:(j + 1) * group] += rng.standard_normal(
                        (2, group, d, length))
                    alt = dm.forward_state(Tensor(bumped))
                    for i in range(j):
                        if not np.array_equal(alt.cnn_maps[i].data, base.cnn_maps[i].data):
                            problems.append(f"{tag}: cnn map {i} moved by group {j}")
                        if not np.array_equal(alt.tdnn_maps[i].data, base.tdnn_maps[i].data):
                            problems.append(f"{tag}: tdnn map {i} moved by group {j}")
                    if np.array_equal(alt.cnn_maps[j].data, base.cnn_maps[j].data):
                        problems.append(f"{tag}: group {j} perturbation had no effect")

                fe = MfaFrontend(cfg, rng=rng)
                shaped = fe(Tensor(rng.standard_normal((1, 80, length),
                                                       ).astype(np.float32)))
                if shaped.shape != (512, length):
                    problems.append(f"{tag}: frontend shape {shaped.shape}")

    report(3, "MFA structural invariants", not problems,
           "; ".join(problems[:4]) or "8 config/length combos clean")


# -- 4: metric oracle equivalence ---------------------------------------------------------------


def _sweep_points(scores, labels):
    tgt = [s for s, l in zip(scores, labels) if l == 1]
    non = [s for s, l in zip(scores, labels) if l == 0]
    pts = []
    for thr in sorted(set(scores)):
        pts.append((sum(1 for s in tgt if s < thr) / len(tgt),
                    sum(1 for s in non if s >= thr) / len(non)))
    pts.append((1.0, 0.0))
    return pts


def _eer_oracle(scores, labels):
    pts = _sweep_points(scores, labels)
    for i, (pm, pf) in enumerate(pts):
        if pm - pf >= 0.0:
            if pm - pf == 0.0 or i == 0:
                return pm
            pm0, pf0 = pts[i - 1]
            t = -(pm0 - pf0) / ((pm - pf) - (pm0 - pf0))
            return pm0 + t * (pm - pm0)
    raise AssertionError("no crossing")


def _mindcf_oracle(scores, labels, p_target=0.01):
    pts = _sweep_points(scores, labels)
    dcf = [p_target * pm + (1.0 - p_target) * pf for pm, pf in pts]
    return min(dcf) / min(p_target, 1.0 - p_target)


def test_criterion_4_metric_oracle_equivalence():
    rng = np.random.default_rng(2024)
    problems = []
    for k in range(200):
        n = int(rng.integers(2, 21))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 1, 0
        scores = rng.integers(-10, 11, size=n) / 4.0
        eer = compute_eer(scores, labels)
        dcf = compute_mindcf(scores, labels)
        if eer != _eer_oracle(list(scores), list(labels)):
            problems.append(f"set {k}: EER mismatch")
        if dcf != _mindcf_oracle(list(scores), list(labels)):
            problems.append(f"set {k}: minDCF mismatch")
        for f in (lambda s: 2.5 * s + 0.75, np.exp, np.arctan):
            if compute_eer(f(scores), labels) != eer:
                problems.append(f"set {k}: EER not monotone-invariant")
            if compute_mindcf(f(scores), labels) != dcf:
                problems.append(f"set {k}: minDCF not monotone-invariant")

    for k in range(20):
        e, t = rng.standard_normal(15), rng.standard_normal(15)
        s = float(rng.standard_normal())
        a = float(rng.uniform(0.05, 20.0))
        b = float(rng.uniform(-3.0, 3.0))
        if abs(snorm_one(a * s + b, a * e + b, a * t + b) - snorm_one(s, e, t)) >= 1e-9:
            problems.append(f"snorm draw {k}: affine invariance broken")

    report(4, "metric oracle equivalence", not problems,
           "; ".join(problems[:4]) or "200 score sets + 20 s-norm draws exact")


# -- 5: toy training efficacy ----------------------------------------------------------------


def test_criterion_5_toy_training_efficacy():
    start = time.perf_counter()
    spec = CorpusSpec()
    corpus = synth_corpus(n_speakers=spec.n_speakers,
                          utts_per_speaker=spec.utts_per_speaker,
                          duration_range_s=spec.duration_range_s,
                          seed=spec.seed, sample_rate=spec.sample_rate)
    fbank_cfg = FbankConfig()
    cache = {u.utterance_id: compute_fbank(u.waveform, fbank_cfg, u.utterance_id)
             for u in corpus.utterances}

    cfg = TrainConfig()  # 8 epochs x 40 steps = 320 >= 300
    runs = [train_toy(corpus, "mfa-standard", cfg, fbank_cfg,
                      feature_cache=dict(cache)) for _ in range(2)]
    res = runs[0]

    test_trials = all_pairs_trials(corpus.split("test"))
    embeddings = {uid: embed(cache[uid], res.model) for uid in sorted(test_trials.ids())}
    from mfasv.evalkit import score_trials
    scored = score_trials(test_trials, embeddings)
    test_eer = compute_eer(scored.scores, test_trials.labels)

    pa = dict(runs[0].model.named_parameters())
    pb = dict(runs[1].model.named_parameters())
    identical = (runs[0].log_lines() == runs[1].log_lines()
                 and all(np.array_equal(pa[k].data, pb[k].data) for k in pa))
    elapsed = time.perf_counter() - start

    problems = []
    if cfg.epochs * cfg.steps_per_epoch < 300:
        problems.append("fewer than 300 steps")
    if not res.final_loss <= 0.5 * res.initial_loss:
        problems.append(f"loss {res.initial_loss:.3f} -> {res.final_loss:.3f} not halved")
    if not test_eer <= 0.15:
        problems.append(f"test EER {test_eer:.3f} > 0.15")
    if not identical:
        problems.append("same-seed runs differ")
    if elapsed >= 900.0:
        problems.append(f"took {elapsed:.0f}s (budget 900s)")

    report(5, "toy training efficacy", not problems,
           "; ".join(problems) or
           f"loss {res.initial_loss:.2f}->{res.final_loss:.2f}, "
           f"test EER {test_eer * 100:.2f}%, two identical runs in {elapsed:.0f}s")


# -- 6: truncation harness fidelity --------------------------------------------------------------


def test_criterion_6_truncation_harness():
    sr = 16000
    rng = np.random.default_rng(7)
    durations = [3.0, 4.0, 5.5, 8.0, 12.0]
    testset = [
        Utterance(f"u{i}", f"s{i % 2}", "test",
                  Waveform(rng.uniform(-0.5, 0.5, int(d * sr)).astype(np.float32), sr))
        for i, d in enumerate(durations)
    ]
    trial_ids = {u.utterance_id for u in testset}

    problems = []
    for max_s in range(4, 11):
        cut = truncate_testset(testset, max_s)
        if len(cut) != len(testset) or {u.utterance_id for u in cut} != trial_ids:
            problems.append(f"{max_s}s: trial inventory changed")
        limit = int(round(max_s * sr))
        for orig, c in zip(testset, cut):
            if orig.waveform.samples.size > limit:
                if c.waveform.samples.size != limit or not np.array_equal(
                        c.waveform.samples, orig.waveform.samples[:limit]):
                    problems.append(f"{max_s}s: {orig.utterance_id} not cut to first {limit}")
            elif not np.array_equal(c.waveform.samples, orig.waveform.samples):
                problems.append(f"{max_s}s: {orig.utterance_id} altered though short")
        again = truncate_testset(cut, max_s)
        if any(not np.array_equal(a.waveform.samples, b.waveform.samples)
               for a, b in zip(cut, again)):
            problems.append(f"{max_s}s: not idempotent")

    report(6, "truncation harness fidelity", not problems,
           "; ".join(problems[:4]) or "durations 4..10s all clean")


# -- 7: persistence ---------------------------------------------------------------------------


def test_criterion_7_persistence(tmp_path):
    rng = np.random.default_rng(17)
    problems = []

    model = build_model("mfa-lite", width_multiplier=1 / 16, mfa_channels=8)
    model.train()
    for _ in range(3):  # park non-trivial values in the running buffers
        model(Tensor(rng.standard_normal((2, 1, 80, 20)).astype(np.float32)))
    fmap = FeatureMap(rng.standard_normal((80, 50)).astype(np.float32), 0.01, "probe")
    before = embed(fmap, model)
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, model, training_step=11)
    loaded, step = load_checkpoint(ckpt)
    after = embed(fmap, loaded)
    if not (np.array_equal(before, after) and step == 11):
        problems.append("checkpoint round trip not bit-exact")

    arch = tmp_path / "probe.mfaf"
    save_features(arch, fmap)
    back = load_features(arch)
    if not (np.array_equal(back.data, fmap.data)
            and back.utterance_id == fmap.utterance_id
            and np.float32(back.frame_hop_s) == np.float32(fmap.frame_hop_s)):
        problems.append("feature archive round trip not bit-exact")

    other = build_model("ecapa-tdnn", width_multiplier=1 / 16)
    try:
        from mfasv.checkpoint import load_into
        load_into(other, ckpt)
        problems.append("cross-variant load did not fail")
    except CheckpointShapeError as exc:
        if "m.ckpt" not in str(exc):
            problems.append("cross-variant diagnostic lacks the file path")

    report(7, "persistence", not problems, "; ".join(problems) or
           "checkpoint and archive bit-exact, cross-variant load fails closed")


# -- 8: training-recipe fidelity ----------------------------------------------------------------


def test_criterion_8_training_recipe_fidelity():
    problems = []

    sched = CyclicalLr(1e-8, 1e-3, cycle_steps=80)
    if sched.lr(0) != 1e-8 or sched.lr(80) != 1e-8:
        problems.append("cycle floor not exactly 1e-8")
    if sched.lr(40) != 1e-3:
        problems.append("cycle peak not exactly 1e-3")

    rng = np.random.default_rng(31)
    head = AamSoftmax(6, 10, margin=0.0, scale=1.0, dtype=np.float64,
                      rng=np.random.default_rng(5))
    emb = Tensor(rng.standard_normal((8, 10)))
    labels = rng.integers(0, 6, size=8)
    got = float(head(emb, labels).data)
    e = emb.data / np.linalg.norm(emb.data, axis=1, keepdims=True)
    w = head.weight.data / np.linalg.norm(head.weight.data, axis=1, keepdims=True)
    logits = e @ w.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    want = float(-logp[np.arange(8), labels].mean())
    if abs(got - want) >= 1e-10:
        problems.append(f"zero-margin loss differs from softmax CE by {abs(got - want):.2e}")

    p = Parameter(np.array([0.5, -1.5, 2.0]))
    before = p.data.copy()
    Adam({"w": p}, weight_decay=2e-5).step(1e-3)
    if not np.array_equal(p.data, before * (1.0 - 1e-3 * 2e-5)):
        problems.append("decay-only step is not exactly (1 - lr*2e-5)")

    report(8, "training-recipe fidelity", not problems,
           "; ".join(problems) or "endpoints, margin reduction, decay all exact")
