"""End-to-end command-line pipeline on a micro corpus, plus exit-code mapping."""

import contextlib
import io
import json
import re

import pytest

from mfasv.cli import main

MICRO_CONFIG = {
    "corpus": {"n_speakers": 10, "utts_per_speaker": 2,
               "duration_range_s": [1.0, 1.5], "seed": 11},
    "model": {"variant": "ecapa-tdnn"},
    "training": {"epochs": 1, "steps_per_epoch": 2, "batch_size": 4,
                 "segment_seconds": 1.0, "mask_max_frames": 5,
                 "cycle_epochs": 1, "width_multiplier": 0.03125, "seed": 5},
}


def run_cli(*argv):
    out = io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(out):
        code = main(list(argv))
    return code, out.getvalue()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full micro run; tests below only inspect its artifacts."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "micro.json"
    cfg_path.write_text(json.dumps(MICRO_CONFIG))
    out = str(root / "run")
    stdout = {}
    steps = [
        ("synth", ["synth", "--out", out, "--config", str(cfg_path)]),
        ("fbank", ["fbank", "--out", out]),
        ("train", ["train", "--out", out]),
        ("embed", ["embed", "--out", out]),
        ("score", ["score", "--out", out, "--split", "test", "--snorm",
                   "--cohort-size", "8", "--top-k", "5"]),
        ("truncate", ["truncate", "--out", out, "--max-duration", "4"]),
        ("eval", ["eval", "--out", out, "--split", "test"]),
    ]
    for name, argv in steps:
        code, text = run_cli(*argv)
        assert code == 0, f"{name} failed:\n{text}"
        stdout[name] = text
    return root / "run", stdout


def test_run_directory_layout(pipeline):
    run, _ = pipeline
    assert (run / "config" / "run.json").is_file()
    assert len(list((run / "features" / "corpus").rglob("*.wav"))) == 20
    assert len(list((run / "features" / "fbank").rglob("*.mfaf"))) == 20
    assert (run / "checkpoints" / "best.ckpt").is_file()
    assert (run / "features" / "embeddings" / "ids.txt").is_file()
    assert (run / "features" / "embeddings" / "vectors.npy").is_file()
    for name in ("trials_test.txt", "trials_valid.txt", "test.scores.txt",
                 "test.snorm.txt", "test_trunc4s.scores.txt"):
        assert (run / "scores" / name).is_file(), name
    assert (run / "reports" / "eval_test.txt").is_file()
    assert (run / "reports" / "train_log.txt").is_file()
    figures = {p.name for p in (run / "reports" / "figures").glob("*.png")}
    assert {"training_curves.png", "scores_test.png", "conditions_test.png"} <= figures
    assert not (run / ".lock").exists()  # released after every command


def test_synth_stores_effective_config(pipeline):
    run, stdout = pipeline
    assert "corpus: 20 utterances, 10 speakers" in stdout["synth"]
    stored = json.loads((run / "config" / "run.json").read_text())
    assert stored["corpus"]["n_speakers"] == 10
    assert stored["training"]["width_multiplier"] == 0.03125


def test_train_logs_epochs(pipeline):
    _, stdout = pipeline
    lines = [l for l in stdout["train"].splitlines() if l.startswith("epoch=")]
    assert len(lines) == 1
    assert re.match(r"epoch=1 step=2 lr=\S+ loss=\d+\.\d{6} val_eer=\d+\.\d{6}", lines[0])


def test_eval_report_format(pipeline):
    run, stdout = pipeline
    pattern = re.compile(
        r"^condition=(\S+) eer=\d+\.\d{4} mindcf=\d+\.\d{4} targets=\d+ nontargets=\d+$")
    conditions = []
    for line in stdout["eval"].splitlines():
        m = pattern.match(line)
        if m:
            conditions.append(m.group(1))
    assert conditions == ["full", "trunc4s", "full-snorm"]
    assert (run / "reports" / "eval_test.txt").read_text() in stdout["eval"]


def test_eval_is_idempotent(pipeline):
    run, _ = pipeline
    report = run / "reports" / "eval_test.txt"
    first = report.read_bytes()
    code, _ = run_cli("eval", "--out", str(run), "--split", "test")
    assert code == 0
    assert report.read_bytes() == first


def test_trial_and_score_files_are_parallel(pipeline):
    run, _ = pipeline
    trials = (run / "scores" / "trials_test.txt").read_text().splitlines()
    scores = (run / "scores" / "test.scores.txt").read_text().splitlines()
    assert len(trials) == len(scores)
    for t, s in zip(trials, scores):
        assert t.split()[1:] == s.split()[:2]


def test_complexity_stdout_and_artifacts(tmp_path):
    code, text = run_cli("complexity", "--out", str(tmp_path / "r"))
    assert code == 0
    for variant in ("ecapa-tdnn", "mfa-standard", "mfa-lite", "ecapa-cnn-tdnn"):
        assert f"variant={variant}" in text
    assert "ordering metric=params" in text and "verdict=ok" in text
    assert (tmp_path / "r" / "reports" / "complexity.txt").is_file()
    assert (tmp_path / "r" / "reports" / "figures" / "complexity.png").is_file()


def test_gradcheck_command_passes(tmp_path):
    code, text = run_cli("gradcheck", "--seed", "0")
    assert code == 0
    lines = [l for l in text.splitlines() if l.startswith("check=")]
    assert len(lines) >= 20
    assert all(l.endswith("status=ok") for l in lines)


def test_gradcheck_impossible_tolerance_exits_5():
    code, text = run_cli("gradcheck", "--seed", "0", "--tol", "1e-30")
    assert code == 5
    assert "error:" in text


# -- exit codes --------------------------------------------------------------------------


def test_eval_without_synth_exits_3(tmp_path):
    code, text = run_cli("eval", "--out", str(tmp_path / "fresh"))
    assert code == 3
    assert "synth" in text  # points at the missing step


def test_embed_without_checkpoint_exits_3(tmp_path):
    cfg = dict(MICRO_CONFIG, corpus=dict(MICRO_CONFIG["corpus"], n_speakers=4))
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg))
    out = str(tmp_path / "run")
    assert run_cli("synth", "--out", out, "--config", str(cfg_path))[0] == 0
    code, text = run_cli("embed", "--out", out)
    assert code == 3
    assert "train" in text


def test_bad_config_section_exits_2(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"bogus": {}}))
    code, text = run_cli("synth", "--out", str(tmp_path / "run"), "--config", str(cfg_path))
    assert code == 2
    assert "unknown section" in text


def test_out_of_range_truncation_exits_2(tmp_path):
    code, text = run_cli("truncate", "--out", str(tmp_path / "r"), "--max-duration", "11")
    assert code == 2
    assert "max duration" in text


def test_locked_run_dir_exits_6(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / ".lock").write_text("pid 12345\n")
    code, text = run_cli("synth", "--out", str(out))
    assert code == 6
    assert "12345" in text and ".lock" in text


def test_lock_is_released_after_failure(tmp_path):
    out = tmp_path / "run"
    code, _ = run_cli("fbank", "--out", str(out))  # fails: no manifest yet
    assert code == 3
    assert not (out / ".lock").exists()
