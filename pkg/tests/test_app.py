from __future__ import annotations

import json
import math
import shutil
from pathlib import Path

import pytest

from fragflow.app.cli import EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_DATA, EXIT_OK, frag_report, main, read_samples
from fragflow.app.config import ConfigError, RunConfig, format_config, parse_config_text
from fragflow.app.manifest import sha256_file

TINY = {
    "ae_epochs": 2, "flow_epochs": 1, "predictor_epochs": 1, "fragment_predictor_epochs": 5,
    "embed_dim": 8, "frag_hidden": 8, "hidden": 16, "edge_hidden": 8, "latent_dim": 8, "ae_hidden": 16,
    "predictor_hidden": 8, "time_width": 4, "rrwp_steps": 3, "bag_train": 16, "bag_size": 16,
    "n_samples": 8, "steps": 3, "chunk": 3, "batch_size": 16,
}


def write_config(path: Path, data: Path, out: Path, **extra) -> Path:
    values = {"train": data / "train.smi", "valid": data / "valid.smi", "test": data / "test.smi", "out_dir": out, **TINY, **extra}
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    data, out = root / "data", root / "out"
    assert main(["-q", "toy-corpus", "--out-dir", str(data), "--n-train", "150", "--n-valid", "30", "--n-test", "30"]) == EXIT_OK
    cfg = write_config(root / "run.cfg", data, out, condition_value=2.0, lambda_x=0.5)
    assert main(["-q", "build-vocab", "--corpus", str(data / "train.smi"), "--output", str(out / "vocab.tsv")]) == EXIT_OK
    for cmd in ("train-ae", "train-flow", "train-predictor", "sample"):
        assert main(["-q", cmd, "--config", str(cfg)]) == EXIT_OK, cmd
    return root, data, out, cfg


# config


def test_config_parsing_comments_and_aliases():
    values = parse_config_text("# run\nsteps = 10  # fewer\n\ncondition.lambda_x = 0.5\nt-bag=1.5\n")
    assert values == {"steps": 10, "lambda_x": 0.5, "t_bag": 1.5}


@pytest.mark.parametrize("text", ["steps 10", "unknown = 1", "steps = ten"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_config_value_validation():
    with pytest.raises(ConfigError):
        RunConfig(lr=0)
    with pytest.raises(ConfigError):
        RunConfig(distortion="cubic")
    with pytest.raises(ConfigError):
        RunConfig(alpha_edge=0)


def test_config_format_roundtrip():
    cfg = RunConfig(steps=7, t_bag=1.5)
    again = RunConfig(**parse_config_text(format_config(cfg)))
    assert again.digest() == cfg.digest()


def test_digest_ignores_execution_layout():
    assert RunConfig(workers=4, chunk=7, out_dir="x").digest() == RunConfig().digest()
    assert RunConfig(steps=49).digest() != RunConfig().digest()


def test_unconditional_by_default():
    assert RunConfig().condition() is None
    assert RunConfig(condition_value=2.0).condition().target == 2.0


# exit codes


def test_missing_config_file_exit_2(tmp_path):
    assert main(["-q", "train-ae", "--config", str(tmp_path / "none.cfg")]) == EXIT_CONFIG


def test_bad_override_exit_2(tmp_path):
    assert main(["-q", "sample", "--steps", "zero"]) == EXIT_CONFIG


def test_missing_vocab_exit_2(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", tmp_path, tmp_path / "out")
    for name in ("train.smi", "valid.smi"):
        (tmp_path / name).write_text("CCO\n")
    assert main(["-q", "train-ae", "--config", str(cfg)]) == EXIT_CONFIG


def test_bad_corpus_exit_3(tmp_path):
    (tmp_path / "bad.smi").write_text("C1CC\n")
    assert main(["-q", "build-vocab", "--corpus", str(tmp_path / "bad.smi"), "--output", str(tmp_path / "v.tsv")]) == EXIT_DATA


def test_frag_command(capsys):
    assert main(["frag", "CCc1ccccc1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "fragments: 2" in out
    assert "[*]" in out and "rule=" in out
    assert frag_report("c1ccccc1").splitlines()[-1] == "cut bonds: 0"


# pipeline


def test_pipeline_artifacts_and_manifests(tiny_run):
    _, _, out, _ = tiny_run
    for name in ("vocab.tsv", "ae.ckpt", "flow.ckpt", "predictor-ring_count.ckpt", "samples.tsv"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest-sample-samples.json").read_text())
    assert set(manifest) == {"command", "config_digest", "code_version", "wall_clock_seconds", "seeds", "outputs"}
    for path, digest in manifest["outputs"].items():
        assert sha256_file(path) == digest


def test_samples_file_flags_every_sample(tiny_run):
    _, _, out, _ = tiny_run
    statuses, smiles, header = read_samples(out / "samples.tsv")
    assert len(statuses) == TINY["n_samples"]
    assert set(statuses) <= {"valid", "parse-fail", "unrealized-edge", "multi-component"}
    assert all(s is not None for st, s in zip(statuses, smiles) if st == "valid")
    assert all(s is None for st, s in zip(statuses, smiles) if st in ("parse-fail", "unrealized-edge"))
    assert {"vocab_digest", "config_digest"} <= set(header)


def test_sampling_deterministic_and_worker_independent(tiny_run):
    root, _, out, cfg = tiny_run
    a, b = root / "again.tsv", root / "workers.tsv"
    assert main(["-q", "sample", "--config", str(cfg), "--output", str(a)]) == EXIT_OK
    assert main(["-q", "sample", "--config", str(cfg), "--output", str(b), "--workers", "2"]) == EXIT_OK
    assert a.read_bytes() == (out / "samples.tsv").read_bytes() == b.read_bytes()


def test_training_rerun_is_bit_identical(tiny_run, tmp_path):
    root, data, out, _ = tiny_run
    out2 = tmp_path / "out"
    out2.mkdir()
    shutil.copy(out / "vocab.tsv", out2 / "vocab.tsv")
    cfg = write_config(tmp_path / "run.cfg", data, out2, condition_value=2.0, lambda_x=0.5)
    for cmd in ("train-ae", "train-flow"):
        assert main(["-q", cmd, "--config", str(cfg)]) == EXIT_OK
    for name in ("ae.ckpt", "flow.ckpt", "ae.log.jsonl", "flow.log.jsonl"):
        assert (out2 / name).read_bytes() == (out / name).read_bytes(), name


def test_eval_train_vs_train(tiny_run, tmp_path, capsys):
    _, data, _, _ = tiny_run
    train = str(data / "train.smi")
    assert main(["-q", "eval", "--generated", train, "--train", train, "--test", train]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["validity"] == 100.0
    assert report["novelty"] == 0.0
    assert report["snn"] == 1.0
    assert all(v is None or v < 1e-6 for v in report["kl"].values())


def test_eval_writes_report_and_manifest(tiny_run, tmp_path):
    _, data, out, _ = tiny_run
    report = tmp_path / "report.json"
    args = ["-q", "eval", "--generated", str(out / "samples.tsv"), "--train", str(data / "train.smi"),
            "--test", str(data / "test.smi"), "--vocab", str(out / "vocab.tsv"), "--output", str(report)]
    assert main(args) == EXIT_OK
    doc = json.loads(report.read_text())
    assert doc["n_samples"] == TINY["n_samples"]
    assert 0 <= doc["validity"] <= 100
    assert (tmp_path / "manifest-eval-report.json").exists()
    first = report.read_bytes()
    assert main(args) == EXIT_OK
    assert report.read_bytes() == first


def test_eval_refuses_other_vocabulary(tiny_run, tmp_path):
    _, data, out, _ = tiny_run
    other = tmp_path / "vocab.tsv"
    assert main(["-q", "build-vocab", "--corpus", str(data / "test.smi"), "--output", str(other)]) == EXIT_OK
    code = main(["-q", "eval", "--generated", str(out / "samples.tsv"), "--train", str(data / "train.smi"),
                 "--test", str(data / "test.smi"), "--vocab", str(other)])
    assert code == EXIT_CHECKPOINT


def test_sample_with_other_vocabulary_exit_4(tiny_run, tmp_path):
    _, data, out, cfg = tiny_run
    other = tmp_path / "vocab.tsv"
    assert main(["-q", "build-vocab", "--corpus", str(data / "test.smi"), "--output", str(other)]) == EXIT_OK
    code = main(["-q", "sample", "--config", str(cfg), "--vocab", str(other), "--output", str(tmp_path / "s.tsv")])
    assert code == EXIT_CHECKPOINT


def test_corrupt_checkpoint_exit_3(tiny_run, tmp_path):
    _, _, out, _ = tiny_run
    bad = tmp_path / "ae.ckpt"
    bad.write_bytes(b"not a checkpoint")
    code = main(["-q", "roundtrip", "--corpus", str(out.parent / "data" / "test.smi"), "--ae", str(bad), "--vocab", str(out / "vocab.tsv")])
    assert code == EXIT_DATA


def test_roundtrip_command(tiny_run, capsys):
    _, data, out, _ = tiny_run
    code = main(["-q", "roundtrip", "--corpus", str(data / "test.smi"), "--ae", str(out / "ae.ckpt"), "--vocab", str(out / "vocab.tsv")])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    for part in ("encoded", "random"):
        assert 0 <= doc[part]["graph"] <= doc[part]["bond"] <= 1 or math.isclose(doc[part]["graph"], 1.0)
