import json
import os
import time

import numpy as np
import pytest

from textnet import cli
from textnet.numerics import read_matrix

from conftest import write_toy_files


TRAIN_OVERRIDES = [
    "--set", "dim=16", "--set", "batch_size=32", "--set", "epochs=6",
    "--set", "pad_length=10", "--set", "pretrain_epochs=50",
    "--set", "lr=0.005", "--set", "val_fraction=0.1", "--set", "patience=10",
]


def _prepare(tmp_path, ratio=60, split_mode="edges", labels=False):
    ep, tp, lp = write_toy_files(str(tmp_path / "raw"), labels=labels)
    out = str(tmp_path / "prepared")
    argv = ["prepare", "--edges", ep, "--texts", tp, "--out", out,
            "--ratio", str(ratio), "--seed", "1", "--split-mode", split_mode]
    if labels:
        argv += ["--labels", lp]
    assert cli.main(argv) == 0
    return out


def _train(tmp_path, prepared, mode="ACNE", extra=()):
    run = str(tmp_path / f"run_{mode}")
    argv = ["train", "--prepared", prepared, "--out", run, "--mode", mode,
            "--seed", "7"] + TRAIN_OVERRIDES + list(extra)
    assert cli.main(argv) == 0
    return run


class TestPrepare:
    def test_writes_artifacts_and_manifest(self, tmp_path):
        prepared = _prepare(tmp_path)
        for name in ("nodes.tsv", "edges.tsv", "texts.tsv", "vocab.txt",
                     "split.json", "manifest.json"):
            assert os.path.exists(os.path.join(prepared, name)), name
        with open(os.path.join(prepared, "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["node_count"] == 72
        assert manifest["split_mode"] == "edges"
        assert "tokenizer" in manifest

    def test_idempotent_rerun_byte_identical(self, tmp_path):
        ep, tp, _ = write_toy_files(str(tmp_path / "raw"))
        out = str(tmp_path / "prepared")
        argv = ["prepare", "--edges", ep, "--texts", tp, "--out", out,
                "--ratio", "60", "--seed", "1"]
        assert cli.main(argv) == 0
        snapshot = {}
        for name in os.listdir(out):
            with open(os.path.join(out, name), "rb") as f:
                snapshot[name] = f.read()
        assert cli.main(argv) == 0
        for name, blob in snapshot.items():
            with open(os.path.join(out, name), "rb") as f:
                assert f.read() == blob, name

    def test_missing_text_file_exits_2(self, tmp_path):
        ep, tp, _ = write_toy_files(str(tmp_path / "raw"))
        code = cli.main(["prepare", "--edges", ep, "--texts",
                         str(tmp_path / "nope.txt"),
                         "--out", str(tmp_path / "p"), "--ratio", "60"])
        assert code == 2

    def test_parse_error_exits_2(self, tmp_path):
        ep, tp, _ = write_toy_files(str(tmp_path / "raw"))
        bad = tmp_path / "bad_edges.txt"
        bad.write_text("0 1\n0 1 2 3\n")
        code = cli.main(["prepare", "--edges", str(bad), "--texts", tp,
                         "--out", str(tmp_path / "p"), "--ratio", "60"])
        assert code == 2


class TestTrain:
    def test_toy_training_completes_quickly(self, tmp_path):
        prepared = _prepare(tmp_path)
        start = time.time()
        run = _train(tmp_path, prepared)
        assert time.time() - start < 60.0
        for name in ("embeddings.mat", "embeddings.txt", "config.resolved.txt",
                     "manifest.json", "loss_curves.tsv", "loss_curves.png",
                     "checkpoint/state.json", "nodes.tsv"):
            assert os.path.exists(os.path.join(run, name)), name

    def test_mode_wiring_in_resolved_config(self, tmp_path):
        prepared = _prepare(tmp_path)
        run = _train(tmp_path, prepared, mode="CNE-mu",
                     extra=["--set", "epochs=1", "--set", "pretrain_epochs=0"])
        from textnet.config import TrainConfig
        cfg = TrainConfig.from_file(os.path.join(run, "config.resolved.txt"))
        assert cfg.lam2 == 0.0 and cfg.lam3 == 0.0

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        prepared = _prepare(tmp_path)
        base = ["--prepared", prepared, "--mode", "ACNE", "--seed", "7",
                "--set", "dim=8", "--set", "batch_size=16",
                "--set", "pad_length=10", "--set", "pretrain_epochs=20",
                "--set", "val_fraction=0.1", "--set", "patience=50"]
        run_a = str(tmp_path / "straight")
        assert cli.main(["train", "--out", run_a, "--set", "epochs=6"]
                        + base) == 0
        run_b = str(tmp_path / "resumed")
        assert cli.main(["train", "--out", run_b, "--set", "epochs=3"]
                        + base) == 0
        assert cli.main(["train", "--out", run_b, "--resume",
                         "--set", "epochs=6"] + base) == 0
        za = read_matrix(os.path.join(run_a, "embeddings.mat"))
        zb = read_matrix(os.path.join(run_b, "embeddings.mat"))
        assert np.array_equal(za, zb)


class TestEvalLink:
    def test_report_files_written(self, tmp_path):
        prepared = _prepare(tmp_path)
        run = _train(tmp_path, prepared)
        out = str(tmp_path / "eval")
        assert cli.main(["eval-link", "--prepared", prepared, "--run", run,
                         "--out", out, "--repetitions", "3"]) == 0
        assert os.path.exists(os.path.join(out, "link_report.tsv"))
        assert os.path.exists(os.path.join(out, "link_report.png"))

    def test_full_train_split_refused(self, tmp_path):
        prepared = _prepare(tmp_path, ratio=100)
        run = _train(tmp_path, prepared)
        code = cli.main(["eval-link", "--prepared", prepared, "--run", run,
                         "--out", str(tmp_path / "eval")])
        assert code == 2

    def test_missing_run_artifact_exits_2(self, tmp_path):
        prepared = _prepare(tmp_path)
        code = cli.main(["eval-link", "--prepared", prepared, "--run",
                         str(tmp_path / "nope"), "--out",
                         str(tmp_path / "eval")])
        assert code == 2


class TestExport:
    def test_roundtrip(self, tmp_path):
        prepared = _prepare(tmp_path)
        run = _train(tmp_path, prepared)
        prefix = str(tmp_path / "export" / "emb")
        assert cli.main(["export", "--run", run, "--out", prefix]) == 0
        ids, from_text = cli.read_text_embeddings(prefix + ".txt")
        from_mat = read_matrix(prefix + ".mat")
        assert np.array_equal(from_text, from_mat)
        assert np.array_equal(from_mat,
                              read_matrix(os.path.join(run, "embeddings.mat")))
        assert ids[0] == "0"


class TestUnseenPipeline:
    def test_posttrain_and_eval(self, tmp_path):
        prepared = _prepare(tmp_path, ratio=80, split_mode="nodes")
        run = _train(tmp_path, prepared, extra=[
            "--set", "mapper_epochs=10", "--set", "posttrain_epochs=2",
            "--set", "mapper_batch=32", "--set", "posttrain_batch=8"])
        out = str(tmp_path / "unseen")
        assert cli.main(["posttrain-unseen", "--prepared", prepared,
                         "--run", run, "--out", out]) == 0
        for name in ("embeddings.mat", "struct_combined.mat",
                     "mapper_conv.mat", "mapper_manifest.json"):
            assert os.path.exists(os.path.join(out, name)), name
        eval_out = str(tmp_path / "unseen_eval")
        assert cli.main(["eval-link", "--prepared", prepared, "--run", out,
                         "--out", eval_out, "--repetitions", "2"]) == 0

    def test_posttrain_requires_node_split(self, tmp_path):
        prepared = _prepare(tmp_path)
        run = _train(tmp_path, prepared)
        code = cli.main(["posttrain-unseen", "--prepared", prepared,
                         "--run", run, "--out", str(tmp_path / "x")])
        assert code == 2


class TestClassify:
    def test_classify_report(self, tmp_path):
        prepared = _prepare(tmp_path, labels=True)
        run = _train(tmp_path, prepared)
        out = str(tmp_path / "cls")
        assert cli.main(["eval-classify", "--prepared", prepared, "--run",
                         run, "--out", out, "--labeled-ratio", "50",
                         "--repetitions", "2"]) == 0
        assert os.path.exists(os.path.join(out, "classify_report.tsv"))
        assert os.path.exists(os.path.join(out, "classify_report.png"))

    def test_no_labels_exits_2(self, tmp_path):
        prepared = _prepare(tmp_path, labels=False)
        run = _train(tmp_path, prepared)
        code = cli.main(["eval-classify", "--prepared", prepared, "--run",
                         run, "--out", str(tmp_path / "cls")])
        assert code == 2
