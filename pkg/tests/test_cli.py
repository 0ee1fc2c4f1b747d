import json
import os
import subprocess
import sys

import pytest
import yaml

from slicehin.cli import DEFAULTS, config_hash, load_config, main

SMALL = {"graph": "@toy", "dim": 8, "num_layers": 2, "num_heads": 2, "walks_per_node": 4,
         "walk_length": 12, "window": 3, "pretrain_epochs": 2, "finetune_epochs": 2,
         "n_eval_contexts": 2, "explain_contexts": 10, "explain_relation": "coauthor"}

ARTIFACTS = ["graph/edges.tsv", "graph/node_ids.tsv", "graph/relation_ids.tsv", "graph/type_ids.tsv",
             "graph/node_types.tsv", "splits/train.tsv", "splits/dev.tsv", "splits/test.tsv",
             "features/embeddings.tsv", "contexts/pretrain.jsonl", "checkpoints/pretrained.json",
             "checkpoints/finetuned.json", "metrics/pretrain_curve.csv", "metrics/finetune_curve.csv",
             "metrics/metrics.csv", "metrics/predictions.csv", "metrics/score_hist.csv",
             "metrics/score_hist_global.csv", "explain/associations.jsonl", "explain/metapaths.csv"]


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return str(path)


def test_full_pipeline_on_toy_graph(config, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "-c", config, "--out", str(out)]) == 0
    for rel in ARTIFACTS:
        assert (out / rel).is_file(), rel
    for stage in ("ingest", "features", "pretrain", "finetune", "evaluate", "explain"):
        manifest = json.loads((out / "manifests" / f"{stage}.json").read_text())
        assert manifest["config"] == load_config(config, [f"out_dir={out}"])
        assert manifest["config_hash"] == config_hash(manifest["config"])
        assert set(manifest["versions"]) >= {"slicehin", "numpy", "python"}
    header = (out / "metrics" / "finetune_curve.csv").read_text().splitlines()[0]
    assert header == "epoch,split,metric,value"
    metrics = (out / "metrics" / "metrics.csv").read_text()
    assert "test,auroc," in metrics and "test_global_embedding,auroc," in metrics


def test_same_seed_same_bytes(config, tmp_path):
    for name in ("a", "b"):
        assert main(["run", "-c", config, "--out", str(tmp_path / name)]) == 0
    for rel in ARTIFACTS:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_stage_rerun_is_idempotent(config, tmp_path):
    out = str(tmp_path / "run")
    assert main(["run", "-c", config, "--out", out]) == 0
    before = open(os.path.join(out, "metrics", "metrics.csv"), "rb").read()
    assert main(["evaluate", "-c", config, "--out", out]) == 0
    assert open(os.path.join(out, "metrics", "metrics.csv"), "rb").read() == before


def test_evaluate_without_checkpoint(config, tmp_path, capsys):
    code = main(["evaluate", "-c", config, "--out", str(tmp_path / "empty")])
    assert code == 3
    assert "cmd_finetune" in capsys.readouterr().err


def test_pretrain_requires_features(config, tmp_path, capsys):
    assert main(["pretrain", "-c", config, "--out", str(tmp_path / "empty")]) == 3
    assert "cmd_features" in capsys.readouterr().err


def test_invalid_config_lists_fields(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("dim: 10\nnum_heads: 4\nbatchsize: 3\nseed: abc\n")
    assert main(["ingest", "-c", str(path)]) == 2
    err = capsys.readouterr().err
    assert "batchsize" in err and "seed" in err
    path.write_text("graph: '@toy'\ndim: 10\nnum_heads: 4\n")
    assert main(["ingest", "-c", str(path)]) == 2
    assert "divisible" in capsys.readouterr().err


def test_missing_input_is_config_error(tmp_path, capsys):
    assert main(["ingest", "--set", f"graph={tmp_path / 'nope.tsv'}"]) == 2
    assert "graph" in capsys.readouterr().err


def test_overrides_beat_config(config):
    cfg = load_config(config, ["dim=16", "strategy=shortest_path"])
    assert cfg["dim"] == 16 and cfg["strategy"] == "shortest_path" and cfg["num_layers"] == 2
    assert set(cfg) == set(DEFAULTS)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit(config, tmp_path):
    out = str(tmp_path / "run")
    assert main(["ingest", "-c", config, "--out", out]) == 0
    assert main(["features", "-c", config, "--out", out, "--set", "sg_lr=1e12",
                 "--set", "sg_epochs=30"]) == 4


def test_show_config(capsys):
    assert main(["show-config", "--set", "seed=3"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["seed"] == 3


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "slicehin.cli", "show-config"],
                         capture_output=True, text=True, check=True)
    assert "dim: 128" in out.stdout
