import json

import numpy as np
import pytest

from burstcat import pipeline
from burstcat.cli import main
from burstcat.config import ExperimentConfig
from burstcat.learner.checkpoint import load_checkpoint

from .conftest import tiny_config


def test_features_writes_four_files_per_burst(tiny_run):
    fdir = pipeline.feature_dir(tiny_run)
    n = 2 * tiny_run.synth_bursts_per_class
    assert len(list(fdir.glob("*.btsr"))) == 4 * n
    assert (fdir / "config.json").exists() and (fdir / "cache.json").exists()


def test_features_rerun_is_idempotent(tiny_run):
    fdir = pipeline.feature_dir(tiny_run)
    before = {p.name: p.read_bytes() for p in fdir.glob("*.btsr")}
    pipeline.cmd_features(tiny_run)
    assert {p.name: p.read_bytes() for p in fdir.glob("*.btsr")} == before


def test_features_parallel_matches_serial(tiny_run, tmp_path):
    cfg = ExperimentConfig.from_dict({**tiny_run.to_dict(), "out": str(tmp_path),
                                      "manifest": str(pipeline.manifest_path(tiny_run))})
    pipeline.cmd_features(cfg, jobs=2)
    ref = pipeline.feature_dir(tiny_run)
    for p in ref.glob("*.btsr"):
        assert (tmp_path / "features" / p.name).read_bytes() == p.read_bytes()


def test_stale_feature_cache_is_an_error(tiny_run):
    changed = tiny_run.with_overrides(["flow_iterations=4"])
    with pytest.raises(pipeline.StaleCacheError):
        pipeline.cmd_features(changed)
    with pytest.raises(pipeline.StaleCacheError):
        pipeline.check_features(changed)


def test_split_stage_outputs(tiny_run):
    d = pipeline.split_dir(tiny_run, "uniform")
    assert (d / "config.json").exists()
    info = json.loads((d / "split.json").read_text())
    for counts in info["counts"].values():
        assert counts["empty"] == counts["animal"]
    with pytest.raises(pipeline.StaleCacheError):
        pipeline.load_split(tiny_run.with_overrides(["split_seed=5"]), "uniform")
    with pytest.raises(pipeline.MissingArtifactError):
        pipeline.load_split(tiny_run, "site_based")


def test_train_eval_and_staleness(tiny_run, tmp_path):
    cfg = ExperimentConfig.from_dict({**tiny_run.to_dict(), "train_epochs": 1})
    with pytest.raises(pipeline.MissingArtifactError):
        pipeline.cmd_eval(cfg.with_overrides(["train_batch_size=4"]), "Baseline", mode="uniform")
    path = pipeline.cmd_train(cfg, "Baseline", mode="uniform")
    ckpt = load_checkpoint(path)
    assert ckpt.meta["config_hash"] == cfg.train_hash("uniform") and ckpt.meta["variant"] == "Baseline"
    report = pipeline.cmd_eval(cfg, "Baseline", mode="uniform")
    assert 0.0 <= report.roc_auc <= 1.0
    assert (path.parent / "report.json").exists() and (path.parent / "report.txt").exists()
    assert ExperimentConfig.load(path.parent / "config.json") == cfg
    with pytest.raises(pipeline.StaleCacheError):
        pipeline.cmd_eval(cfg.with_overrides(["train_learning_rate=0.5"]), "Baseline", mode="uniform")
    # warm start from the trained baseline
    hybrid = pipeline.cmd_train(cfg, "Hybrid_13", mode="uniform")
    assert load_checkpoint(hybrid).params["conv1_w"].shape[1] == 13


def test_warm_start_needs_baseline(tiny_run, tmp_path):
    cfg = ExperimentConfig.from_dict({**tiny_run.to_dict(), "out": str(tmp_path),
                                      "manifest": str(pipeline.manifest_path(tiny_run))})
    pipeline.cmd_split(cfg, "uniform")
    with pytest.raises(pipeline.MissingArtifactError, match="Baseline"):
        pipeline.cmd_train(cfg, "Hybrid_13", mode="uniform")


def test_cli_exit_codes(tiny_run, tmp_path, capsys):
    common = ["--out", tiny_run.out]
    sets = sum((["--set", f"{k}={json.dumps(v)}"] for k, v in tiny_run.to_dict().items() if k != "out"), [])
    assert main(["train", "--variant", "Nope"] + common + sets) == 2
    assert main(["split", "--set", "bogus=1"] + common) == 2
    assert main(["eval", "--variant", "Mog2_4"] + common + sets) == 3
    assert main(["split", "--out", str(tmp_path / "empty")]) == 3
    assert main(["features"] + common + sets + ["--set", "flow_levels=2"]) == 3
    assert main(["split", "--scenario", "uniform"] + common + sets) == 0
    (tmp_path / "bad.json").write_text("{")
    assert main(["split", "--config", str(tmp_path / "bad.json")]) == 2
    capsys.readouterr()


def test_cli_numeric_error_exit_code(tiny_run, tmp_path, monkeypatch):
    from burstcat.learner.models import NumericError

    def boom(*a, **k):
        raise NumericError("non-finite logits")

    monkeypatch.setattr(pipeline, "cmd_split", boom)
    assert main(["split", "--out", str(tmp_path)]) == 4


def test_experiment_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = tiny_config(tmp_path / name, train_epochs=1, variants=["Baseline", "Mog2_4", "LSTM"])
        text, results = pipeline.cmd_experiment(cfg)
        outs.append((cfg, text, results))
    (ca, ta, ra), (cb, tb, rb) = outs
    assert ta == tb and ra == rb
    for v in ("Baseline", "Mog2_4", "LSTM"):
        for mode in ("uniform", "site_based"):
            a = pipeline.run_dir(ca, mode, v, 0)
            b = pipeline.run_dir(cb, mode, v, 0)
            for name in ("best.btsc", "best.json", "report.json", "report.txt"):
                assert (a / name).read_bytes() == (b / name).read_bytes()
    assert set(ra["mean"]) == {"Baseline", "Mog2_4", "LSTM"}
    assert all(set(m) == {"uniform", "site_based"} for m in ra["mean"].values())
    assert (tmp_path / "a" / "comparison.txt").read_text() == ta
    for d in [tmp_path / "a", tmp_path / "a" / "features", tmp_path / "a" / "synth",
              pipeline.split_dir(ca, "site_based")]:
        assert ExperimentConfig.load(d / "config.json") == ca
