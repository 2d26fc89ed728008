import pytest

from burstcat import pipeline
from burstcat.config import ExperimentConfig

TINY = dict(image_size=16, synth_bursts_per_class=16, synth_n_sites=6, synth_radius=[2.0, 3.0],
            synth_speed=[1.0, 2.0], split_fractions=[0.5, 0.25, 0.25], train_epochs=2, train_batch_size=8,
            train_learning_rate=1e-3, variants=["Baseline", "Hybrid_13", "LSTM"])


def tiny_config(out, **overrides) -> ExperimentConfig:
    return ExperimentConfig.from_dict({**TINY, "out": str(out), **overrides})


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A tiny synthetic dataset with features and a uniform split, shared read-only by tests."""
    cfg = tiny_config(tmp_path_factory.mktemp("tiny"))
    pipeline.cmd_synth(cfg)
    pipeline.cmd_features(cfg)
    pipeline.cmd_split(cfg, "uniform")
    return cfg
