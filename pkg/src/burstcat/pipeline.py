"""Pipeline stages behind the CLI: synth -> split -> features -> train -> eval -> experiment.

Layout under ``cfg.out``::

    synth/                      synthetic images, masks, manifest.csv
    splits/<scenario>/          manifest.csv with split column (balanced), split.json
    features/                   <burst>.{flow12,flow23,flow_avg,mog2}.btsr, cache.json
    <scenario>/<variant>/seed<k>/  best.btsc (+ .json sidecar), report.json, report.txt
    comparison.txt / comparison.json

Every stage directory also receives ``config.json``, the resolved configuration.
"""

from __future__ import annotations

import json
import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .assembler import BurstFeatures, ModelVariant, variant_roles
from .background import burst_foreground
from .config import ConfigError, ExperimentConfig
from .dataset import balance, binarize, class_counts, load_manifest, load_species_map, split, write_manifest
from .learner.checkpoint import load_checkpoint, save_checkpoint
from .learner.models import lstm_from_baseline, warm_start_input_layer
from .learner.training import BurstStore, make_model, model_from_checkpoint, predict, train
from .metrics import EvalReport, comparison_table, evaluate
from .optical_flow import burst_flow_images
from .synthetic import generate_synthetic
from .tensor_core import load_image, write_tensor

log = logging.getLogger(__name__)

FEATURE_NAMES = ("flow12", "flow23", "flow_avg", "mog2")


class StaleCacheError(RuntimeError):
    """An artifact on disk was produced by a different configuration."""


class MissingArtifactError(FileNotFoundError):
    """A prerequisite stage has not been run."""


def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out)


def _write_config(cfg: ExperimentConfig, directory: Path) -> None:
    cfg.save(directory / "config.json")


def _stamp(directory: Path, name: str, key: str, value: str, what: str) -> None:
    """Record ``value`` in ``directory/name``; refuse to overwrite a different value."""
    path = directory / name
    if path.exists():
        have = json.loads(path.read_text()).get(key)
        if have != value:
            raise StaleCacheError(f"{what} in {directory} was built with {key} {have}, current config gives "
                                  f"{value}; delete the directory or restore the matching config")
    directory.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({key: value}, indent=2) + "\n")


def _check_stamp(directory: Path, name: str, key: str, value: str, what: str, hint: str) -> None:
    path = directory / name
    if not path.exists():
        raise MissingArtifactError(f"{what} not found at {directory} (run `burstcat {hint}` first)")
    have = json.loads(path.read_text()).get(key)
    if have != value:
        raise StaleCacheError(f"{what} in {directory} is stale: built with {key} {have}, current config "
                              f"gives {value}; rerun `burstcat {hint}`")


# --- synth ---------------------------------------------------------------------

def manifest_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.manifest) if cfg.manifest else _out(cfg) / "synth" / "manifest.csv"


def cmd_synth(cfg: ExperimentConfig) -> Path:
    directory = _out(cfg) / "synth"
    path = generate_synthetic(cfg.synthetic_params(), directory)
    _write_config(cfg, directory)
    log.info("synthetic manifest written to %s", path)
    return path


def _load_records(cfg: ExperimentConfig):
    path = manifest_path(cfg)
    if not path.exists():
        raise MissingArtifactError(f"manifest {path} not found (run `burstcat synth` or set manifest)")
    smap = load_species_map(cfg.species_map or None)
    return binarize(load_manifest(path), smap)


# --- split -----------------------------------------------------------------------

def split_dir(cfg: ExperimentConfig, mode: str) -> Path:
    return _out(cfg) / "splits" / mode


def cmd_split(cfg: ExperimentConfig, mode: str | None = None) -> Path:
    mode = mode or cfg.split_mode
    records = balance(split(_load_records(cfg), cfg.split_spec(mode)), cfg.split_seed)
    directory = split_dir(cfg, mode)
    directory.mkdir(parents=True, exist_ok=True)
    path = write_manifest(records, directory / "manifest.csv")
    counts = {k: {"empty": v[0], "animal": v[1]} for k, v in class_counts(records).items()}
    (directory / "split.json").write_text(json.dumps({"split_hash": cfg.split_hash(mode), "counts": counts},
                                                     indent=2, sort_keys=True) + "\n")
    _write_config(cfg, directory)
    log.info("%s split: %s", mode, counts)
    return path


def load_split(cfg: ExperimentConfig, mode: str):
    directory = split_dir(cfg, mode)
    _check_stamp(directory, "split.json", "split_hash", cfg.split_hash(mode), f"{mode} split", "split")
    records = binarize(load_manifest(directory / "manifest.csv"), load_species_map(cfg.species_map or None))
    return {name: [r for r in records if r.split == name] for name in ("train", "val", "test")}


# --- features --------------------------------------------------------------------

def feature_dir(cfg: ExperimentConfig) -> Path:
    return _out(cfg) / "features"


def compute_features(frames, flow_params, mog2_params, magnitude_cap) -> BurstFeatures:
    f12, f23, avg = burst_flow_images(frames, flow_params, magnitude_cap)
    mog2 = burst_foreground(frames, mog2_params)
    return BurstFeatures(f12.astype(np.float32), f23.astype(np.float32), avg.astype(np.float32),
                         mog2.astype(np.float32))


def _feature_job(args):
    burst_id, paths, size, flow_params, mog2_params, cap, directory = args
    frames = tuple(load_image(p, size) for p in paths)
    feats = compute_features(frames, flow_params, mog2_params, cap)
    for name in FEATURE_NAMES:
        arr = feats.get(name)
        target = Path(directory) / f"{burst_id}.{name}.btsr"
        tmp = target.with_suffix(".tmp")
        write_tensor(tmp, arr)
        os.replace(tmp, target)
    return burst_id


def cmd_features(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    """Compute the 4 feature tensors of every burst in the manifest (skipping complete ones)."""
    directory = feature_dir(cfg)
    _stamp(directory, "cache.json", "feature_hash", cfg.feature_hash(), "feature cache")
    _write_config(cfg, directory)
    unique = {}
    for r in _load_records(cfg):
        unique.setdefault(r.burst_id, r)
    todo = [r for r in unique.values()
            if not all((directory / f"{r.burst_id}.{n}.btsr").exists() for n in FEATURE_NAMES)]
    args = [(r.burst_id, r.frame_paths, cfg.image_size, cfg.flow_params(), cfg.mog2_params(),
             cfg.flow_magnitude_cap, str(directory)) for r in todo]
    log.info("features: %d bursts, %d to compute with %d worker(s)", len(unique), len(todo), jobs)
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            for _ in pool.map(_feature_job, args, chunksize=16):
                pass
    else:
        for a in args:
            _feature_job(a)
    return directory


def check_features(cfg: ExperimentConfig) -> Path:
    directory = feature_dir(cfg)
    _check_stamp(directory, "cache.json", "feature_hash", cfg.feature_hash(), "feature cache", "features")
    return directory


# --- train / eval ----------------------------------------------------------------

class CachedStore(BurstStore):
    """BurstStore that keeps decoded frames and features in memory."""

    def __init__(self, size, feature_dir=None):
        super().__init__(size, feature_dir)
        self._frames = {}
        self._features = {}

    def frame(self, record, t):
        key = (str(record.frame_paths[t]), self.size)
        if key not in self._frames:
            self._frames[key] = super().frame(record, t)
        return self._frames[key]

    def features(self, record):
        if record.burst_id not in self._features:
            self._features[record.burst_id] = super().features(record)
        return self._features[record.burst_id]


def run_dir(cfg: ExperimentConfig, mode: str, variant, seed: int) -> Path:
    return _out(cfg) / mode / ModelVariant(variant).value / f"seed{seed}"


def _store(cfg, variant, store=None):
    if store is not None:
        return store
    fdir = check_features(cfg) if ModelVariant(variant).needs_features else None
    return CachedStore(cfg.image_size, fdir)


def _initial_model(cfg, variant, mode, seed):
    variant = ModelVariant(variant)
    rng = np.random.default_rng([seed, list(ModelVariant).index(variant)])
    if variant == ModelVariant.Baseline or not cfg.warm_start:
        return make_model(variant, rng)
    base_path = run_dir(cfg, mode, ModelVariant.Baseline, seed) / "best.btsc"
    if not base_path.exists():
        raise MissingArtifactError(f"warm start needs the Baseline checkpoint {base_path} "
                                   f"(train Baseline first or set warm_start=false)")
    base_ckpt = load_checkpoint(base_path)
    if base_ckpt.meta.get("config_hash") != cfg.train_hash(mode):
        raise StaleCacheError(f"Baseline checkpoint {base_path} was trained with a different config")
    base = model_from_checkpoint(base_ckpt, ModelVariant.Baseline)
    if variant == ModelVariant.LSTM:
        return lstm_from_baseline(base, rng)
    target = make_model(variant, rng)
    return warm_start_input_layer(target, base, variant_roles(variant), rng)


def cmd_train(cfg: ExperimentConfig, variant, seed: int | None = None, mode: str | None = None,
              store: BurstStore | None = None) -> Path:
    variant = ModelVariant.parse(variant) if isinstance(variant, str) else ModelVariant(variant)
    mode = mode or cfg.split_mode
    seed = cfg.seed if seed is None else seed
    splits = load_split(cfg, mode)
    model = _initial_model(cfg, variant, mode, seed)
    store = _store(cfg, variant, store)
    best = train(model, splits["train"], splits["val"], variant, cfg.train_config(seed),
                 cfg.augment_config(seed), store)
    best.meta.update({"variant": variant.value, "config_hash": cfg.train_hash(mode), "seed": seed,
                      "scenario": mode})
    directory = run_dir(cfg, mode, variant, seed)
    path = directory / "best.btsc"
    save_checkpoint(best, path)
    _write_config(cfg, directory)
    log.info("%s/%s seed %d: best val AUC %.4f at checkpoint %d -> %s", mode, variant.value, seed,
             best.val_auc, best.checkpoint_index, path)
    return path


def cmd_eval(cfg: ExperimentConfig, variant, checkpoint=None, seed: int | None = None, mode: str | None = None,
             store: BurstStore | None = None) -> EvalReport:
    variant = ModelVariant.parse(variant) if isinstance(variant, str) else ModelVariant(variant)
    mode = mode or cfg.split_mode
    seed = cfg.seed if seed is None else seed
    directory = run_dir(cfg, mode, variant, seed)
    path = Path(checkpoint) if checkpoint else directory / "best.btsc"
    if not path.exists():
        raise MissingArtifactError(f"checkpoint {path} not found (run `burstcat train` first)")
    ckpt = load_checkpoint(path)
    if ckpt.meta.get("config_hash") != cfg.train_hash(mode):
        raise StaleCacheError(f"checkpoint {path} was trained with config {ckpt.meta.get('config_hash')}, "
                              f"current config gives {cfg.train_hash(mode)}")
    if ckpt.meta.get("variant") not in (None, variant.value):
        raise ConfigError(f"checkpoint {path} holds a {ckpt.meta['variant']} model, not {variant.value}")
    test = load_split(cfg, mode)["test"]
    preds = predict(ckpt, test, variant, _store(cfg, variant, store), cfg.train_eval_batch_size)
    report = evaluate([(bid, p, y) for bid, p, y in preds], [r.burst_id for r in test], variant.value, mode)
    report.save(directory)
    _write_config(cfg, directory)
    log.info("%s/%s seed %d: test ROC AUC %.4f", mode, variant.value, seed, report.roc_auc)
    return report


# --- experiment ------------------------------------------------------------------

def experiment_variants(cfg: ExperimentConfig) -> list[ModelVariant]:
    chosen = [ModelVariant.parse(v) for v in cfg.variants]
    rest = [v for v in chosen if v != ModelVariant.Baseline]
    return [ModelVariant.Baseline] + rest


def cmd_experiment(cfg: ExperimentConfig, jobs: int = 1) -> tuple[str, dict]:
    """Run every scenario, seed and variant; write the comparison table and return it."""
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out)
    if not cfg.manifest and not manifest_path(cfg).exists():
        cmd_synth(cfg)
    variants = experiment_variants(cfg)
    if any(v.needs_features for v in variants):
        cmd_features(cfg, jobs)
    per_seed: dict[str, dict[str, dict[int, float]]] = {}
    for mode in cfg.scenarios:
        cmd_split(cfg, mode)
        stores = {}
        for seed in cfg.seeds():
            for variant in variants:
                key = variant.needs_features
                if key not in stores:
                    stores[key] = _store(cfg, variant)
                cmd_train(cfg, variant, seed, mode, stores[key])
                report = cmd_eval(cfg, variant, None, seed, mode, stores[key])
                per_seed.setdefault(variant.value, {}).setdefault(mode, {})[seed] = report.roc_auc
    means = {v: {m: statistics.fmean(s.values()) for m, s in by_mode.items()} for v, by_mode in per_seed.items()}
    table = comparison_table(means, tuple(cfg.scenarios))
    lines = [table.rstrip("\n"), "", "per-seed test ROC AUC:"]
    for v, by_mode in per_seed.items():
        for m, seeds in by_mode.items():
            lines.append(f"  {v:<20} {m:<11} " + "  ".join(f"seed{s}={a:.4f}" for s, a in sorted(seeds.items())))
    text = "\n".join(lines) + "\n"
    (out / "comparison.txt").write_text(text)
    (out / "comparison.json").write_text(json.dumps({"mean": means, "per_seed": per_seed,
                                                     "config_hash": cfg.config_hash()},
                                                    indent=2, sort_keys=True) + "\n")
    return text, {"mean": means, "per_seed": per_seed}
