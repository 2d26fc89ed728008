"""Mini-batch training with quarter-epoch validation, early stopping and prediction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..assembler import BurstFeatures, ModelVariant, build_stack, channel_count, lstm_stack
from ..augmentation import AugmentConfig, augment_stack
from ..metrics import roc_auc
from ..tensor_core import IMAGE_ROLES, ChannelStack, load_image, read_array
from .checkpoint import Checkpoint
from .models import CnnModel, LstmModel
from .optim import Adam

log = logging.getLogger(__name__)


class TrainConfigError(ValueError):
    pass


class MissingFeaturesError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    patience: int = 3
    seed: int = 0
    eval_batch_size: int = 128

    def __post_init__(self):
        if self.patience < 1:
            raise TrainConfigError("patience must be >= 1")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise TrainConfigError("batch sizes must be >= 1")
        if self.epochs < 1:
            raise TrainConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise TrainConfigError("learning_rate must be positive")


def checkpoint_batches(n_batches: int) -> list[int]:
    """1-based batch indices after which a quarter-epoch checkpoint is taken."""
    if n_batches < 1:
        raise TrainConfigError("an epoch needs at least one batch")
    return sorted({math.ceil(n_batches * k / 4) for k in range(1, 5)})


@dataclass
class EarlyStopping:
    """Stop after ``patience`` consecutive checkpoints without a strict improvement."""

    patience: int = 3
    best_auc: float = -math.inf
    best_index: int = 0
    history: list = field(default_factory=list)
    stale: int = 0

    def update(self, auc: float) -> bool:
        """Record the AUC of the next checkpoint; return True if it is a new best."""
        self.history.append(auc)
        if auc > self.best_auc:
            self.best_auc, self.best_index, self.stale = auc, len(self.history), 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


# --- data access ---------------------------------------------------------------

class BurstStore:
    """Loads frames and cached features of burst records, optionally logging file access."""

    def __init__(self, size: int, feature_dir=None, access_log: list | None = None):
        self.size = size
        self.feature_dir = None if feature_dir is None else Path(feature_dir)
        self.access_log = access_log

    def _touch(self, path):
        if self.access_log is not None:
            self.access_log.append(Path(path))

    def frame(self, record, t: int) -> np.ndarray:
        path = record.frame_paths[t]
        self._touch(path)
        return load_image(path, self.size)

    def frames(self, record) -> tuple:
        return tuple(self.frame(record, t) for t in range(3))

    def feature_paths(self, burst_id: str) -> dict[str, Path]:
        if self.feature_dir is None:
            raise MissingFeaturesError("no feature cache configured")
        return {name: self.feature_dir / f"{burst_id}.{name}.btsr" for name in ("flow12", "flow23", "flow_avg", "mog2")}

    def features(self, record) -> BurstFeatures:
        arrays = {}
        for name, path in self.feature_paths(record.burst_id).items():
            if not path.exists():
                raise MissingFeaturesError(f"missing {name} features for burst {record.burst_id}: {path}")
            self._touch(path)
            arr = read_array(path)
            arrays[name] = arr[:, :, 0] if name == "mog2" and arr.ndim == 3 else arr
        return BurstFeatures(**arrays)


def sample_index(records, variant, mode: str) -> list[tuple[int, int]]:
    """(record index, frame index) pairs; Baseline training uses every frame as a sample."""
    variant = ModelVariant(variant)
    if variant == ModelVariant.Baseline and mode == "train":
        return [(i, t) for i in range(len(records)) for t in range(3)]
    return [(i, 0) for i in range(len(records))]


def load_sample(store: BurstStore, record, variant, frame_index: int, mode: str) -> ChannelStack:
    variant = ModelVariant(variant)
    if variant == ModelVariant.Baseline:
        if mode == "eval":
            return build_stack((store.frame(record, 0), None, None), None, variant, "eval")
        # one independent sample per frame; only that frame's file is read
        return ChannelStack(store.frame(record, frame_index), (IMAGE_ROLES[frame_index],) * 3)
    frames = store.frames(record)
    if variant == ModelVariant.LSTM:
        return lstm_stack(build_stack(frames, None, variant))
    return build_stack(frames, store.features(record), variant)


def make_model(variant, rng, dtype=np.float32):
    variant = ModelVariant(variant)
    if variant == ModelVariant.LSTM:
        return LstmModel(rng, dtype)
    return CnnModel(channel_count(variant), rng, dtype)


def _labels(records):
    labels = np.array([r.binary_label for r in records])
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise TrainConfigError("records need binary labels")
    return labels


def predict_records(model, records, variant, store: BurstStore, batch_size: int = 128) -> np.ndarray:
    """Probabilities for ``records`` (no augmentation; Baseline reads frame 1 only)."""
    out = np.empty(len(records), dtype=np.float64)
    for lo in range(0, len(records), batch_size):
        batch = [load_sample(store, r, variant, 0, "eval").data for r in records[lo : lo + batch_size]]
        out[lo : lo + len(batch)] = model.forward(np.stack(batch))
    return out


def train(model, train_records, val_records, variant, cfg: TrainConfig, augment: AugmentConfig | None,
          store: BurstStore, on_checkpoint=None) -> Checkpoint:
    """Train ``model`` in place and return the best checkpoint by validation ROC AUC."""
    variant = ModelVariant(variant)
    if not train_records:
        raise TrainConfigError("training split is empty")
    if not val_records:
        raise TrainConfigError("validation split is empty")
    train_labels = _labels(train_records)
    val_labels = _labels(val_records)
    samples = sample_index(train_records, variant, "train")
    n_batches = math.ceil(len(samples) / cfg.batch_size)
    marks = set(checkpoint_batches(n_batches))

    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = EarlyStopping(cfg.patience)
    best = None
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(samples))
        for b in range(n_batches):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            xs, ys = [], []
            for j in idx:
                ri, t = samples[j]
                stack = load_sample(store, train_records[ri], variant, t, "train")
                if augment is not None:
                    stack = augment_stack(stack, augment, (epoch, int(j)))
                xs.append(stack.data)
                ys.append(train_labels[ri])
            loss, grads = model.loss_and_grads(np.stack(xs), np.array(ys))
            opt.step(model.params, grads)
            step += 1
            if b + 1 not in marks:
                continue
            probs = predict_records(model, val_records, variant, store, cfg.eval_batch_size)
            auc = roc_auc(probs, val_labels)
            improved = stopper.update(auc)
            log.info("epoch %d batch %d/%d step %d loss %.4f val_auc %.4f%s", epoch, b + 1, n_batches, step,
                     loss, auc, " *" if improved else "")
            if improved:
                best = Checkpoint(step, {k: v.copy() for k, v in model.params.items()}, auc, epoch,
                                  len(stopper.history), {"variant": variant.value})
            if on_checkpoint is not None:
                on_checkpoint(len(stopper.history), auc, improved)
            if stopper.should_stop:
                log.info("early stop at checkpoint %d; best %d (%.4f)", len(stopper.history),
                         stopper.best_index, stopper.best_auc)
                return best
    return best


def model_from_checkpoint(ckpt: Checkpoint, variant):
    model = make_model(variant, np.random.default_rng(0))
    if set(ckpt.params) != set(model.params):
        raise TrainConfigError(f"checkpoint parameters {sorted(ckpt.params)} do not match a {ModelVariant(variant).value} model")
    for name, value in ckpt.params.items():
        if np.shape(value) != model.params[name].shape:
            raise TrainConfigError(f"checkpoint {name} has shape {np.shape(value)}, "
                                   f"{ModelVariant(variant).value} expects {model.params[name].shape}")
        model.params[name] = np.asarray(value, dtype=np.float32).copy()
    return model


def predict(ckpt: Checkpoint, records, variant, store: BurstStore, batch_size: int = 128):
    """``[(burst_id, probability, label), ...]`` for ``records`` using the checkpoint's weights."""
    model = model_from_checkpoint(ckpt, variant)
    probs = predict_records(model, records, variant, store, batch_size)
    return [(r.burst_id, float(p), r.binary_label) for r, p in zip(records, probs)]
