"""Flat JSON experiment configuration with ``key=value`` overrides and stable hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .assembler import ModelVariant
from .augmentation import AugmentConfig
from .background import Mog2Params
from .dataset import SplitSpec
from .learner.training import TrainConfig
from .optical_flow import FlowParams
from .synthetic import SyntheticParams


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Every setting of a run.  Field names are the JSON keys (see README for the schema)."""

    # data
    manifest: str = ""  # empty: use the synthetic manifest under out/synth
    species_map: str = ""  # empty: bundled map
    image_size: int = 64
    out: str = "runs/default"
    seed: int = 0
    n_seeds: int = 1
    # split
    split_mode: str = "uniform"
    scenarios: list = field(default_factory=lambda: ["uniform", "site_based"])
    split_fractions: list = field(default_factory=lambda: [0.7, 0.15, 0.15])
    split_seed: int = 0
    # variants; the experiment always trains Baseline first
    variants: list = field(default_factory=lambda: [v.value for v in ModelVariant])
    warm_start: bool = True
    # optical flow
    flow_pyramid_scale: float = 0.5
    flow_levels: int = 3
    flow_window: int = 15
    flow_iterations: int = 3
    flow_poly_n: int = 5
    flow_poly_sigma: float = 1.2
    flow_magnitude_cap: float = 8.0
    # background model
    mog2_max_components: int = 5
    mog2_alpha: float = 0.3
    mog2_var_threshold: float = 16.0
    mog2_background_ratio: float = 0.9
    mog2_var_init: float = 0.0225
    mog2_var_min: float = 0.0004
    mog2_var_max: float = 0.25
    mog2_complexity_prune: float = 0.05
    # augmentation
    augment: bool = True
    aug_flip_prob: float = 0.5
    aug_color_prob: float = 0.5
    aug_zoom_prob: float = 0.5
    aug_hue_delta: list = field(default_factory=lambda: [-0.08, 0.08])
    aug_saturation: list = field(default_factory=lambda: [0.6, 1.6])
    aug_brightness: list = field(default_factory=lambda: [-0.05, 0.05])
    aug_contrast: list = field(default_factory=lambda: [0.7, 1.3])
    aug_zoom_fraction: list = field(default_factory=lambda: [0.02, 0.10])
    # training
    train_learning_rate: float = 1e-4
    train_beta1: float = 0.9
    train_beta2: float = 0.999
    train_eps: float = 1e-8
    train_epochs: int = 10
    train_batch_size: int = 32
    train_patience: int = 3
    train_eval_batch_size: int = 128
    # synthetic data
    synth_bursts_per_class: int = 100
    synth_n_sites: int = 20
    synth_animal_contrast: float = 0.8
    synth_speed: list = field(default_factory=lambda: [2.0, 5.0])
    synth_radius: list = field(default_factory=lambda: [5.0, 8.0])
    synth_jitter_prob: float = 0.5
    synth_jitter_amplitude: float = 1.5
    synth_night_prob: float = 0.3
    synth_noise: float = 0.02
    synth_seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- validation and (de)serialization --------------------------------------

    def validate(self) -> "ExperimentConfig":
        for f in fields(self):
            value = getattr(self, f.name)
            kind = type(f.default) if f.default is not dataclasses.MISSING else list
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                setattr(self, f.name, float(value))
            elif kind is int and (not isinstance(value, int) or isinstance(value, bool)):
                raise ConfigError(f"{f.name} must be an integer, got {value!r}")
            elif kind is bool and not isinstance(value, bool):
                raise ConfigError(f"{f.name} must be true or false, got {value!r}")
            elif kind is str and not isinstance(value, str):
                raise ConfigError(f"{f.name} must be a string, got {value!r}")
            elif kind is list and not isinstance(value, list):
                raise ConfigError(f"{f.name} must be a list, got {value!r}")
            elif kind is float and not isinstance(value, float):
                raise ConfigError(f"{f.name} must be a number, got {value!r}")
        for name in self.variants:
            try:
                ModelVariant.parse(name)
            except ValueError as err:
                raise ConfigError(str(err)) from None
        for s in self.scenarios + [self.split_mode]:
            if s not in ("uniform", "site_based"):
                raise ConfigError(f"unknown split scenario {s!r}")
        if self.image_size < 16:
            raise ConfigError("image_size must be at least 16")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        try:
            self.flow_params(), self.mog2_params(), self.augment_config(0), self.train_config(0)
            self.split_spec(self.split_mode), self.synthetic_params()
        except ConfigError:
            raise
        except (ValueError, TypeError) as err:
            raise ConfigError(str(err)) from None
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    def with_overrides(self, assignments) -> "ExperimentConfig":
        """Apply ``key=value`` strings; values are parsed as JSON, falling back to plain strings."""
        data = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value, got {item!r}")
            key, raw = item.split("=", 1)
            key = key.strip()
            if key not in data:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            data[key] = value
        return type(self).from_dict(data)

    # -- derived objects --------------------------------------------------------

    def seeds(self) -> list[int]:
        return [self.seed + k for k in range(self.n_seeds)]

    def flow_params(self) -> FlowParams:
        return FlowParams(self.flow_pyramid_scale, self.flow_levels, self.flow_window, self.flow_iterations,
                          self.flow_poly_n, self.flow_poly_sigma)

    def mog2_params(self) -> Mog2Params:
        return Mog2Params(self.mog2_max_components, self.mog2_alpha, self.mog2_var_threshold,
                          self.mog2_background_ratio, self.mog2_var_init, self.mog2_var_min, self.mog2_var_max,
                          self.mog2_complexity_prune)

    def augment_config(self, seed: int) -> AugmentConfig | None:
        if not self.augment:
            return None
        return AugmentConfig(self.aug_flip_prob, self.aug_color_prob, self.aug_zoom_prob,
                             tuple(self.aug_hue_delta), tuple(self.aug_saturation), tuple(self.aug_brightness),
                             tuple(self.aug_contrast), tuple(self.aug_zoom_fraction), seed)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.train_learning_rate, self.train_beta1, self.train_beta2, self.train_eps,
                           self.train_epochs, self.train_batch_size, self.train_patience, seed,
                           self.train_eval_batch_size)

    def split_spec(self, mode: str) -> SplitSpec:
        return SplitSpec(mode, tuple(self.split_fractions), self.split_seed)

    def synthetic_params(self) -> SyntheticParams:
        return SyntheticParams(size=self.image_size, bursts_per_class=self.synth_bursts_per_class,
                               n_sites=self.synth_n_sites, animal_contrast=self.synth_animal_contrast,
                               speed=tuple(self.synth_speed), radius=tuple(self.synth_radius),
                               jitter_prob=self.synth_jitter_prob, jitter_amplitude=self.synth_jitter_amplitude,
                               night_prob=self.synth_night_prob, noise=self.synth_noise, seed=self.synth_seed)

    # -- hashing ------------------------------------------------------------------

    def _hash(self, prefixes, extra=()) -> str:
        data = {k: v for k, v in self.to_dict().items() if k.startswith(prefixes) or k in extra}
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def config_hash(self) -> str:
        """Hash of the whole configuration except the output location."""
        return self._hash(tuple(f.name for f in fields(self) if f.name != "out"))

    # synthetic settings are part of every artifact hash: they define the data when no manifest is given

    def feature_hash(self) -> str:
        return self._hash(("flow_", "mog2_", "synth_"), extra=("image_size", "manifest"))

    def split_hash(self, mode: str) -> str:
        return self._hash(("split_fractions", "split_seed", "synth_"), extra=("manifest", "species_map")) + f"-{mode}"

    def train_hash(self, mode: str) -> str:
        return self._hash(("train_", "aug", "warm_start", "flow_", "mog2_", "split_fractions", "split_seed", "synth_"),
                          extra=("manifest", "species_map", "image_size")) + f"-{mode}"
