"""Experiment configuration and its YAML/JSON file form.

Example file::

    train:
      lr: 1.0e-4
      lr_drop_epoch: 60
      lr_drop_factor: 10
      batch_size: 10
      epochs: 100
      seed: 0
      dtype: float32
    model:
      scale: full            # full | tiny
      decoder: group         # group | unet
      input_size: [352, 352]
      bts: {direction: bidirectional, residual: false, attention_order: sa_then_ca}
      backbone: {}           # optional BackboneConfig overrides
    loss: {lambda_c: 1.0, lambda_r: 0.5, lambda_d: 0.5}
    data:
      root: NJU2K_NLPR_train # or: synthetic: {n: 8, seed: 0, size: [64, 64]}
      split: train
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

import yaml

from ..bts import BtsConfig
from ..core_ops import ConfigurationError
from ..data import DatasetSpec
from ..encoder import BackboneConfig, Scale
from ..loss import LossWeights
from ..model import DECODERS, BTSNet

DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    lr_drop_epoch: int = 60
    lr_drop_factor: float = 10.0
    batch_size: int = 10
    epochs: int = 100
    seed: int = 0
    scale: Scale = Scale.FULL
    bts: BtsConfig = BtsConfig()
    decoder: str = "group"
    lambdas: LossWeights = LossWeights()
    input_size: Optional[Tuple[int, int]] = None
    backbone: dict = field(default_factory=dict)
    dtype: str = "float32"
    augment: bool = True
    checkpoint_every: int = 10

    def __post_init__(self):
        object.__setattr__(self, "scale", Scale(self.scale))
        if isinstance(self.bts, dict):
            object.__setattr__(self, "bts", BtsConfig.from_dict(self.bts))
        if isinstance(self.lambdas, dict):
            object.__setattr__(self, "lambdas", LossWeights(**self.lambdas))
        if self.input_size is not None:
            object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lr_drop_factor <= 0:
            raise ConfigurationError("lr_drop_factor must be positive")
        if self.decoder not in DECODERS:
            raise ConfigurationError(f"decoder must be one of {DECODERS}")
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"dtype must be one of {DTYPES}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``: one drop at ``lr_drop_epoch``."""
        if self.lr_drop_epoch is not None and epoch >= self.lr_drop_epoch:
            return self.lr / self.lr_drop_factor
        return self.lr

    def backbone_config(self) -> BackboneConfig:
        d = {"scale": self.scale.value, **self.backbone}
        if self.input_size is not None:
            d["input_size"] = list(self.input_size)
        return BackboneConfig.from_dict(d)

    def build_model(self) -> BTSNet:
        return BTSNet(self.backbone_config(), self.bts, self.decoder)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "to_dict"):
                v = v.to_dict()
            elif isinstance(v, Scale):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(**dict(d or {}))

    def replace(self, **changes):
        return replace(self, **changes)


# keys that change the network's structure; a checkpoint must agree on them
MODEL_KEYS = ("scale", "bts", "decoder", "backbone", "input_size")


def model_key_diff(a: TrainConfig, b: TrainConfig):
    da, db = a.to_dict(), b.to_dict()
    return [k for k in MODEL_KEYS if da.get(k) != db.get(k)]


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 8
    seed: int = 0
    size: Tuple[int, int] = (64, 64)
    depth_noise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(int(v) for v in self.size))


def load_experiment(path):
    """Parse an experiment file into ``(TrainConfig, data_spec)``.

    ``data_spec`` is a :class:`DatasetSpec`, a :class:`SyntheticSpec`, or
    ``None`` when the file has no ``data`` section.
    """
    raw = yaml.safe_load(Path(path).read_text()) or {}
    return parse_experiment(raw)


def parse_experiment(raw: dict):
    unknown = set(raw) - {"train", "model", "loss", "data"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    t = dict(raw.get("train") or {})
    m = dict(raw.get("model") or {})
    valid = {f.name for f in fields(TrainConfig)}
    merged = {**t, **m}
    if raw.get("loss"):
        merged["lambdas"] = raw["loss"]
    bad = set(merged) - valid
    if bad:
        raise ConfigurationError(f"unknown config keys: {sorted(bad)}")
    cfg = TrainConfig(**merged)
    data = raw.get("data")
    spec = None
    if data:
        if "synthetic" in data:
            spec = SyntheticSpec(**(data["synthetic"] or {}))
        else:
            spec = DatasetSpec(**data)
    return cfg, spec
