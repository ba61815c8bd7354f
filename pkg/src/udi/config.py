"""Experiment configuration: a strict JSON schema and its conversion to TrainOptions.

Every section rejects unknown keys.  A config is validated in full before
any data is generated or any parameter is allocated.

Example::

    {
      "dataset": {"generator": "redundant", "params": {"n": 3000}},
      "strategy": "udi",
      "controller": {"mode": "fixed(0,0)"},
      "epochs": {"m1": 40, "m2": 30},
      "seed": 3,
      "out_dir": "runs/redundant-s3"
    }
"""

import json
import re
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .pipeline import TrainOptions
from .synthdata import GENERATORS, generate, load_csv

_FIXED = re.compile(r"^\s*fixed\s*\(\s*([^,()]+?)\s*,\s*([^,()]+?)\s*\)\s*$")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CsvSource(_Strict):
    modalities: Dict[str, str]
    labels: str
    split: Optional[str] = None
    standardize: bool = True
    n_classes: Optional[int] = Field(default=None, ge=2)

    @field_validator("modalities")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one modality file is required")
        return v


class DatasetSection(_Strict):
    generator: Optional[str] = None
    params: Dict[str, Union[int, float, List[float]]] = Field(default_factory=dict)
    csv: Optional[CsvSource] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.generator is None) == (self.csv is None):
            raise ValueError("give exactly one of 'generator' or 'csv'")
        if self.generator is not None and self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; choose from {sorted(GENERATORS)}")
        if "seed" in self.params:
            raise ValueError("put the seed at the top level, not in dataset.params")
        return self


class ModelSection(_Strict):
    encoder_hidden: List[int] = Field(default_factory=lambda: [64])
    feature_dim: int = Field(default=32, ge=1)
    mi_hidden: List[int] = Field(default_factory=lambda: [64])
    concat_epochs: int = Field(default=20, ge=0)

    @field_validator("encoder_hidden", "mi_hidden")
    @classmethod
    def _positive(cls, v):
        if any(h < 1 for h in v):
            raise ValueError("hidden widths must be positive")
        return v


class OptimizerSection(_Strict):
    lr: float = Field(default=0.01, gt=0)
    mi_lr: float = Field(default=0.01, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=64, ge=1)
    clip_norm: Optional[float] = Field(default=5.0, gt=0)
    mi_clip_norm: Optional[float] = Field(default=10.0, gt=0)


class ControllerSection(_Strict):
    mode: str = "dynamic"
    epsilon: float = Field(default=1e-8, gt=0)
    task_loss: Literal["fused", "unimodal"] = "fused"
    js_normalize: bool = True

    @field_validator("mode")
    @classmethod
    def _mode(cls, v):
        parse_mode(v)
        return v


class ExperimentConfig(_Strict):
    dataset: DatasetSection
    model: ModelSection = Field(default_factory=ModelSection)
    epochs: Union[int, Dict[str, int]] = 40
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    strategy: Literal["udi", "joint_sum", "decoupled"] = "udi"
    controller: ControllerSection = Field(default_factory=ControllerSection)
    anchor: str = "auto"
    fusion: Literal["sum", "mean_probs", "concat"] = "sum"
    tie_threshold: float = Field(default=0.005, ge=0)
    patience: int = Field(default=10, ge=1)
    min_delta: float = Field(default=1e-4, ge=0)
    seed: int = Field(default=0, ge=0)
    out_dir: str = "runs/default"

    @field_validator("epochs")
    @classmethod
    def _epochs(cls, v):
        vals = [v] if isinstance(v, int) else list(v.values())
        if any(e < 0 for e in vals):
            raise ValueError("epoch counts must be nonnegative")
        return v


def parse_mode(text):
    """``"dynamic"`` -> ("dynamic", None); ``"fixed(a,b)"`` -> ("fixed", (a, b))."""
    if text.strip() == "dynamic":
        return "dynamic", None
    m = _FIXED.match(text)
    if not m:
        raise ValueError(f"controller mode must be 'dynamic' or 'fixed(a_con,a_com)', got {text!r}")
    try:
        a, b = float(m.group(1)), float(m.group(2))
    except ValueError:
        raise ValueError(f"fixed weights must be numbers, got {text!r}") from None
    if a < 0 or b < 0:
        raise ValueError(f"fixed weights must be nonnegative, got {text!r}")
    return "fixed", (a, b)


def _errors_to_text(exc):
    parts = []
    for e in exc.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{where}: {e['msg']}")
    return "; ".join(parts)


def from_dict(doc):
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_errors_to_text(exc)}") from None


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return from_dict(doc)


def dump(cfg):
    """Canonical JSON text of the fully resolved config (defaults filled in)."""
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def to_options(cfg):
    mode, alphas = parse_mode(cfg.controller.mode)
    epochs = cfg.epochs if isinstance(cfg.epochs, dict) else {}
    default_epochs = cfg.epochs if isinstance(cfg.epochs, int) else 40
    o = cfg.optimizer
    return TrainOptions(
        lr=o.lr,
        mi_lr=o.mi_lr,
        momentum=o.momentum,
        weight_decay=o.weight_decay,
        batch_size=o.batch_size,
        epochs=dict(epochs),
        default_epochs=default_epochs,
        patience=cfg.patience,
        min_delta=cfg.min_delta,
        encoder_hidden=tuple(cfg.model.encoder_hidden),
        feature_dim=cfg.model.feature_dim,
        mi_hidden=tuple(cfg.model.mi_hidden),
        clip_norm=o.clip_norm,
        mi_clip_norm=o.mi_clip_norm,
        controller_mode=mode,
        fixed_alphas=alphas if alphas is not None else (0.5, 0.5),
        epsilon=cfg.controller.epsilon,
        task_loss=cfg.controller.task_loss,
        js_normalize=cfg.controller.js_normalize,
        anchor=cfg.anchor,
        fusion=cfg.fusion,
        tie_threshold=cfg.tie_threshold,
        concat_epochs=cfg.model.concat_epochs,
        seed=cfg.seed,
    )


def build_dataset(cfg):
    """Materialize the configured dataset; generator seeds come from ``cfg.seed``."""
    ds_cfg = cfg.dataset
    if ds_cfg.generator is not None:
        params = dict(ds_cfg.params)
        if "snrs" in params:
            params["snrs"] = tuple(params["snrs"])
        try:
            ds = generate(ds_cfg.generator, seed=cfg.seed, **params)
        except TypeError as exc:
            raise ConfigError(f"dataset.params: {exc}") from None
    else:
        c = ds_cfg.csv
        ds = load_csv(c.modalities, c.labels, c.split, c.standardize, c.n_classes, split_seed=cfg.seed)
    if cfg.anchor != "auto" and cfg.anchor not in ds.names:
        raise ConfigError(f"anchor {cfg.anchor!r} is not one of the dataset modalities {ds.names}")
    if isinstance(cfg.epochs, dict):
        unknown = sorted(set(cfg.epochs) - set(ds.names))
        if unknown:
            raise ConfigError(f"epochs: unknown modality {unknown[0]!r}")
    return ds


def with_overrides(cfg, seed=None, out_dir=None):
    doc = cfg.model_dump(mode="json")
    if seed is not None:
        doc["seed"] = int(seed)
    if out_dir is not None:
        doc["out_dir"] = str(out_dir)
    return from_dict(doc)
