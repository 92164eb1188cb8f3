"""Experiment configuration: a YAML document checked against config.schema.json.

Unknown keys are rejected by the schema. Relative paths in ``avoid``,
``fusion.members``, ``eval.checkpoints`` and ``attribution.models`` are
resolved against the run's output directory, so one config serves every
seed of a multi-seed run. A string ``dataset`` is a CSV path resolved
against the directory holding the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .data import ComplementaryCueSpec, CueGroup
from .errors import ConfigurationError
from .losses import AamParams
from .nn import ModelSpec
from .training import ProjectionSpec, TrainOptions

DEFAULT_MODELS = {
    "A": {"hidden_dims": [64, 32], "head": "classifier"},
    "B": {"hidden_dims": [48, 32], "head": "classifier"},
}


def load_schema() -> dict:
    return json.loads(resources.files("acorl").joinpath("config.schema.json").read_text())


@dataclass
class FusionOptions:
    mode: str = "late"
    name: str | None = None
    members: list[str] = field(default_factory=list)
    hidden: int = 512
    late_hidden_layers: int = 2
    epochs: int = 20
    resolution: float = 0.05


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str | None = None
    dataset: ComplementaryCueSpec | Path = field(default_factory=ComplementaryCueSpec)
    models: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_MODELS.items()})
    model: str | None = None
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})
    epochs: int = 20
    batch_size: int = 64
    snapshot_epochs: list[int] = field(default_factory=lambda: [1, 5])
    lam: float = 1.0
    temperature: float = 1.0
    aam: AamParams = field(default_factory=AamParams)
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    avoid: list[str] = field(default_factory=list)
    fusion: FusionOptions = field(default_factory=FusionOptions)
    genuine_per_class: int = 100
    impostor_total: int = 2000
    eval_checkpoints: list[str] = field(default_factory=list)
    attribution_models: list[str] = field(default_factory=list)
    attribution_samples: int = 100
    attribution_steps: int = 64

    def model_spec(self, name: str, input_dim: int, num_classes: int) -> ModelSpec:
        if name not in self.models:
            raise ConfigurationError(f"model {name!r} is not defined under 'models' (have {sorted(self.models)})")
        m = self.models[name]
        return ModelSpec(input_dim, tuple(m["hidden_dims"]), m.get("head", "classifier"), num_classes)

    def train_options(self, seed: int) -> TrainOptions:
        return TrainOptions(self.epochs, self.batch_size, dict(self.optimizer), seed, self.aam)


def from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate ``doc`` against the schema and build a config with defaults filled in."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {e.message}")
    cfg = ExperimentConfig()
    for key in ("seed", "out", "model", "epochs", "batch_size", "snapshot_epochs", "lam", "temperature", "avoid"):
        if key in doc:
            setattr(cfg, key, doc[key])
    if "models" in doc:
        cfg.models = doc["models"]
    if "optimizer" in doc:
        cfg.optimizer = dict(doc["optimizer"])
    ds = doc.get("dataset")
    if isinstance(ds, str):
        p = Path(ds)
        cfg.dataset = p if p.is_absolute() or base_dir is None else base_dir / p
    elif isinstance(ds, dict):
        ds = dict(ds)
        if "groups" in ds:
            ds["groups"] = tuple(CueGroup(**g) for g in ds["groups"])
        cfg.dataset = ComplementaryCueSpec(**ds)
    if "aam" in doc:
        cfg.aam = AamParams(**doc["aam"])
    if "projection" in doc:
        cfg.projection = ProjectionSpec(**doc["projection"])
    if "fusion" in doc:
        cfg.fusion = FusionOptions(**doc["fusion"])
    trials = doc.get("trials", {})
    cfg.genuine_per_class = trials.get("genuine_per_class", cfg.genuine_per_class)
    cfg.impostor_total = trials.get("impostor_total", cfg.impostor_total)
    cfg.eval_checkpoints = doc.get("eval", {}).get("checkpoints", [])
    att = doc.get("attribution", {})
    cfg.attribution_models = att.get("models", [])
    cfg.attribution_samples = att.get("samples", cfg.attribution_samples)
    cfg.attribution_steps = att.get("steps", cfg.attribution_steps)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return from_dict(doc, path.parent)
