"""Run configuration: flat ``section.key=value`` files validated into pydantic models.

Files are read with the same parser as ``.env``.  Dotted keys nest, so
``finetune.noise.sigma=20`` reaches ``RunConfig.finetune.noise.sigma``; a
value containing commas becomes a list.  A ``manifest.json`` written by an
earlier run is accepted too and reproduces its resolved configuration.
"""

import hashlib
import json
import logging
from io import StringIO
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from models.equivariant import ModelConfig
from noise.linearize import TargetKind
from noise.perturb import NoiseKind, NoiseSpec
from pes.dataset import GeneratorConfig
from training.config import ObjectiveKind, TrainConfig
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


def _split_items(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class ExperimentConfig(BaseModel):
    """Settings of the force-accuracy, perturbation-scale, estimate-c and pipeline runs."""

    model_config = ConfigDict(extra="forbid")

    # (sigma, tau) sampling settings; sigma = 0 means CGN only
    settings: List[Tuple[float, float]] = [(0.0, 0.04), (1.0, 0.04), (20.0, 0.04)]
    target_kinds: List[TargetKind] = [TargetKind.CGN, TargetKind.HYBRID]
    n_molecules: int = Field(20, ge=1)
    samples_per_molecule: int = Field(10, ge=1)
    n_seeds: int = Field(5, ge=1)
    estimator_sigma: float = Field(2.0, gt=0.0)
    project_rigid: bool = True
    c_method: str = Field("analytic", pattern="^(analytic|lstsq)$")
    probe_sigmas: List[float] = [0.01, 0.1, 0.35, 1.0]
    n_probe_samples: int = Field(64, ge=2)
    scale_settings: List[Tuple[NoiseKind, float, float]] = [
        (NoiseKind.CGN, 0.0, 0.005),
        (NoiseKind.CGN, 0.0, 0.04),
        (NoiseKind.CGN, 0.0, 0.2),
        (NoiseKind.RN, 1.0, 0.04),
        (NoiseKind.RN, 20.0, 0.04),
    ]
    scale_draws: int = Field(20, ge=1)
    frames_per_entry: int = Field(4, ge=1)
    estimate_tau: float = Field(0.04, gt=0.0)
    val_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    dataset_path: Optional[str] = None
    seed: int = 0

    @field_validator("settings", mode="before")
    @classmethod
    def _parse_settings(cls, value):
        items = _split_items(value)
        return [item.split(":") if isinstance(item, str) else item for item in items]

    @field_validator("scale_settings", mode="before")
    @classmethod
    def _parse_scale_settings(cls, value):
        items = _split_items(value)
        return [item.split(":") if isinstance(item, str) else item for item in items]

    @field_validator("target_kinds", "probe_sigmas", mode="before")
    @classmethod
    def _parse_list(cls, value):
        return _split_items(value)


class RunConfig(BaseModel):
    """Every section of a run; ``train.noise`` always mirrors the ``noise`` section."""

    model_config = ConfigDict(extra="forbid")

    data: GeneratorConfig = GeneratorConfig()
    noise: NoiseSpec = NoiseSpec()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    finetune: TrainConfig = TrainConfig(objective=ObjectiveKind.FRAD_NOISY_NODES, epochs=20)
    experiment: ExperimentConfig = ExperimentConfig()

    @model_validator(mode="after")
    def _mirror_noise(self) -> "RunConfig":
        self.train = self.train.model_copy(update={"noise": self.noise})
        return self

    def with_seed(self, seed: int) -> "RunConfig":
        update = {
            "data": self.data.model_copy(update={"seed": seed}),
            "train": self.train.model_copy(update={"seed": seed}),
            "finetune": self.finetune.model_copy(update={"seed": seed}),
            "experiment": self.experiment.model_copy(update={"seed": seed}),
        }
        return self.model_copy(update=update)

    @property
    def seed(self) -> int:
        return self.experiment.seed

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        """sha256 over the canonical JSON of the resolved configuration."""
        canonical = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def nest_keys(flat: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """``{"a.b.c": v}`` to ``{"a": {"b": {"c": v}}}``; comma values become lists."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.strip().split(".")
        if len(parts) < 2 or not all(parts):
            raise ConfigError(f"Config key {key!r} needs a section prefix (e.g. data.count)")
        if parts[0] == "train" and parts[1] == "noise":
            raise ConfigError(f"Config key {key!r}: pre-training noise is set in the noise section")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Config key {key!r} conflicts with a scalar value")
            node = child
        value = "" if value is None else value
        node[parts[-1]] = value.split(",") if "," in value else value
    return nested


def build_run_config(values: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from None


def parse_run_config(text: str) -> RunConfig:
    """Parse ``section.key=value`` text."""
    return build_run_config(nest_keys(dotenv_values(stream=StringIO(text))))


def load_run_config(path: Optional[Union[str, Path]] = None, seed: Optional[int] = None) -> RunConfig:
    """Defaults, a key=value file or a previous run's manifest.json; ``seed`` overrides every seed."""
    if path is None:
        config = RunConfig()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        if path.suffix == ".json":
            try:
                manifest = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path} is not valid JSON: {exc}") from None
            if "config" not in manifest:
                raise ConfigError(f"{path} carries no resolved config")
            config = build_run_config(manifest["config"])
            logger.info(f"Reloaded config from manifest {path} (seed {config.seed})")
        else:
            config = build_run_config(nest_keys(dotenv_values(path)))
    return config if seed is None else config.with_seed(seed)
