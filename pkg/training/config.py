from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from noise.perturb import NoiseKind, NoiseSpec


class ObjectiveKind(str, Enum):
    FRAD = "frad"
    COORD = "coord"
    FINETUNE = "finetune"
    NOISY_NODES = "noisy_nodes"
    FRAD_NOISY_NODES = "frad_noisy_nodes"


class TaskKind(str, Enum):
    ENERGY = "energy"
    GAP = "gap"
    FORCE = "force"


class TrainConfig(BaseModel):
    """Objective, loss weights, optimizer schedule and loop settings."""

    model_config = ConfigDict(extra="forbid")

    objective: ObjectiveKind = ObjectiveKind.FRAD
    task: TaskKind = TaskKind.ENERGY
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    lambda_p: float = Field(1.0, ge=0.0)
    lambda_n: float = Field(0.1, ge=0.0)
    w_f: float = Field(0.8, ge=0.0)
    w_e: float = Field(0.2, ge=0.0)
    lr: float = Field(5e-4, gt=0.0)
    min_lr: float = Field(1e-7, ge=0.0)
    warmup_steps: int = Field(100, ge=0)
    cosine_steps: Optional[int] = Field(None, ge=1, description="cosine cycle length; defaults to the total step count")
    weight_decay: float = Field(0.0, ge=0.0)
    batch_size: int = Field(8, ge=1)
    epochs: int = Field(5, ge=0)
    seed: int = 0
    checkpoint_every: int = Field(0, ge=0, description="epochs between checkpoints, 0 disables")

    @model_validator(mode="after")
    def _check_weights(self) -> "TrainConfig":
        if self.lambda_p + self.lambda_n <= 0:
            raise ValueError("lambda_p + lambda_n must be positive")
        return self

    def effective_noise(self) -> NoiseSpec:
        """Coordinate noise only for coord pre-training and coupled Noisy Nodes."""
        if self.objective in (ObjectiveKind.COORD, ObjectiveKind.NOISY_NODES):
            return self.noise.model_copy(update={"kind": NoiseKind.CGN})
        return self.noise
