import math

from torch.optim import Optimizer
from torch.optim.lr_scheduler import LambdaLR

from training.config import TrainConfig


def learning_rate(step: int, config: TrainConfig, total_steps: int) -> float:
    """Linear warmup from 0 to ``lr``, then a cosine decay to ``min_lr``."""
    if config.warmup_steps and step < config.warmup_steps:
        return config.lr * step / config.warmup_steps
    cycle = config.cosine_steps or total_steps
    span = max(cycle - config.warmup_steps, 1)
    progress = min((step - config.warmup_steps) / span, 1.0)
    return config.min_lr + 0.5 * (config.lr - config.min_lr) * (1.0 + math.cos(math.pi * progress))


def build_scheduler(optimizer: Optimizer, config: TrainConfig, total_steps: int) -> LambdaLR:
    return LambdaLR(optimizer, lambda step: learning_rate(step, config, total_steps) / config.lr)
