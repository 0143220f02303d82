"""Recurrent asymmetric actor-critic trained with PPO."""

from .networks import NetworkConfig, RecurrentActor, RecurrentCritic
from .agent import AacAgent
from .ppo import PPOConfig, ppo_update
from .buffer import RolloutBuffer
from .trainer import TrainConfig, train

__all__ = [
    "NetworkConfig", "RecurrentActor", "RecurrentCritic", "AacAgent",
    "PPOConfig", "ppo_update", "RolloutBuffer", "TrainConfig", "train",
]
