"""Versioned checkpoint container.

Holds network parameters, optimizer moments, the observation schema, the
config hash, and any feature-scaling statistics. Loading validates the
format version and (when the caller provides its layout) the schema, so
stale checkpoints fail fast instead of silently mis-slicing features.
"""

from __future__ import annotations

import torch

from ..errors import SchemaMismatchError, TraceFormatError
from ..observation import ObservationLayout
from .agent import AacAgent
from .networks import NetworkConfig

CHECKPOINT_FORMAT = "grasplab-checkpoint"
CHECKPOINT_VERSION = 2


def save_checkpoint(path, agent: AacAgent, optimizer=None, config_hash: str = "",
                    extra: dict | None = None, scaling: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "schema": agent.layout.to_dict(),
        "network_config": agent.config.to_dict(),
        "symmetric_critic": agent.symmetric_critic,
        "actor": agent.actor.state_dict(),
        "critic": agent.critic.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "config_hash": config_hash,
        "scaling": scaling or {},
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_layout: ObservationLayout | None = None,
                    num_envs: int = 1, device: str = "cpu"):
    """Rebuild an agent from a checkpoint; returns (agent, payload)."""
    payload = torch.load(path, map_location=device, weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise TraceFormatError(f"not a {CHECKPOINT_FORMAT} file: {path}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise TraceFormatError(
            f"unsupported checkpoint version {payload.get('version')}")
    layout = ObservationLayout.from_dict(payload["schema"])
    if expected_layout is not None and not layout.matches(expected_layout):
        raise SchemaMismatchError(
            "checkpoint observation schema does not match the environment")
    net_cfg = NetworkConfig(**payload["network_config"])
    agent = AacAgent(layout, net_cfg, num_envs=num_envs,
                     symmetric_critic=payload["symmetric_critic"], device=device)
    agent.actor.load_state_dict(payload["actor"])
    agent.critic.load_state_dict(payload["critic"])
    return agent, payload
