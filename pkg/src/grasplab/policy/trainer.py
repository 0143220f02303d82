"""Training loop: vectorized rollouts, PPO updates, periodic deterministic
evaluation, checkpointing, and JSONL metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..metrics import evaluate_metrics
from .agent import AacAgent
from .buffer import RolloutBuffer
from .checkpoint import save_checkpoint
from .networks import NetworkConfig
from .ppo import PPOConfig, ppo_update


@dataclass
class TrainConfig:
    total_steps: int = 200_000
    num_envs: int = 16
    seed: int = 0
    eval_every_updates: int = 50
    eval_episodes: int = 20
    checkpoint_every_updates: int = 200
    early_stop_success: float = 0.0   # stop when eval s_lift reaches this (>0)
    log_every_updates: int = 10

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "total_steps", "num_envs", "seed", "eval_every_updates",
            "eval_episodes", "checkpoint_every_updates",
            "early_stop_success", "log_every_updates")}


@dataclass
class TrainResult:
    checkpoint_path: str
    curves: list = field(default_factory=list)   # JSONL-able dicts
    eval_history: list = field(default_factory=list)
    final_success: dict = field(default_factory=dict)
    env_steps: int = 0


def evaluate_policy(vec_env, agent: AacAgent, episodes: int,
                    run_disturbance: bool = False):
    """Deterministic rollouts until `episodes` records accumulate."""
    agent.reset_hidden()
    vec_env.drain_records()
    actor_obs, critic_obs = vec_env.reset_all()
    records = []
    while len(records) < episodes:
        action, _, _, _ = agent.act(actor_obs, critic_obs, deterministic=True)
        actor_obs, critic_obs, _, dones, _ = vec_env.step(action)
        if np.any(dones):
            agent.reset_hidden(np.nonzero(dones)[0])
            records.extend(vec_env.drain_records())
    return records[:episodes]


def train(vec_env, net_config: NetworkConfig, ppo_config: PPOConfig,
          train_config: TrainConfig, out_dir, symmetric_critic: bool = False,
          metrics_writer=None, eval_env=None, config_hash: str = "") -> TrainResult:
    """Train an asymmetric (or symmetric-ablation) agent on a vector env.

    Fully seeded: torch, the env's own generators, and minibatch
    shuffling all derive from train_config.seed. Single-threaded torch
    keeps runs reproducible on one platform.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(train_config.seed)
    torch.set_num_threads(1)

    layout = vec_env.layout
    agent = AacAgent(layout, net_config, num_envs=vec_env.num_envs,
                     symmetric_critic=symmetric_critic)
    optimizer = torch.optim.Adam(agent.parameters(), lr=ppo_config.learning_rate)
    buffer = RolloutBuffer(ppo_config.rollout_length, vec_env.num_envs,
                           layout.actor_dim, layout.critic_dim,
                           net_config.action_dim)

    layout.write_schema(out_dir / "observation_schema.json")
    checkpoint_path = out_dir / "checkpoint.pt"

    actor_obs, critic_obs = vec_env.reset_all()
    agent.reset_hidden()
    result = TrainResult(checkpoint_path=str(checkpoint_path))
    env_steps = 0
    update_idx = 0
    episode_returns = []
    recent_success = []
    t_start = time.time()

    while env_steps < train_config.total_steps:
        buffer.clear()
        buffer.initial_hidden = agent.hidden_snapshot()
        for _ in range(ppo_config.rollout_length):
            action, sample, log_prob, value = agent.act(actor_obs, critic_obs)
            next_actor, next_critic, rewards, dones, infos = vec_env.step(action)
            buffer.add(actor_obs, critic_obs, sample, log_prob, rewards, value, dones)
            actor_obs, critic_obs = next_actor, next_critic
            env_steps += vec_env.num_envs
            if np.any(dones):
                agent.reset_hidden(np.nonzero(dones)[0])
        buffer.bootstrap_values = agent.value_only(critic_obs)
        stats = ppo_update(agent, buffer, ppo_config, optimizer,
                           seed=train_config.seed * 100003 + update_idx)
        update_idx += 1

        for rec in vec_env.drain_records():
            episode_returns.append(rec.reward_total)
            recent_success.append(float(rec.s_lift))
        episode_returns = episode_returns[-100:]
        recent_success = recent_success[-100:]

        if update_idx % train_config.log_every_updates == 0 or stats["aborted"]:
            row = {
                "update": update_idx,
                "env_steps": env_steps,
                "wall_time": round(time.time() - t_start, 2),
                "mean_episode_return": float(np.mean(episode_returns))
                if episode_returns else 0.0,
                "rolling_s_lift": float(np.mean(recent_success))
                if recent_success else 0.0,
                **{k: (float(v) if not isinstance(v, bool) else v)
                   for k, v in stats.items()},
            }
            result.curves.append(row)
            if metrics_writer is not None:
                metrics_writer.write(row)

        if (train_config.eval_every_updates > 0
                and update_idx % train_config.eval_every_updates == 0):
            ev = eval_env or vec_env
            records = evaluate_policy(ev, agent, train_config.eval_episodes)
            summary = evaluate_metrics(records)
            entry = {"update": update_idx, "env_steps": env_steps,
                     "metrics": summary.to_dict()}
            result.eval_history.append(entry)
            if metrics_writer is not None:
                metrics_writer.write({"eval": entry})
            # evaluation consumed the env streams; restart collection
            actor_obs, critic_obs = vec_env.reset_all()
            agent.reset_hidden()
            if (train_config.early_stop_success > 0
                    and summary.rate("s_lift", "avg")
                    >= train_config.early_stop_success):
                break

        if (train_config.checkpoint_every_updates > 0
                and update_idx % train_config.checkpoint_every_updates == 0):
            save_checkpoint(checkpoint_path, agent, optimizer,
                            config_hash=config_hash,
                            extra={"env_steps": env_steps, "update": update_idx})

    save_checkpoint(checkpoint_path, agent, optimizer, config_hash=config_hash,
                    extra={"env_steps": env_steps, "update": update_idx})
    ev = eval_env or vec_env
    records = evaluate_policy(ev, agent, train_config.eval_episodes)
    final = evaluate_metrics(records)
    result.final_success = final.to_dict()
    result.env_steps = env_steps
    return result
