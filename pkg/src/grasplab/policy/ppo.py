"""Clipped-surrogate PPO update over recurrent sequences.

The update replays each environment's rollout through the LSTMs with the
stored initial hidden state, resetting at episode boundaries (truncated
BPTT over the rollout window). Minibatches split across environments so
sequences stay intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigurationError


@dataclass
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    value_clip: float = 0.2
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    epochs: int = 4
    num_minibatches: int = 4
    max_grad_norm: float = 1.0
    rollout_length: int = 32
    normalize_advantages: bool = True

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ConfigurationError("gamma in (0,1], lambda in [0,1]")
        if self.clip_ratio <= 0:
            raise ConfigurationError("clip_ratio must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "gamma", "gae_lambda", "clip_ratio", "value_clip", "entropy_coef",
            "value_coef", "learning_rate", "epochs", "num_minibatches",
            "max_grad_norm", "rollout_length", "normalize_advantages")}


def _replay_sequences(tower_forward, obs, dones, h0, c0):
    """Run a recurrent tower over (T, B, D) with resets at done flags.

    ``dones[t]`` ends step t, so hidden state is zeroed before
    consuming obs[t+1]. Gradients flow through the whole window.
    """
    T = obs.shape[0]
    hidden = (h0, c0)
    outputs = []
    for t in range(T):
        out, hidden = tower_forward(obs[t:t + 1], hidden)
        outputs.append(out)
        if t + 1 < T:
            mask = (1.0 - dones[t]).view(1, -1, 1)
            hidden = (hidden[0] * mask, hidden[1] * mask)
    return torch.cat(outputs, dim=0)


def evaluate_actions(agent, batch, env_idx):
    """Log-probs, entropy, and values for stored actions on a minibatch of
    environment sequences (selected by env_idx)."""
    actor_obs = batch["actor_obs"][:, env_idx]
    critic_obs = batch["critic_obs"][:, env_idx]
    actions = batch["actions"][:, env_idx]
    dones = batch["dones"][:, env_idx]
    ah, ac, ch, cc = batch["hidden"]
    a_hidden = (ah[:, env_idx].contiguous(), ac[:, env_idx].contiguous())
    c_hidden = (ch[:, env_idx].contiguous(), cc[:, env_idx].contiguous())

    # actor pass
    T = actor_obs.shape[0]
    hidden = a_hidden
    mean_steps = []
    for t in range(T):
        (mean_t, log_std, _), hidden = _actor_step(agent, actor_obs[t:t + 1], hidden)
        mean_steps.append(mean_t)
        if t + 1 < T:
            mask = (1.0 - dones[t]).view(1, -1, 1)
            hidden = (hidden[0] * mask, hidden[1] * mask)
    mean = torch.cat(mean_steps, dim=0)
    log_std = agent.actor.log_std.clamp(*agent.actor.log_std_bounds)
    std = log_std.exp()
    var = std ** 2
    log_probs = (-0.5 * ((actions - mean) ** 2 / var
                         + 2 * log_std + math.log(2 * math.pi))).sum(-1)
    entropy = (0.5 + 0.5 * math.log(2 * math.pi) + log_std).sum()

    values = _replay_sequences(
        lambda o, h: agent.critic(o, h),
        agent.critic_view(critic_obs), dones, *c_hidden)
    return log_probs, entropy, values


def _actor_step(agent, obs_t, hidden):
    mean, log_std, hidden = agent.actor(obs_t, hidden)
    return (mean, log_std, hidden), hidden


def ppo_update(agent, buffer, config: PPOConfig, optimizer, seed: int = 0) -> dict:
    """One PPO update over a full rollout buffer; returns training stats.

    ``seed`` fixes the minibatch shuffling so runs reproduce. On a
    non-finite loss the update aborts, parameters stay unchanged, and the
    stats carry ``aborted=True``.
    """
    device, dtype = agent.device, agent.dtype
    advantages, returns = buffer.compute_advantages(config.gamma, config.gae_lambda)
    batch = buffer.tensors(device, dtype)
    batch["advantages"] = torch.as_tensor(advantages, dtype=dtype, device=device)
    batch["returns"] = torch.as_tensor(returns, dtype=dtype, device=device)
    batch["hidden"] = buffer.initial_hidden

    N = buffer.num_envs
    n_minibatches = min(config.num_minibatches, N)
    snapshot = {
        "actor": {k: v.detach().clone() for k, v in agent.actor.state_dict().items()},
        "critic": {k: v.detach().clone() for k, v in agent.critic.state_dict().items()},
        "optim": optimizer.state_dict(),
    }

    if config.normalize_advantages:
        adv = batch["advantages"]
        batch["advantages"] = (adv - adv.mean()) / (adv.std() + 1e-8)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "kl": 0.0, "clip_fraction": 0.0, "aborted": False}
    count = 0
    perm_gen = torch.Generator(device="cpu")
    perm_gen.manual_seed(seed)

    for _ in range(config.epochs):
        order = torch.randperm(N, generator=perm_gen)
        for mb in range(n_minibatches):
            env_idx = order[mb::n_minibatches]
            log_probs, entropy, values = evaluate_actions(agent, batch, env_idx)
            old_log_probs = batch["log_probs"][:, env_idx]
            adv = batch["advantages"][:, env_idx]
            ret = batch["returns"][:, env_idx]
            old_values = batch["values"][:, env_idx]

            log_ratio = log_probs - old_log_probs
            ratio = log_ratio.exp()
            surr1 = ratio * adv
            surr2 = torch.clamp(ratio, 1.0 - config.clip_ratio,
                                1.0 + config.clip_ratio) * adv
            policy_loss = -torch.min(surr1, surr2).mean()

            if config.value_clip > 0:
                clipped = old_values + torch.clamp(values - old_values,
                                                   -config.value_clip,
                                                   config.value_clip)
                value_loss = torch.max((values - ret) ** 2,
                                       (clipped - ret) ** 2).mean()
            else:
                value_loss = ((values - ret) ** 2).mean()

            loss = (policy_loss + config.value_coef * value_loss
                    - config.entropy_coef * entropy)
            if not torch.isfinite(loss):
                agent.actor.load_state_dict(snapshot["actor"])
                agent.critic.load_state_dict(snapshot["critic"])
                optimizer.load_state_dict(snapshot["optim"])
                stats["aborted"] = True
                return stats

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(agent.parameters(), config.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                kl = ((ratio - 1.0) - log_ratio).mean()  # low-variance estimator
                clip_frac = ((ratio - 1.0).abs() > config.clip_ratio).float().mean()
            stats["policy_loss"] += float(policy_loss.detach())
            stats["value_loss"] += float(value_loss.detach())
            stats["entropy"] += float(entropy.detach())
            stats["kl"] += float(kl)
            stats["clip_fraction"] += float(clip_frac)
            count += 1

    for k in ("policy_loss", "value_loss", "entropy", "kl", "clip_fraction"):
        stats[k] /= max(count, 1)
    var_returns = float(np.var(returns))
    stats["explained_variance"] = (
        1.0 - float(np.var(returns - buffer.values)) / var_returns
        if var_returns > 1e-12 else 0.0)
    return stats
