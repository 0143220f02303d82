"""Fixed-size on-policy rollout storage with GAE."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ValidationError


class RolloutBuffer:
    """(T, N) arrays for one rollout of N environments over T steps.

    Stores pre-squash actions (the Gaussian policy's sample space) plus
    the recurrent states at the rollout start so the update can replay
    the sequence with truncated BPTT. ``dones[t]`` marks that env's
    episode ended DURING step t; the observation stored at t+1 then
    belongs to the next episode and hidden state is reset there.
    """

    def __init__(self, rollout_length: int, num_envs: int, actor_dim: int,
                 critic_dim: int, action_dim: int):
        T, N = rollout_length, num_envs
        self.capacity = T
        self.num_envs = N
        self.actor_obs = np.zeros((T, N, actor_dim))
        self.critic_obs = np.zeros((T, N, critic_dim))
        self.actions = np.zeros((T, N, action_dim))
        self.log_probs = np.zeros((T, N))
        self.rewards = np.zeros((T, N))
        self.values = np.zeros((T, N))
        self.dones = np.zeros((T, N), dtype=bool)
        self.initial_hidden = None   # (actor_h, actor_c, critic_h, critic_c)
        self.bootstrap_values = np.zeros(N)
        self.step = 0

    def add(self, actor_obs, critic_obs, action, log_prob, reward, value, done):
        if self.step >= self.capacity:
            raise ValidationError("rollout buffer overfilled")
        t = self.step
        self.actor_obs[t] = actor_obs
        self.critic_obs[t] = critic_obs
        self.actions[t] = action
        self.log_probs[t] = log_prob
        self.rewards[t] = reward
        self.values[t] = value
        self.dones[t] = done
        self.step += 1

    @property
    def full(self) -> bool:
        return self.step == self.capacity

    def compute_advantages(self, gamma: float, lam: float):
        """GAE(lambda); returns (advantages, returns) of shape (T, N)."""
        T, N = self.capacity, self.num_envs
        adv = np.zeros((T, N))
        last = np.zeros(N)
        next_value = self.bootstrap_values
        for t in reversed(range(T)):
            not_done = 1.0 - self.dones[t]
            delta = self.rewards[t] + gamma * next_value * not_done - self.values[t]
            last = delta + gamma * lam * not_done * last
            adv[t] = last
            next_value = self.values[t]
        returns = adv + self.values
        if not np.all(np.isfinite(adv)):
            raise ValidationError("non-finite advantages")
        return adv, returns

    def clear(self):
        self.step = 0
        self.initial_hidden = None

    def tensors(self, device, dtype=torch.float32) -> dict:
        to = lambda x: torch.as_tensor(x, dtype=dtype, device=device)
        return {
            "actor_obs": to(self.actor_obs),
            "critic_obs": to(self.critic_obs),
            "actions": to(self.actions),
            "log_probs": to(self.log_probs),
            "dones": to(self.dones.astype(np.float64)),
            "values": to(self.values),
        }
