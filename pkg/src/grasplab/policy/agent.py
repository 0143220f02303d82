"""Asymmetric actor-critic agent: rollout-time acting and hidden-state
bookkeeping per environment."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ConfigurationError
from ..observation import ObservationLayout
from .networks import NetworkConfig, RecurrentActor, RecurrentCritic


class AacAgent:
    """Holds actor/critic towers plus per-environment recurrent state.

    The actor sees ``layout.actor_dim`` features, the critic the
    privileged-extended ``layout.critic_dim``; with ``symmetric_critic``
    the critic is restricted to the actor's view (the ablation baseline).
    """

    def __init__(self, layout: ObservationLayout, config: NetworkConfig,
                 num_envs: int = 1, symmetric_critic: bool = False,
                 device: str = "cpu", dtype=torch.float32):
        self.layout = layout
        self.config = config
        self.symmetric_critic = symmetric_critic
        self.device = torch.device(device)
        self.dtype = dtype
        self.critic_input_dim = (layout.actor_dim if symmetric_critic
                                 else layout.critic_dim)
        self.actor = RecurrentActor(layout.actor_dim, config).to(self.device, dtype)
        self.critic = RecurrentCritic(self.critic_input_dim, config).to(self.device, dtype)
        self.num_envs = num_envs
        self.reset_hidden()

    def parameters(self):
        yield from self.actor.parameters()
        yield from self.critic.parameters()

    def reset_hidden(self, env_ids=None) -> None:
        """Zero recurrent state for the given environments (all if None)."""
        if env_ids is None or not hasattr(self, "actor_hidden"):
            self.actor_hidden = self.actor.initial_hidden(
                self.num_envs, self.device, self.dtype)
            self.critic_hidden = self.critic.initial_hidden(
                self.num_envs, self.device, self.dtype)
            return
        for hc in (self.actor_hidden, self.critic_hidden):
            hc[0][:, env_ids] = 0.0
            hc[1][:, env_ids] = 0.0

    def critic_view(self, critic_obs: torch.Tensor) -> torch.Tensor:
        return critic_obs[..., :self.critic_input_dim]

    @torch.no_grad()
    def act(self, actor_obs: np.ndarray, critic_obs: np.ndarray,
            deterministic: bool = False):
        """One control step for a batch of environments.

        Returns (squashed action, pre-squash sample, log_prob, value); the
        recurrent state advances in place. The policy distribution is the
        Gaussian over pre-squash actions; tanh maps them into [-1, 1].
        """
        if actor_obs.shape[-1] != self.layout.actor_dim:
            raise ConfigurationError(
                f"actor obs dim {actor_obs.shape[-1]} does not match schema "
                f"{self.layout.actor_dim}")
        obs_a = torch.as_tensor(actor_obs, dtype=self.dtype,
                                device=self.device).unsqueeze(0)
        obs_c = torch.as_tensor(critic_obs, dtype=self.dtype,
                                device=self.device).unsqueeze(0)
        mean, log_std, self.actor_hidden = self.actor(obs_a, self.actor_hidden)
        value, self.critic_hidden = self.critic(self.critic_view(obs_c),
                                                self.critic_hidden)
        mean = mean.squeeze(0)
        std = log_std.exp().expand_as(mean)
        if deterministic:
            sample = mean
        else:
            sample = torch.normal(mean, std)
        log_prob = (-0.5 * (((sample - mean) / std) ** 2
                            + 2 * log_std + np.log(2 * np.pi))).sum(-1)
        action = torch.tanh(sample)
        return (action.cpu().numpy(), sample.cpu().numpy(),
                log_prob.cpu().numpy(), value.squeeze(0).cpu().numpy())

    @torch.no_grad()
    def value_only(self, critic_obs: np.ndarray) -> np.ndarray:
        """Bootstrap value for the current critic hidden state (no advance)."""
        obs_c = torch.as_tensor(critic_obs, dtype=self.dtype,
                                device=self.device).unsqueeze(0)
        value, _ = self.critic(self.critic_view(obs_c), self.critic_hidden)
        return value.squeeze(0).cpu().numpy()

    def hidden_snapshot(self):
        return tuple(t.detach().clone() for t in
                     (*self.actor_hidden, *self.critic_hidden))

    def policy_fn(self, deterministic: bool = True):
        """Single-env callable bundle -> action for evaluation protocols."""
        def fn(bundle):
            action, _, _, _ = self.act(bundle.actor_vector[None, :],
                                       bundle.critic_vector[None, :],
                                       deterministic=deterministic)
            return action[0]
        return fn
