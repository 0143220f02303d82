"""Actor and critic towers: LSTM feature extraction into an MLP head.

The actor and critic never share parameters; the actor consumes the
deployable observation vector while the critic consumes the
privileged-extended vector, each through its own LSTM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from ..errors import ConfigurationError

ACTIVATIONS = {"elu": nn.ELU, "relu": nn.ReLU, "tanh": nn.Tanh}


@dataclass
class NetworkConfig:
    lstm_hidden_size: int = 256
    mlp_layers: list = field(default_factory=lambda: [256, 128])
    action_dim: int = 22
    activation: str = "elu"
    log_std_init: float = -0.5
    log_std_bounds: tuple = (-5.0, 2.0)

    def __post_init__(self):
        if self.lstm_hidden_size < 1 or self.action_dim < 1:
            raise ConfigurationError("hidden sizes and action_dim must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return {"lstm_hidden_size": self.lstm_hidden_size,
                "mlp_layers": list(self.mlp_layers),
                "action_dim": self.action_dim,
                "activation": self.activation,
                "log_std_init": self.log_std_init,
                "log_std_bounds": tuple(self.log_std_bounds)}


def _mlp(in_dim: int, widths, activation) -> nn.Sequential:
    layers = []
    act = ACTIVATIONS[activation]
    for w in widths:
        layers += [nn.Linear(in_dim, w), act()]
        in_dim = w
    return nn.Sequential(*layers)


class RecurrentTower(nn.Module):
    """LSTM over the observation stream followed by an MLP trunk."""

    def __init__(self, input_dim: int, config: NetworkConfig):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, config.lstm_hidden_size, batch_first=False)
        self.trunk = _mlp(config.lstm_hidden_size, config.mlp_layers,
                          config.activation)
        self.out_dim = (config.mlp_layers[-1] if config.mlp_layers
                        else config.lstm_hidden_size)

    def forward(self, obs, hidden):
        """obs: (T, B, D); hidden: (h, c) each (1, B, H). Returns features
        (T, B, F) and the next hidden state."""
        feats, hidden = self.lstm(obs, hidden)
        return self.trunk(feats), hidden

    def initial_hidden(self, batch: int, device=None, dtype=None):
        h = self.lstm.hidden_size
        kw = {"device": device, "dtype": dtype or torch.float32}
        return (torch.zeros(1, batch, h, **kw), torch.zeros(1, batch, h, **kw))


class RecurrentActor(nn.Module):
    """Gaussian policy head with a state-independent learned log-std.

    The network outputs the pre-squash mean; sampling and the tanh squash
    into the normalized action range happen in the agent.
    """

    def __init__(self, obs_dim: int, config: NetworkConfig):
        super().__init__()
        self.tower = RecurrentTower(obs_dim, config)
        self.mean_head = nn.Linear(self.tower.out_dim, config.action_dim)
        self.log_std = nn.Parameter(
            torch.full((config.action_dim,), float(config.log_std_init)))
        self.log_std_bounds = tuple(config.log_std_bounds)

    def forward(self, obs, hidden):
        feats, hidden = self.tower(obs, hidden)
        mean = self.mean_head(feats)
        log_std = self.log_std.clamp(*self.log_std_bounds)
        return mean, log_std, hidden

    def initial_hidden(self, batch: int, device=None, dtype=None):
        return self.tower.initial_hidden(batch, device, dtype)


class RecurrentCritic(nn.Module):
    """State-value head over the privileged-extended observation."""

    def __init__(self, obs_dim: int, config: NetworkConfig):
        super().__init__()
        self.tower = RecurrentTower(obs_dim, config)
        self.value_head = nn.Linear(self.tower.out_dim, 1)

    def forward(self, obs, hidden):
        feats, hidden = self.tower(obs, hidden)
        return self.value_head(feats).squeeze(-1), hidden

    def initial_hidden(self, batch: int, device=None, dtype=None):
        return self.tower.initial_hidden(batch, device, dtype)
