import numpy as np
import pytest
import torch

from grasplab.errors import SchemaMismatchError
from grasplab.observation import ObservationLayout
from grasplab.policy.agent import AacAgent
from grasplab.policy.buffer import RolloutBuffer
from grasplab.policy.checkpoint import load_checkpoint, save_checkpoint
from grasplab.policy.networks import NetworkConfig
from grasplab.policy.ppo import PPOConfig, evaluate_actions, ppo_update

LAYOUT = ObservationLayout(action_dim=4, history_len=2)
MINI = NetworkConfig(lstm_hidden_size=8, mlp_layers=[8], action_dim=4)


def make_agent(num_envs=2, symmetric=False, dtype=torch.float32, seed=0):
    torch.manual_seed(seed)
    return AacAgent(LAYOUT, MINI, num_envs=num_envs, symmetric_critic=symmetric,
                    dtype=dtype)


def random_obs(rng, n):
    actor = rng.normal(size=(n, LAYOUT.actor_dim))
    critic = np.concatenate([actor, rng.normal(size=(n, LAYOUT.privileged_dim))],
                            axis=1)
    return actor, critic


def test_deterministic_act_is_repeatable():
    agent = make_agent()
    rng = np.random.default_rng(0)
    actor, critic = random_obs(rng, 2)
    agent.reset_hidden()
    a1, _, _, v1 = agent.act(actor, critic, deterministic=True)
    agent.reset_hidden()
    a2, _, _, v2 = agent.act(actor, critic, deterministic=True)
    assert np.array_equal(a1, a2)
    assert np.array_equal(v1, v2)


def test_actor_blind_to_privileged_fields():
    agent = make_agent()
    rng = np.random.default_rng(1)
    actor, critic = random_obs(rng, 2)
    critic2 = critic.copy()
    critic2[:, LAYOUT.actor_dim:] += rng.normal(size=(2, LAYOUT.privileged_dim))
    agent.reset_hidden()
    a1, _, _, v1 = agent.act(actor, critic, deterministic=True)
    agent.reset_hidden()
    a2, _, _, v2 = agent.act(actor, critic2, deterministic=True)
    assert np.array_equal(a1, a2)      # bit-identical action distribution
    assert not np.array_equal(v1, v2)  # value sees the privileged change


def test_zero_parameters_give_centered_action():
    agent = make_agent()
    with torch.no_grad():
        for p in agent.parameters():
            p.zero_()
    rng = np.random.default_rng(2)
    actor, critic = random_obs(rng, 2)
    agent.reset_hidden()
    action, _, _, _ = agent.act(actor, critic, deterministic=True)
    assert np.allclose(action, 0.0)  # tanh(0) = center of the joint range


def test_symmetric_critic_ignores_privileged():
    agent = make_agent(symmetric=True)
    rng = np.random.default_rng(3)
    actor, critic = random_obs(rng, 2)
    critic2 = critic.copy()
    critic2[:, LAYOUT.actor_dim:] += 1.0
    agent.reset_hidden()
    _, _, _, v1 = agent.act(actor, critic, deterministic=True)
    agent.reset_hidden()
    _, _, _, v2 = agent.act(actor, critic2, deterministic=True)
    assert np.array_equal(v1, v2)


def test_recurrent_reset_zeroes_hidden():
    agent = make_agent(num_envs=3)
    rng = np.random.default_rng(4)
    actor, critic = random_obs(rng, 3)
    agent.act(actor, critic)
    assert not torch.all(agent.actor_hidden[0][:, 1] == 0)
    agent.reset_hidden([1])
    assert torch.all(agent.actor_hidden[0][:, 1] == 0)
    assert torch.all(agent.critic_hidden[1][:, 1] == 0)
    assert not torch.all(agent.actor_hidden[0][:, 0] == 0)


# ------------------------------------------------------------------ GAE

def test_gae_lambda_one_equals_discounted_returns_minus_values():
    T, N = 6, 3
    rng = np.random.default_rng(5)
    buf = RolloutBuffer(T, N, 2, 3, 1)
    buf.rewards = rng.normal(size=(T, N))
    buf.values = rng.normal(size=(T, N))
    buf.dones[:] = False
    buf.dones[-1] = True  # all episodes end at the window edge
    buf.bootstrap_values = rng.normal(size=N)  # must be ignored past done
    buf.step = T
    gamma = 0.97
    adv, ret = buf.compute_advantages(gamma, 1.0)
    for n in range(N):
        for t in range(T):
            discounted = sum(gamma ** (k - t) * buf.rewards[k, n]
                             for k in range(t, T))
            assert adv[t, n] == pytest.approx(discounted - buf.values[t, n],
                                              abs=1e-10)
            assert ret[t, n] == pytest.approx(discounted, abs=1e-10)


def test_gae_respects_episode_boundaries():
    T, N = 4, 1
    buf = RolloutBuffer(T, N, 2, 3, 1)
    buf.rewards[:, 0] = [1.0, 2.0, 3.0, 4.0]
    buf.values[:] = 0.0
    buf.dones[1, 0] = True
    buf.dones[-1, 0] = True
    buf.step = T
    adv, _ = buf.compute_advantages(1.0, 1.0)
    assert adv[0, 0] == pytest.approx(3.0)   # 1 + 2, cut at the done
    assert adv[2, 0] == pytest.approx(7.0)   # 3 + 4


# ------------------------------------------------------------------ update

def synthetic_buffer(agent, T=4, N=2, seed=0):
    rng = np.random.default_rng(seed)
    buf = RolloutBuffer(T, N, LAYOUT.actor_dim, LAYOUT.critic_dim,
                        MINI.action_dim)
    agent.reset_hidden()
    buf.initial_hidden = agent.hidden_snapshot()
    actor, critic = random_obs(rng, N)
    for t in range(T):
        action, sample, logp, value = agent.act(actor, critic)
        dones = np.zeros(N, dtype=bool)
        if t == T - 1:
            dones[:] = True
        buf.add(actor, critic, sample, logp, rng.normal(size=N), value, dones)
        actor, critic = random_obs(rng, N)
        if np.any(dones):
            agent.reset_hidden(np.nonzero(dones)[0])
    buf.bootstrap_values = np.zeros(N)
    return buf


def test_replayed_log_probs_match_rollout():
    agent = make_agent(dtype=torch.float64)
    buf = synthetic_buffer(agent)
    batch = buf.tensors(agent.device, agent.dtype)
    batch["hidden"] = buf.initial_hidden
    log_probs, _, values = evaluate_actions(agent, batch, torch.arange(2))
    assert np.allclose(log_probs.detach().numpy(), buf.log_probs, atol=1e-9)
    assert np.allclose(values.detach().numpy(), buf.values, atol=1e-9)


def test_zero_advantage_gives_zero_policy_loss():
    agent = make_agent()
    buf = synthetic_buffer(agent)
    buf.rewards[:] = 0.0
    buf.values[:] = 0.0
    buf.bootstrap_values[:] = 0.0
    cfg = PPOConfig(epochs=1, num_minibatches=1)
    optimizer = torch.optim.Adam(agent.parameters(), lr=1e-3)
    stats = ppo_update(agent, buf, cfg, optimizer)
    assert stats["policy_loss"] == pytest.approx(0.0, abs=1e-7)
    assert not stats["aborted"]


def test_kl_small_after_one_update():
    agent = make_agent(num_envs=4)
    buf = synthetic_buffer(agent, T=8, N=4)
    cfg = PPOConfig(epochs=4, num_minibatches=2)
    optimizer = torch.optim.Adam(agent.parameters(), lr=3e-4)
    stats = ppo_update(agent, buf, cfg, optimizer)
    assert abs(stats["kl"]) < 0.05


def test_update_aborts_on_nonfinite():
    agent = make_agent()
    buf = synthetic_buffer(agent)
    buf.rewards[0, 0] = np.nan
    cfg = PPOConfig(epochs=1, num_minibatches=1)
    optimizer = torch.optim.Adam(agent.parameters(), lr=1e-3)
    before = [p.detach().clone() for p in agent.parameters()]
    import grasplab.errors as errors
    try:
        stats = ppo_update(agent, buf, cfg, optimizer)
        aborted = stats["aborted"]
    except errors.ValidationError:
        aborted = True  # surfaced at advantage computation
    assert aborted
    for p, b in zip(agent.parameters(), before):
        assert torch.equal(p, b)


def test_gradients_match_finite_differences():
    # full PPO loss on a tiny double-precision network vs central differences
    agent = make_agent(dtype=torch.float64, seed=3)
    buf = synthetic_buffer(agent, T=3, N=2, seed=7)
    cfg = PPOConfig(epochs=1, num_minibatches=1, normalize_advantages=False)

    adv_np, ret_np = buf.compute_advantages(cfg.gamma, cfg.gae_lambda)
    batch = buf.tensors(agent.device, agent.dtype)
    batch["advantages"] = torch.as_tensor(adv_np, dtype=agent.dtype)
    batch["returns"] = torch.as_tensor(ret_np, dtype=agent.dtype)
    batch["hidden"] = buf.initial_hidden
    env_idx = torch.arange(2)

    def loss_fn():
        log_probs, entropy, values = evaluate_actions(agent, batch, env_idx)
        ratio = (log_probs - batch["log_probs"]).exp()
        surr1 = ratio * batch["advantages"]
        surr2 = torch.clamp(ratio, 1 - cfg.clip_ratio,
                            1 + cfg.clip_ratio) * batch["advantages"]
        policy_loss = -torch.min(surr1, surr2).mean()
        old_values = batch["values"]
        clipped = old_values + torch.clamp(values - old_values,
                                           -cfg.value_clip, cfg.value_clip)
        value_loss = torch.max((values - batch["returns"]) ** 2,
                               (clipped - batch["returns"]) ** 2).mean()
        return (policy_loss + cfg.value_coef * value_loss
                - cfg.entropy_coef * entropy)

    params = list(agent.parameters())
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params)

    eps = 1e-5
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.view(-1)
        g_flat = g.view(-1)
        # probe every entry of small tensors, a strided sample of large ones
        idxs = range(len(flat)) if len(flat) <= 64 else range(0, len(flat), 37)
        for i in idxs:
            orig = flat[i].item()
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            denom = max(abs(fd), abs(g_flat[i].item()), 1e-8)
            rel = abs(g_flat[i].item() - fd) / denom
            worst = max(worst, rel)
    assert worst < 1e-4, f"worst relative gradient error {worst}"


# ------------------------------------------------------------------ checkpoint

def test_checkpoint_round_trip(tmp_path):
    agent = make_agent()
    optimizer = torch.optim.Adam(agent.parameters(), lr=1e-3)
    path = tmp_path / "ckpt.pt"
    save_checkpoint(path, agent, optimizer, config_hash="abc123",
                    extra={"env_steps": 42})
    loaded, payload = load_checkpoint(path, expected_layout=LAYOUT)
    assert payload["config_hash"] == "abc123"
    assert payload["extra"]["env_steps"] == 42
    rng = np.random.default_rng(0)
    actor, critic = random_obs(rng, 1)
    agent.num_envs = 1
    agent.reset_hidden()
    loaded.reset_hidden()
    a1, _, _, v1 = agent.act(actor, critic, deterministic=True)
    a2, _, _, v2 = loaded.act(actor, critic, deterministic=True)
    assert np.allclose(a1, a2)
    assert np.allclose(v1, v2)


def test_checkpoint_rejects_wrong_schema(tmp_path):
    agent = make_agent()
    path = tmp_path / "ckpt.pt"
    save_checkpoint(path, agent)
    other = ObservationLayout(action_dim=1, history_len=3)
    with pytest.raises(SchemaMismatchError):
        load_checkpoint(path, expected_layout=other)
