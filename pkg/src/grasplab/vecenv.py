"""Vectorized environment fronts for rollout collection.

Two implementations share one interface:

  - ``SyncVectorEnv`` steps a list of independent single environments
    (optionally on a thread pool; instances share no state).
  - ``BatchedSqueezeVectorEnv`` (in env.toy_batched) fuses the miniature
    squeeze task's physics across the batch in plain numpy.

The interface: ``reset_all()``, ``step(actions (B, A))`` returning
(actor_obs, critic_obs, rewards, dones, infos); finished environments
auto-reset and their EpisodeRecords queue up in ``drain_records()``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


class SyncVectorEnv:
    """Steps independent env instances; auto-resets with seeds drawn from a
    master generator (and episode configs from a sampler when given)."""

    def __init__(self, envs, master_seed: int, episode_sampler=None, workers: int = 1):
        self.envs = list(envs)
        self.num_envs = len(self.envs)
        self.layout = self.envs[0].layout
        self._sampler = episode_sampler
        self._master = np.random.default_rng(master_seed)
        self._records = []
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def _reset_one(self, env):
        seed = int(self._master.integers(2 ** 62))
        if self._sampler is not None:
            spec, pose, ep_seed = self._sampler(self._master)
            return env.reset(spec, pose, ep_seed)
        return env.reset_episode(seed)

    def reset_all(self):
        bundles = [self._reset_one(env) for env in self.envs]
        actor = np.stack([b.actor_vector for b in bundles])
        critic = np.stack([b.critic_vector for b in bundles])
        return actor, critic

    def step(self, actions):
        results = [None] * self.num_envs

        def run(i):
            results[i] = self.envs[i].step(actions[i])

        if self._pool is not None:
            list(self._pool.map(run, range(self.num_envs)))
        else:
            for i in range(self.num_envs):
                run(i)

        actor = np.empty((self.num_envs, self.layout.actor_dim))
        critic = np.empty((self.num_envs, self.layout.critic_dim))
        rewards = np.empty(self.num_envs)
        dones = np.zeros(self.num_envs, dtype=bool)
        infos = []
        for i, (bundle, breakdown, done, info) in enumerate(results):
            rewards[i] = breakdown.total
            infos.append(info)
            dones[i] = done
            if done:
                self._records.append(self.envs[i].episode_record())
                bundle = self._reset_one(self.envs[i])
            actor[i] = bundle.actor_vector
            critic[i] = bundle.critic_vector
        return actor, critic, rewards, dones, infos

    def drain_records(self):
        out = self._records
        self._records = []
        return out

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
