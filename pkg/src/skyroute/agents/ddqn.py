"""Double DQN baseline with uniform experience replay and a hard-synced target net."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..environment import N_ACTIONS, EnvConfig, GridEnv, TerminalReason, observation_dim
from ..neuralnet import AdamConfig, Mlp, NonFiniteError
from ..rng import substream
from .common import EpisodeStats, hyper_from_dict, hyper_to_dict, rng_from_state, rng_state

DDQN_CHECKPOINT_VERSION = "skyroute-ddqn v1"


@dataclass(frozen=True)
class DdqnHyperparams:
    gamma: float = 0.96
    learning_rate: float = 0.001
    replay_capacity: int = 10_000
    batch_size: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    # fraction of the episodes over which epsilon decays linearly
    epsilon_decay_fraction: float = 0.8
    target_sync_every: int = 200
    episodes: int = 2000
    hidden: tuple[int, ...] = (64, 64, 64)
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.epsilon_end <= 1.0 and 0.0 <= self.epsilon_start <= 1.0):
            raise ValueError("epsilon values must lie in [0, 1]")
        if not 0.0 < self.epsilon_decay_fraction <= 1.0:
            raise ValueError("epsilon_decay_fraction must lie in (0, 1]")
        if self.replay_capacity < self.batch_size or self.batch_size < 1:
            raise ValueError("replay_capacity must be >= batch_size >= 1")
        if self.target_sync_every < 1 or self.episodes < 1:
            raise ValueError("target_sync_every and episodes must be >= 1")

    def epsilon(self, episode: int) -> float:
        horizon = max(1, round(self.epsilon_decay_fraction * self.episodes))
        frac = min(episode / horizon, 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


class ReplayBuffer:
    """Fixed-capacity ring buffer of ``(obs, action, reward, next_obs, done)``."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done):
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = done
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} transitions")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]


def double_q_targets(rewards, dones, q_online_next, q_target_next, gamma: float) -> np.ndarray:
    """Bootstrap targets that pick ``a'`` with the online net and score it with the target net."""
    best = np.argmax(q_online_next, axis=1)
    bootstrap = q_target_next[np.arange(len(best)), best]
    return np.asarray(rewards, dtype=np.float64) + gamma * bootstrap * (1.0 - np.asarray(dones, dtype=np.float64))


class DdqnAgent:
    def __init__(self, obs_dim: int = 2, n_actions: int = N_ACTIONS, hyper: DdqnHyperparams | None = None, seed: int = 0):
        self.hyper = hyper or DdqnHyperparams()
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.online = Mlp(obs_dim, n_actions, self.hyper.hidden, rng=substream(seed, "init"))
        self.target = self.online.copy()
        self.target.reset_optimizer()
        self.rng = substream(seed, "exploration")
        self.replay_rng = substream(seed, "replay")
        self.buffer = ReplayBuffer(self.hyper.replay_capacity, obs_dim)
        self.opt = AdamConfig(self.hyper.learning_rate, clip_norm=self.hyper.clip_norm)
        self.updates = 0

    def greedy_action(self, obs) -> int:
        return int(np.argmax(self.online.forward(obs)))

    def select_action(self, obs, epsilon: float) -> int:
        if self.rng.random() < epsilon:
            return int(self.rng.integers(self.n_actions))
        return self.greedy_action(obs)

    def sync_target(self):
        self.target.load_params_from(self.online)

    def update(self, batch) -> float:
        """Mean-squared regression of Q(s, a) toward the double-Q targets; returns the loss."""
        obs, actions, rewards, next_obs, dones = batch
        targets = double_q_targets(
            rewards, dones, self.online.forward(next_obs), self.target.forward(next_obs), self.hyper.gamma
        )
        q = self.online.forward(obs)
        rows = np.arange(len(actions))
        err = targets - q[rows, actions]
        loss = float(np.mean(err * err))
        if not math.isfinite(loss):
            raise NonFiniteError(f"non-finite DDQN loss {loss}")
        grad_out = np.zeros_like(q)
        grad_out[rows, actions] = -2.0 * err / len(actions)
        self.online.adam_step(self.online.backward(obs, grad_out), self.opt)
        self.updates += 1
        if self.updates % self.hyper.target_sync_every == 0:
            self.sync_target()
        return loss

    def to_dict(self) -> dict:
        return {
            "version": DDQN_CHECKPOINT_VERSION,
            "kind": "ddqn",
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "hyper": hyper_to_dict(self.hyper),
            "updates": self.updates,
            "online": self.online.to_dict(),
            "target": self.target.to_dict(),
            "rng": rng_state(self.rng),
            "replay_rng": rng_state(self.replay_rng),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DdqnAgent":
        if data.get("version") != DDQN_CHECKPOINT_VERSION:
            raise ValueError(f"unsupported DDQN checkpoint version {data.get('version')!r}")
        agent = cls(data["obs_dim"], data["n_actions"], hyper_from_dict(DdqnHyperparams, data["hyper"]))
        agent.online = Mlp.from_dict(data["online"])
        agent.target = Mlp.from_dict(data["target"])
        agent.rng = rng_from_state(data["rng"])
        agent.replay_rng = rng_from_state(data["replay_rng"])
        agent.updates = int(data["updates"])
        return agent

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))


@dataclass
class DdqnTrainResult:
    agent: DdqnAgent
    history: list[EpisodeStats]
    losses: list[float] | None = None


def train_ddqn(
    env_config: EnvConfig, hyper: DdqnHyperparams | None = None, seed: int = 0, keep_losses: bool = False
) -> DdqnTrainResult:
    hyper = hyper or DdqnHyperparams()
    agent = DdqnAgent(observation_dim(env_config), N_ACTIONS, hyper, seed)
    env = GridEnv(env_config)
    history: list[EpisodeStats] = []
    losses: list[float] | None = [] if keep_losses else None
    for episode in range(hyper.episodes):
        eps = hyper.epsilon(episode)
        env.reset()
        obs = env.observation()
        ret, discount = 0.0, 1.0
        while True:
            action = agent.select_action(obs, eps)
            out = env.step(action)
            next_obs = env.observation()
            agent.buffer.add(obs, action, out.reward, next_obs, out.terminal_reason is TerminalReason.GOAL)
            if len(agent.buffer) >= hyper.batch_size:
                try:
                    loss = agent.update(agent.buffer.sample(hyper.batch_size, agent.replay_rng))
                except NonFiniteError as exc:
                    raise NonFiniteError(f"episode {episode}, step {env.state.steps_taken}: {exc}") from exc
                if losses is not None:
                    losses.append(loss)
            ret += discount * out.reward
            discount *= hyper.gamma
            obs = next_obs
            if out.done:
                break
        s = env.state
        history.append(EpisodeStats(episode, ret, s.steps_taken, s.handovers, s.terminal_reason is TerminalReason.GOAL))
    return DdqnTrainResult(agent, history, losses)
