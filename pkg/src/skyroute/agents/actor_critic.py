"""Double actor-critic: softmax actor, state-value critic (per-action Q optional) and a slowly blended target critic."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..environment import N_ACTIONS, EnvConfig, GridEnv, TerminalReason, observation_dim, max_step_reward
from ..neuralnet import AdamConfig, Mlp, NonFiniteError, soft_update
from ..rng import substream
from .common import EpisodeStats, hyper_from_dict, hyper_to_dict, rng_from_state, rng_state

AC_CHECKPOINT_VERSION = "skyroute-ac v1"
CRITIC_KINDS = ("state", "action")


@dataclass(frozen=True)
class AcHyperparams:
    gamma: float = 0.96
    actor_lr: float = 0.001
    critic_lr: float = 0.003
    # weight kept on the old target at each blend; setting it to 1 - critic_lr ties the blend to the critic step
    target_tau: float = 0.99
    target_update_every: int = 1
    episodes: int = 2000
    hidden: tuple[int, ...] = (64, 64, 64)
    clip_norm: float | None = 5.0
    # "state": one critic output V(s) used for both TD terms; "action": per-action Q(s, a) heads
    critic: str = "state"
    # start the critic at the largest single-step reward (an upper bound on any value)
    optimistic_critic: bool = True

    def __post_init__(self):
        if self.critic not in CRITIC_KINDS:
            raise ValueError(f"critic must be one of {CRITIC_KINDS}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.target_tau <= 1.0:
            raise ValueError("target_tau must lie in [0, 1]")
        if self.target_update_every < 1:
            raise ValueError("target_update_every must be >= 1")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


@dataclass(frozen=True)
class TdDiagnostics:
    td_error: float
    q_sa: float
    q_next: float
    actor_loss: float
    critic_loss: float


class AcAgent:
    def __init__(
        self,
        obs_dim: int = 2,
        n_actions: int = N_ACTIONS,
        hyper: AcHyperparams | None = None,
        seed: int = 0,
        critic_init: float = 0.0,
    ):
        self.hyper = hyper or AcHyperparams()
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        init_rng = substream(seed, "init")
        # zero output layers: uniform initial policy, flat initial critic
        self.actor = Mlp(obs_dim, n_actions, self.hyper.hidden, head="softmax", rng=init_rng, zero_output=True)
        self.critic_outputs = n_actions if self.hyper.critic == "action" else 1
        self.critic = Mlp(
            obs_dim, self.critic_outputs, self.hyper.hidden, rng=init_rng, zero_output=True, output_bias=critic_init
        )
        self.target_critic = self.critic.copy()
        self.target_critic.reset_optimizer()
        self.rng = substream(seed, "exploration")
        self.actor_opt = AdamConfig(self.hyper.actor_lr, clip_norm=self.hyper.clip_norm)
        self.critic_opt = AdamConfig(self.hyper.critic_lr, clip_norm=self.hyper.clip_norm)
        self.updates = 0

    def policy(self, obs) -> np.ndarray:
        return self.actor.forward(obs)

    def select_action(self, obs, greedy: bool = False) -> int:
        probs = self.actor.forward(obs)
        if greedy:
            return int(np.argmax(probs))
        idx = int(np.searchsorted(np.cumsum(probs), self.rng.random(), side="right"))
        return min(idx, self.n_actions - 1)

    def greedy_action(self, obs) -> int:
        return self.select_action(obs, greedy=True)

    def _head(self, action) -> int:
        return action if self.critic_outputs > 1 else 0

    def td_error(self, obs, action, reward, next_obs, next_action, done) -> tuple[float, float, float]:
        q_sa = float(self.critic.forward(obs)[self._head(action)])
        q_next = 0.0 if done else float(self.target_critic.forward(next_obs)[self._head(next_action)])
        return reward + self.hyper.gamma * q_next - q_sa, q_sa, q_next

    def update(self, obs, action, reward, next_obs, next_action, done) -> TdDiagnostics:
        """One online TD step on actor, critic and (periodically) the target critic.

        The actor descends ``-td * ln pi(a|s)`` with the TD error held constant;
        the critic descends ``td**2``. Learning rates live in Adam, not in the losses.
        """
        td, q_sa, q_next = self.td_error(obs, action, reward, next_obs, next_action, done)
        if not math.isfinite(td):
            raise NonFiniteError(f"non-finite TD error (q_sa={q_sa}, q_next={q_next}, reward={reward})")

        probs = self.actor.forward(obs)
        p_a = float(probs[action])
        g_actor = np.zeros(self.n_actions)
        g_actor[action] = -td / p_a
        g_critic = np.zeros(self.critic_outputs)
        g_critic[self._head(action)] = -2.0 * td

        self.critic.adam_step(self.critic.backward(obs, g_critic), self.critic_opt)
        self.actor.adam_step(self.actor.backward(obs, g_actor), self.actor_opt)
        self.updates += 1
        if self.updates % self.hyper.target_update_every == 0:
            soft_update(self.target_critic, self.critic, self.hyper.target_tau)
        return TdDiagnostics(td, q_sa, q_next, -td * math.log(p_a), td * td)

    def to_dict(self) -> dict:
        return {
            "version": AC_CHECKPOINT_VERSION,
            "kind": "ac",
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "hyper": hyper_to_dict(self.hyper),
            "updates": self.updates,
            "actor": self.actor.to_dict(),
            "critic": self.critic.to_dict(),
            "target_critic": self.target_critic.to_dict(),
            "rng": rng_state(self.rng),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AcAgent":
        if data.get("version") != AC_CHECKPOINT_VERSION:
            raise ValueError(f"unsupported AC checkpoint version {data.get('version')!r}")
        agent = cls(data["obs_dim"], data["n_actions"], hyper_from_dict(AcHyperparams, data["hyper"]))
        agent.actor = Mlp.from_dict(data["actor"])
        agent.critic = Mlp.from_dict(data["critic"])
        agent.target_critic = Mlp.from_dict(data["target_critic"])
        agent.rng = rng_from_state(data["rng"])
        agent.updates = int(data["updates"])
        return agent

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))


UpdateHook = Callable[[AcAgent, tuple], None]


@dataclass
class AcTrainResult:
    agent: AcAgent
    history: list[EpisodeStats]
    td_log: list[TdDiagnostics] | None = None


def train_ac(
    env_config: EnvConfig,
    hyper: AcHyperparams | None = None,
    seed: int = 0,
    before_update: UpdateHook | None = None,
    keep_td_log: bool = False,
) -> AcTrainResult:
    """Episodic on-policy training with per-step updates.

    ``before_update(agent, transition)`` is called with the untouched networks just
    before each update, which lets callers snapshot what the TD error should be.
    """
    hyper = hyper or AcHyperparams()
    critic_init = max_step_reward(env_config) if hyper.optimistic_critic else 0.0
    agent = AcAgent(observation_dim(env_config), N_ACTIONS, hyper, seed, critic_init=critic_init)
    env = GridEnv(env_config)
    history: list[EpisodeStats] = []
    td_log: list[TdDiagnostics] | None = [] if keep_td_log else None
    gamma = hyper.gamma
    for episode in range(hyper.episodes):
        env.reset()
        obs = env.observation()
        action = agent.select_action(obs)
        ret, discount = 0.0, 1.0
        while True:
            out = env.step(action)
            next_obs = env.observation()
            # a step-limit cut is truncation, not a terminal state: keep bootstrapping through it
            terminal = out.terminal_reason is TerminalReason.GOAL
            next_action = 0 if terminal else agent.select_action(next_obs)
            transition = (obs, action, out.reward, next_obs, next_action, terminal)
            if before_update is not None:
                before_update(agent, transition)
            try:
                diag = agent.update(*transition)
            except NonFiniteError as exc:
                raise NonFiniteError(f"episode {episode}, step {env.state.steps_taken}: {exc}") from exc
            if td_log is not None:
                td_log.append(diag)
            ret += discount * out.reward
            discount *= gamma
            if out.done:
                break
            obs, action = next_obs, next_action
        s = env.state
        history.append(EpisodeStats(episode, ret, s.steps_taken, s.handovers, s.terminal_reason is TerminalReason.GOAL))
    return AcTrainResult(agent, history, td_log)
