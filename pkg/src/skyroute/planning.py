"""Exact tabular planning over the grid MDP (used as an optimality oracle and baseline)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import N_ACTIONS, EnvConfig, decode_observation, transition


@dataclass(frozen=True)
class TabularPolicy:
    """Greedy table ``actions[cx, cy]`` exposed through the same interface as the agents."""

    actions: np.ndarray
    values: np.ndarray
    config: EnvConfig

    def action_at(self, cell) -> int:
        return int(self.actions[cell])

    def greedy_action(self, obs) -> int:
        return self.action_at(decode_observation(obs, self.config))


def value_iteration(config: EnvConfig, gamma: float = 0.96, tol: float = 1e-12, max_iter: int = 100_000) -> TabularPolicy:
    """Optimal discounted values with the goal cell absorbing (episode ends on arrival).

    The step limit is ignored, so the result is exact whenever the optimal route
    fits inside ``max_steps``. Ties between actions go to the lowest action index.
    """
    m = config.radio_map
    w, h = m.width_cells, m.height_cells
    nxt = np.zeros((w, h, N_ACTIONS, 2), dtype=np.int64)
    reward = np.zeros((w, h, N_ACTIONS))
    terminal = np.zeros((w, h, N_ACTIONS), dtype=bool)
    for cx in range(w):
        for cy in range(h):
            for a in range(N_ACTIONS):
                tr = transition(config, (cx, cy), a)
                nxt[cx, cy, a] = tr.next_cell
                reward[cx, cy, a] = tr.reward
                terminal[cx, cy, a] = tr.reached_goal
    cont = gamma * ~terminal
    values = np.zeros((w, h))
    for _ in range(max_iter):
        q = reward + cont * values[nxt[..., 0], nxt[..., 1]]
        new = q.max(axis=2)
        new[config.goal_cell] = 0.0
        delta = np.max(np.abs(new - values))
        values = new
        if delta < tol:
            break
    q = reward + cont * values[nxt[..., 0], nxt[..., 1]]
    return TabularPolicy(np.argmax(q, axis=2), values, config)


def distance_only_config(config: EnvConfig) -> EnvConfig:
    """Same episode with the SINR term of the reward held constant."""
    return config.with_(sinr_in_reward=False)
