"""Grid-world MDP for a UAV flying cell to cell over a RadioMap."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .radiomap import RadioMap


class Action(enum.IntEnum):
    EAST = 0
    WEST = 1
    NORTH = 2
    SOUTH = 3


N_ACTIONS = len(Action)
MOVES = {
    Action.EAST: (1, 0),
    Action.WEST: (-1, 0),
    Action.NORTH: (0, 1),
    Action.SOUTH: (0, -1),
}


OBS_ENCODINGS = ("scaled", "axis_onehot", "cell_onehot")


class TerminalReason(str, enum.Enum):
    NONE = "none"
    GOAL = "goal"
    STEP_LIMIT = "step_limit"


class EpisodeDoneError(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


@dataclass(frozen=True)
class EnvConfig:
    """Episode definition over a map.

    ``sinr_in_reward=False`` holds the SINR term of the reward at 1 everywhere, which
    turns the task into a pure distance/handover problem (used for baselines).
    ``handover_penalty_m=None`` charges one cell size per handover.
    """

    radio_map: RadioMap
    start_cell: tuple[int, int]
    goal_cell: tuple[int, int]
    max_steps: int | None = None
    uav_speed_mps: float = 10.0
    reward_epsilon: float = 1.0
    handover_penalty_m: float | None = None
    sinr_in_reward: bool = True
    # how a position is fed to the networks, see observation_encoding
    obs_encoding: str = "axis_onehot"

    def __post_init__(self):
        m = self.radio_map
        start = tuple(int(v) for v in self.start_cell)
        goal = tuple(int(v) for v in self.goal_cell)
        object.__setattr__(self, "start_cell", start)
        object.__setattr__(self, "goal_cell", goal)
        if not m.in_range(*start):
            raise ValueError(f"start_cell {start} outside the {m.width_cells}x{m.height_cells} grid")
        if not m.in_range(*goal):
            raise ValueError(f"goal_cell {goal} outside the {m.width_cells}x{m.height_cells} grid")
        if start == goal:
            raise ValueError("start_cell and goal_cell must differ")
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", 4 * (m.width_cells + m.height_cells))
        manhattan = abs(start[0] - goal[0]) + abs(start[1] - goal[1])
        if self.max_steps < manhattan:
            raise ValueError(f"max_steps={self.max_steps} is below the start-goal Manhattan distance {manhattan}")
        if self.uav_speed_mps <= 0:
            raise ValueError("uav_speed_mps must be positive")
        if self.reward_epsilon <= 0:
            raise ValueError("reward_epsilon must be positive")
        if self.obs_encoding not in OBS_ENCODINGS:
            raise ValueError(f"obs_encoding must be one of {OBS_ENCODINGS}")
        if self.handover_penalty_m is None:
            object.__setattr__(self, "handover_penalty_m", float(m.cell_size_m))

    @property
    def step_duration_s(self) -> float:
        """Time to fly between two neighbouring cell centres at constant speed."""
        return self.radio_map.cell_size_m / self.uav_speed_mps

    @property
    def sinr_offset_db(self) -> float:
        # shift so the reward numerator is >= 1 on every cell of the map
        return 1.0 - self.radio_map.min_best_sinr_db

    def sinr_term(self, sinr_db: float) -> float:
        if not self.sinr_in_reward:
            return 1.0
        return sinr_db + self.sinr_offset_db

    def distance_to_goal_m(self, cell: tuple[int, int]) -> float:
        dx = (cell[0] - self.goal_cell[0]) * self.radio_map.cell_size_m
        dy = (cell[1] - self.goal_cell[1]) * self.radio_map.cell_size_m
        return math.hypot(dx, dy)

    def with_(self, **changes) -> "EnvConfig":
        return replace(self, **changes)


def shaped_reward(sinr_term: float, distance_m: float, handover: bool, handover_penalty_m: float, epsilon_m: float) -> float:
    """SINR over (distance + handover penalty + epsilon)."""
    return sinr_term / (distance_m + (handover_penalty_m if handover else 0.0) + epsilon_m)


def max_step_reward(config: EnvConfig) -> float:
    """Upper bound on any single reward: best SINR term over the smallest denominator."""
    best = max(config.sinr_term(float(v)) for v in config.radio_map.best_sinr_db.ravel())
    return best / config.reward_epsilon


@dataclass
class EnvState:
    position: tuple[int, int]
    serving_gnb: int
    steps_taken: int = 0
    done: bool = False
    handovers: int = 0
    terminal_reason: TerminalReason = TerminalReason.NONE


@dataclass(frozen=True)
class StepOutcome:
    next_observation: tuple[int, int]
    reward: float
    sinr_db: float
    sinr_term: float
    handover: bool
    serving_gnb: int
    distance_to_goal_m: float
    done: bool
    terminal_reason: TerminalReason
    action: Action


@dataclass(frozen=True)
class Transition:
    """Deterministic result of one move, independent of episode bookkeeping."""

    next_cell: tuple[int, int]
    reward: float
    sinr_db: float
    sinr_term: float
    handover: bool
    serving_gnb: int
    distance_to_goal_m: float
    reached_goal: bool


def move(cell: tuple[int, int], action: int, width: int, height: int) -> tuple[int, int]:
    dx, dy = MOVES[Action(action)]
    return min(max(cell[0] + dx, 0), width - 1), min(max(cell[1] + dy, 0), height - 1)


def transition(config: EnvConfig, cell: tuple[int, int], action: int) -> Transition:
    m = config.radio_map
    nxt = move(cell, action, m.width_cells, m.height_cells)
    serving = int(m.serving_gnb[nxt])
    handover = serving != int(m.serving_gnb[cell])
    sinr = float(m.best_sinr_db[nxt])
    term = config.sinr_term(sinr)
    d = config.distance_to_goal_m(nxt)
    reward = shaped_reward(term, d, handover, config.handover_penalty_m, config.reward_epsilon)
    return Transition(nxt, reward, sinr, term, handover, serving, d, nxt == config.goal_cell)


def observation_dim(config: EnvConfig) -> int:
    w, h = config.radio_map.width_cells, config.radio_map.height_cells
    return {"scaled": 2, "axis_onehot": w + h, "cell_onehot": w * h}[config.obs_encoding]


def observation_encoding(position: tuple[int, int], config: EnvConfig) -> np.ndarray:
    """Feature vector for a grid position.

    ``scaled``: ``(cx, cy)`` scaled to ``[0, 1]^2``. ``axis_onehot``: one-hot column
    index followed by one-hot row index. ``cell_onehot``: one-hot cell index
    ``cx * height + cy``.
    """
    w, h = config.radio_map.width_cells, config.radio_map.height_cells
    cx, cy = position
    if config.obs_encoding == "scaled":
        return np.array([cx / max(w - 1, 1), cy / max(h - 1, 1)], dtype=np.float64)
    out = np.zeros(observation_dim(config))
    if config.obs_encoding == "axis_onehot":
        out[cx] = 1.0
        out[w + cy] = 1.0
    else:
        out[cx * h + cy] = 1.0
    return out


def decode_observation(obs, config: EnvConfig) -> tuple[int, int]:
    """Inverse of observation_encoding."""
    w, h = config.radio_map.width_cells, config.radio_map.height_cells
    obs = np.asarray(obs, dtype=np.float64)
    if config.obs_encoding == "scaled":
        return int(round(obs[0] * max(w - 1, 1))), int(round(obs[1] * max(h - 1, 1)))
    if config.obs_encoding == "axis_onehot":
        return int(np.argmax(obs[:w])), int(np.argmax(obs[w:]))
    return divmod(int(np.argmax(obs)), h)


@dataclass
class GridEnv:
    config: EnvConfig
    state: EnvState = field(init=False)

    def __post_init__(self):
        self.reset()

    @property
    def radio_map(self) -> RadioMap:
        return self.config.radio_map

    def reset(self) -> EnvState:
        start = self.config.start_cell
        self.state = EnvState(position=start, serving_gnb=int(self.radio_map.serving_gnb[start]))
        return replace(self.state)

    def observation(self) -> np.ndarray:
        return observation_encoding(self.state.position, self.config)

    def step(self, action: int) -> StepOutcome:
        s = self.state
        if s.done:
            raise EpisodeDoneError("episode already finished; call reset()")
        action = Action(action)
        tr = transition(self.config, s.position, action)
        s.position = tr.next_cell
        s.serving_gnb = tr.serving_gnb
        s.steps_taken += 1
        s.handovers += int(tr.handover)
        if tr.reached_goal:
            s.done, s.terminal_reason = True, TerminalReason.GOAL
        elif s.steps_taken >= self.config.max_steps:
            s.done, s.terminal_reason = True, TerminalReason.STEP_LIMIT
        return StepOutcome(
            next_observation=tr.next_cell,
            reward=tr.reward,
            sinr_db=tr.sinr_db,
            sinr_term=tr.sinr_term,
            handover=tr.handover,
            serving_gnb=tr.serving_gnb,
            distance_to_goal_m=tr.distance_to_goal_m,
            done=s.done,
            terminal_reason=s.terminal_reason,
            action=action,
        )
