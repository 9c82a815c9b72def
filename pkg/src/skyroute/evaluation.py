"""Greedy rollouts, trajectory metrics and CSV/JSON export."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agents.common import write_learning_curve
from .environment import EnvConfig, GridEnv, TerminalReason
from .radiomap import RadioMap

TRAJECTORY_HEADER = ("step", "cx", "cy", "sinr_db", "serving_gnb", "handover", "distance_to_goal_m", "reward")
HEATMAP_HEADER = ("cx", "cy", "best_sinr_db", "serving_gnb")


@dataclass(frozen=True)
class TraceStep:
    step: int
    cell: tuple[int, int]
    action: int
    reward: float
    sinr_db: float
    serving_gnb: int
    handover: bool
    distance_to_goal_m: float


@dataclass
class EpisodeTrace:
    start_cell: tuple[int, int]
    start_serving_gnb: int
    steps: list[TraceStep] = field(default_factory=list)
    terminal_reason: TerminalReason = TerminalReason.NONE

    def __len__(self):
        return len(self.steps)

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [self.start_cell] + [s.cell for s in self.steps]


@dataclass(frozen=True)
class TrajectoryMetrics:
    average_sinr_db: float
    handover_count: int
    distance_covered_km: float
    reached_goal: bool
    steps: int


def rollout_greedy(policy, env_config: EnvConfig) -> EpisodeTrace:
    """Run ``policy.greedy_action(obs)`` from the start cell until the episode ends."""
    env = GridEnv(env_config)
    state = env.reset()
    trace = EpisodeTrace(state.position, state.serving_gnb)
    while not env.state.done:
        action = int(policy.greedy_action(env.observation()))
        out = env.step(action)
        trace.steps.append(
            TraceStep(
                env.state.steps_taken,
                out.next_observation,
                action,
                out.reward,
                out.sinr_db,
                out.serving_gnb,
                out.handover,
                out.distance_to_goal_m,
            )
        )
    trace.terminal_reason = env.state.terminal_reason
    return trace


def discounted_return(trace: EpisodeTrace, gamma: float) -> float:
    return sum(gamma**i * s.reward for i, s in enumerate(trace.steps))


def _metrics_from_rows(start_cell, cells, sinrs, handovers, reached_goal, cell_size_m) -> TrajectoryMetrics:
    if not cells:
        raise ValueError("cannot compute metrics of an empty trace")
    path = [tuple(start_cell)] + [tuple(c) for c in cells]
    moves = sum(1 for a, b in zip(path[:-1], path[1:]) if a != b)
    return TrajectoryMetrics(
        average_sinr_db=float(np.mean(sinrs)),
        handover_count=int(sum(bool(h) for h in handovers)),
        distance_covered_km=moves * cell_size_m / 1000.0,
        reached_goal=bool(reached_goal),
        steps=len(cells),
    )


def compute_metrics(trace: EpisodeTrace, config: EnvConfig) -> TrajectoryMetrics:
    """Mean per-step SINR (plain dB average), handovers, flown distance, goal flag."""
    return _metrics_from_rows(
        trace.start_cell,
        [s.cell for s in trace.steps],
        [s.sinr_db for s in trace.steps],
        [s.handover for s in trace.steps],
        trace.terminal_reason == TerminalReason.GOAL,
        config.radio_map.cell_size_m,
    )


def metrics_to_dict(metrics: TrajectoryMetrics, config: EnvConfig | None = None, trace: EpisodeTrace | None = None) -> dict:
    out = asdict(metrics)
    if config is not None:
        out["start_cell"] = list(config.start_cell)
        out["goal_cell"] = list(config.goal_cell)
        out["cell_size_m"] = config.radio_map.cell_size_m
    if trace is not None:
        out["terminal_reason"] = trace.terminal_reason.value
    return out


def write_trajectory_csv(trace: EpisodeTrace, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for s in trace.steps:
            w.writerow(
                [
                    s.step,
                    s.cell[0],
                    s.cell[1],
                    repr(s.sinr_db),
                    s.serving_gnb,
                    int(s.handover),
                    repr(s.distance_to_goal_m),
                    repr(s.reward),
                ]
            )


def read_trajectory_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "step": int(r["step"]),
            "cell": (int(r["cx"]), int(r["cy"])),
            "sinr_db": float(r["sinr_db"]),
            "serving_gnb": int(r["serving_gnb"]),
            "handover": bool(int(r["handover"])),
            "distance_to_goal_m": float(r["distance_to_goal_m"]),
            "reward": float(r["reward"]),
        }
        for r in rows
    ]


def metrics_from_exports(trajectory_csv, metrics_json) -> TrajectoryMetrics:
    """Recompute metrics from an exported trajectory plus the start/goal recorded in its JSON."""
    rows = read_trajectory_csv(trajectory_csv)
    meta = json.loads(Path(metrics_json).read_text())
    goal = tuple(meta["goal_cell"])
    return _metrics_from_rows(
        meta["start_cell"],
        [r["cell"] for r in rows],
        [r["sinr_db"] for r in rows],
        [r["handover"] for r in rows],
        bool(rows) and rows[-1]["cell"] == goal,
        meta["cell_size_m"],
    )


def write_heatmap_csv(radio_map: RadioMap, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEATMAP_HEADER)
        for cx in range(radio_map.width_cells):
            for cy in range(radio_map.height_cells):
                w.writerow([cx, cy, repr(float(radio_map.best_sinr_db[cx, cy])), int(radio_map.serving_gnb[cx, cy])])


def write_json(data, path):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def export_artifacts(trace, metrics, reward_history, radio_map, out_dir, config: EnvConfig | None = None, prefix: str = "") -> dict:
    """Write trajectory, metrics, learning-curve and heat-grid files; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out / f"{prefix}trajectory.csv",
        "metrics": out / f"{prefix}metrics.json",
        "learning_curve": out / f"{prefix}learning_curve.csv",
        "heatmap": out / f"{prefix}heatmap.csv",
    }
    try:
        write_trajectory_csv(trace, paths["trajectory"])
        write_json(metrics_to_dict(metrics, config, trace), paths["metrics"])
        if reward_history is not None:
            write_learning_curve(reward_history, paths["learning_curve"])
        else:
            del paths["learning_curve"]
        write_heatmap_csv(radio_map, paths["heatmap"])
    except OSError as exc:
        raise OSError(f"failed writing artifacts under {out}: {exc}") from exc
    return paths
