from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

CURVE_HEADER = ("episode", "total_discounted_reward", "steps", "handovers", "reached_goal")


@dataclass(frozen=True)
class EpisodeStats:
    episode: int
    total_discounted_reward: float
    steps: int
    handovers: int
    reached_goal: bool


def write_learning_curve(history, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for h in history:
            w.writerow([h.episode, repr(h.total_discounted_reward), h.steps, h.handovers, int(h.reached_goal)])


def read_learning_curve(path) -> list[EpisodeStats]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EpisodeStats(
            int(r["episode"]),
            float(r["total_discounted_reward"]),
            int(r["steps"]),
            int(r["handovers"]),
            bool(int(r["reached_goal"])),
        )
        for r in rows
    ]


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)


def hyper_to_dict(h) -> dict:
    out = {}
    for f in fields(h):
        v = getattr(h, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def hyper_from_dict(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return cls(**data)
