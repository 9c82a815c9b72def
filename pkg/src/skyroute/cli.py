"""Command-line pipeline: generate-map, train, evaluate, compare.

Every run reads one JSON config (the packaged acceptance scenario by default),
applies flag overrides, and writes the fully resolved config next to its outputs
as ``config.resolved.json``. Passing that file back through ``--config`` repeats
the run exactly.

Exit codes: 0 success, 1 invalid input or config, 2 runtime abort.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .agents import AcHyperparams, DdqnHyperparams, load_agent, train_ac, train_ddqn
from .agents.common import hyper_from_dict, hyper_to_dict, read_learning_curve, write_learning_curve
from .environment import EnvConfig, observation_dim
from .evaluation import compute_metrics, export_artifacts, metrics_to_dict, rollout_greedy, write_json
from .neuralnet import NonFiniteError
from .radiomap import MapGenConfig, generate_synthetic_map, load_map, save_map

AGENTS = ("ac", "ddqn")
RESOLVED_NAME = "config.resolved.json"
ENV_KEYS = (
    "start_cell",
    "goal_cell",
    "max_steps",
    "uav_speed_mps",
    "reward_epsilon",
    "handover_penalty_m",
    "sinr_in_reward",
    "obs_encoding",
)
CONFIG_KEYS = ("seed", "seeds", "out", "map", "map_generator", "env", "agent", "checkpoint", "ac", "ddqn")
COMPARE_COLUMNS = ("average_sinr_db", "handover_count", "distance_covered_km")


class ConfigError(ValueError):
    """Bad config file contents or flag combination."""


class _Parser(argparse.ArgumentParser):
    # usage errors count as validation failures (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def default_config() -> dict:
    text = resources.files("skyroute").joinpath("data/acceptance.json").read_text()
    return json.loads(text)


def load_config(path) -> dict:
    """Read a JSON config; keys it omits fall back to the packaged defaults."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(user) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for key, value in user.items():
        if key in ("env", "ac", "ddqn") and isinstance(value, dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    return cfg


def _cell(text: str) -> list[int]:
    try:
        cx, cy = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'cx,cy', got {text!r}") from None
    return [cx, cy]


def _seed_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    for key in ("seed", "out", "map", "agent", "checkpoint", "seeds"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "episodes", None) is not None:
        cfg["ac"]["episodes"] = args.episodes
        cfg["ddqn"]["episodes"] = args.episodes
    if getattr(args, "start", None) is not None:
        cfg["env"]["start_cell"] = args.start
    if getattr(args, "goal", None) is not None:
        cfg["env"]["goal_cell"] = args.goal
    return cfg


def resolve(cfg: dict) -> dict:
    """Fill every hyperparameter and env field so the file alone reproduces the run."""
    cfg = copy.deepcopy(cfg)
    if cfg.get("agent") not in AGENTS:
        raise ConfigError(f"agent must be one of {AGENTS}, got {cfg.get('agent')!r}")
    for key in ("seed",):
        if not isinstance(cfg.get(key), int) or cfg[key] < 0:
            raise ConfigError(f"{key} must be a non-negative integer")
    if not cfg.get("seeds") or any(not isinstance(s, int) or s < 0 for s in cfg["seeds"]):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    try:
        cfg["ac"] = hyper_to_dict(hyper_from_dict(AcHyperparams, cfg["ac"]))
        cfg["ddqn"] = hyper_to_dict(hyper_from_dict(DdqnHyperparams, cfg["ddqn"]))
        cfg["map_generator"] = MapGenConfig.from_dict(cfg["map_generator"]).to_dict()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(cfg["env"]) - set(ENV_KEYS)
    if unknown:
        raise ConfigError(f"unknown env keys {sorted(unknown)}")
    if cfg["map"] is not None:
        cfg["map"] = str(Path(cfg["map"]))
    if cfg["checkpoint"] is not None:
        cfg["checkpoint"] = str(Path(cfg["checkpoint"]))
    cfg["out"] = str(Path(cfg["out"]))
    return cfg


def build_map(cfg: dict):
    if cfg["map"] is not None:
        path = Path(cfg["map"])
        if not path.is_file():
            raise ConfigError(f"map file not found: {path}")
        return load_map(path)
    return generate_synthetic_map(MapGenConfig.from_dict(cfg["map_generator"]))


def build_env(cfg: dict, radio_map) -> EnvConfig:
    env = dict(cfg["env"])
    env["start_cell"] = tuple(env["start_cell"])
    env["goal_cell"] = tuple(env["goal_cell"])
    return EnvConfig(radio_map, **env)


def _start_run(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(cfg, out / RESOLVED_NAME)
    return out


def _train(agent_kind: str, env_config: EnvConfig, cfg: dict, seed: int):
    if agent_kind == "ac":
        result = train_ac(env_config, hyper_from_dict(AcHyperparams, cfg["ac"]), seed=seed)
    else:
        result = train_ddqn(env_config, hyper_from_dict(DdqnHyperparams, cfg["ddqn"]), seed=seed)
    return result.agent, result.history


def _checkpoint_dict(agent, env_config: EnvConfig) -> dict:
    data = agent.to_dict()
    m = env_config.radio_map
    data["grid"] = [m.width_cells, m.height_cells]
    data["obs_encoding"] = env_config.obs_encoding
    return data


def _load_checkpoint(path, env_config: EnvConfig):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    data = json.loads(path.read_text())
    m = env_config.radio_map
    grid = data.get("grid")
    if grid is not None and list(grid) != [m.width_cells, m.height_cells]:
        raise ConfigError(f"checkpoint was trained on a {grid[0]}x{grid[1]} grid, map is {m.width_cells}x{m.height_cells}")
    if data.get("obs_encoding", env_config.obs_encoding) != env_config.obs_encoding:
        raise ConfigError(f"checkpoint uses obs_encoding {data['obs_encoding']!r}, env uses {env_config.obs_encoding!r}")
    agent = load_agent(path)
    if agent.obs_dim != observation_dim(env_config):
        raise ConfigError(f"checkpoint input width {agent.obs_dim} does not fit this map ({observation_dim(env_config)})")
    return agent


def cmd_generate_map(cfg: dict) -> int:
    gen = MapGenConfig.from_dict({**cfg["map_generator"], "seed": cfg["seed"]})
    gen.validate()
    cfg["map_generator"] = gen.to_dict()
    out = _start_run(cfg)
    radio_map = generate_synthetic_map(gen)
    save_map(radio_map, out / "map.csv")
    best = radio_map.best_sinr_db
    print(f"map: {out / 'map.csv'}")
    print(f"grid {radio_map.width_cells}x{radio_map.height_cells}, cell {radio_map.cell_size_m:g} m, {len(radio_map.gnbs)} gNBs")
    print(f"best SINR range {best.min():.2f} .. {best.max():.2f} dB")
    return 0


def cmd_train(cfg: dict) -> int:
    radio_map = build_map(cfg)
    env_config = build_env(cfg, radio_map)
    out = _start_run(cfg)
    agent, history = _train(cfg["agent"], env_config, cfg, cfg["seed"])
    write_json(_checkpoint_dict(agent, env_config), out / "checkpoint.json")
    write_learning_curve(history, out / "learning_curve.csv")
    reached = sum(h.reached_goal for h in history)
    print(f"trained {cfg['agent']} for {len(history)} episodes (goal reached in {reached})")
    print(f"checkpoint: {out / 'checkpoint.json'}")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    if cfg["checkpoint"] is None:
        raise ConfigError("evaluate needs --checkpoint (or 'checkpoint' in the config)")
    radio_map = build_map(cfg)
    env_config = build_env(cfg, radio_map)
    agent = _load_checkpoint(cfg["checkpoint"], env_config)
    out = _start_run(cfg)
    curve_path = Path(cfg["checkpoint"]).with_name("learning_curve.csv")
    history = read_learning_curve(curve_path) if curve_path.is_file() else None
    trace = rollout_greedy(agent, env_config)
    metrics = compute_metrics(trace, env_config)
    export_artifacts(trace, metrics, history, radio_map, out, env_config)
    for key, value in metrics_to_dict(metrics).items():
        print(f"{key}: {value}")
    return 0


def format_compare_table(rows: dict) -> str:
    header = ("agent",) + COMPARE_COLUMNS
    lines = ["  ".join(f"{h:>20}" for h in header)]
    for name, row in rows.items():
        lines.append("  ".join([f"{name:>20}"] + [f"{row[c]!r:>20}" for c in COMPARE_COLUMNS]))
    return "\n".join(lines)


def cmd_compare(cfg: dict) -> int:
    radio_map = build_map(cfg)
    env_config = build_env(cfg, radio_map)
    out = _start_run(cfg)
    per_seed = {name: [] for name in AGENTS}
    for seed in cfg["seeds"]:
        for name in AGENTS:
            agent, history = _train(name, env_config, cfg, seed)
            trace = rollout_greedy(agent, env_config)
            metrics = compute_metrics(trace, env_config)
            export_artifacts(trace, metrics, history, radio_map, out / f"seed{seed}", env_config, prefix=f"{name}_")
            per_seed[name].append(metrics_to_dict(metrics, trace=trace))
    rows = {
        name: {c: float(np.mean([m[c] for m in runs])) for c in COMPARE_COLUMNS} | {
            "reached_goal_fraction": float(np.mean([m["reached_goal"] for m in runs]))
        }
        for name, runs in per_seed.items()
    }
    write_json({"seeds": cfg["seeds"], "rows": rows, "per_seed": per_seed}, out / "compare.json")
    table = format_compare_table(rows)
    (out / "compare.txt").write_text(table + "\n")
    print(table)
    return 0


COMMANDS = {
    "generate-map": cmd_generate_map,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skyroute", description="UAV route learning over synthetic mmWave SINR maps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config (defaults to the packaged acceptance scenario)")
        p.add_argument("--seed", type=int, help="run seed (map seed for generate-map)")
        p.add_argument("--out", help="output directory")
        if name != "generate-map":
            p.add_argument("--map", help="map CSV; omit to generate from the config's map_generator")
            p.add_argument("--start", type=_cell, help="start cell as cx,cy")
            p.add_argument("--goal", type=_cell, help="goal cell as cx,cy")
        if name in ("train", "compare"):
            p.add_argument("--episodes", type=int, help="training episodes for every agent")
        if name == "train":
            p.add_argument("--agent", choices=AGENTS)
        if name == "evaluate":
            p.add_argument("--checkpoint", help="checkpoint written by train")
        if name == "compare":
            p.add_argument("--seeds", type=_seed_list, help="comma-separated seeds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(apply_overrides(load_config(args.config), args))
        return COMMANDS[args.command](cfg)
    except (ValueError, KeyError) as exc:
        # ConfigError, map format/validation errors and bad hyperparameters all land here
        print(f"skyroute {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteError, OSError) as exc:
        print(f"skyroute {args.command}: aborted: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
