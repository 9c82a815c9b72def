from .actor_critic import AcAgent, AcHyperparams, AcTrainResult, TdDiagnostics, train_ac
from .common import EpisodeStats, read_learning_curve, write_learning_curve
from .ddqn import DdqnAgent, DdqnHyperparams, DdqnTrainResult, ReplayBuffer, double_q_targets, train_ddqn

__all__ = [
    "AcAgent",
    "AcHyperparams",
    "AcTrainResult",
    "TdDiagnostics",
    "train_ac",
    "EpisodeStats",
    "read_learning_curve",
    "write_learning_curve",
    "DdqnAgent",
    "DdqnHyperparams",
    "DdqnTrainResult",
    "ReplayBuffer",
    "double_q_targets",
    "train_ddqn",
    "load_agent",
]


def load_agent(path):
    """Load an AC or DDQN checkpoint written by ``agent.save``."""
    import json
    from pathlib import Path

    data = json.loads(Path(path).read_text())
    kind = data.get("kind")
    if kind == "ac":
        return AcAgent.from_dict(data)
    if kind == "ddqn":
        return DdqnAgent.from_dict(data)
    raise ValueError(f"{path}: unknown checkpoint kind {kind!r}")
