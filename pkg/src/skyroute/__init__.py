"""Route learning for cellular-connected UAVs over gridded mmWave SINR maps."""
from .environment import Action, EnvConfig, GridEnv, TerminalReason
from .evaluation import TrajectoryMetrics, compute_metrics, rollout_greedy
from .planning import distance_only_config, value_iteration
from .radiomap import GnbSite, MapGenConfig, RadioMap, generate_synthetic_map, load_map, reference_layout_config, save_map

__version__ = "0.1.0"

__all__ = [
    "Action",
    "EnvConfig",
    "GridEnv",
    "TerminalReason",
    "TrajectoryMetrics",
    "compute_metrics",
    "rollout_greedy",
    "distance_only_config",
    "value_iteration",
    "GnbSite",
    "MapGenConfig",
    "RadioMap",
    "generate_synthetic_map",
    "load_map",
    "reference_layout_config",
    "save_map",
]
