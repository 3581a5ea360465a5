"""Centralized and distributed Kalman filtering on networks of output-coupled
LTI subsystems, with tools to measure and bound how far the distributed
estimates are from the centralized ones.
"""

from .bounds import (
    BoundReport,
    GapTrajectory,
    compute_bound_report,
    covariance_gap_trajectory,
    error_dynamics_step,
    estimate_gap_monte_carlo,
    stability_check,
    steady_state_covariance,
)
from .central import GaussianBelief, central_predict, central_run, central_update
from .config import load_config, parse_config, serialize_config
from .distributed import (
    MeasurementBroadcast,
    NodeFilterState,
    distributed_run,
    network_step,
    node_predict,
    node_update,
)
from .errors import NetKFError
from .netmodel import AggregatedModel, NetworkModel, SubsystemModel, aggregate, build_network
from .riemann import riemannian_distance
from .simulate import SimConfig, Trajectory, default_five_agent_network, simulate

__version__ = "0.1.0"

__all__ = [
    "AggregatedModel", "BoundReport", "GapTrajectory", "GaussianBelief", "MeasurementBroadcast",
    "NetKFError", "NetworkModel", "NodeFilterState", "SimConfig", "SubsystemModel", "Trajectory",
    "aggregate", "build_network", "central_predict", "central_run", "central_update",
    "compute_bound_report", "covariance_gap_trajectory", "default_five_agent_network",
    "distributed_run", "error_dynamics_step", "estimate_gap_monte_carlo", "load_config",
    "network_step", "node_predict", "node_update", "parse_config", "riemannian_distance",
    "serialize_config", "simulate", "stability_check", "steady_state_covariance",
]
