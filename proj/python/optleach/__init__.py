"""Clustered wireless sensor network simulator."""

import json

from . import _core
from ._core import (
    CfTree,
    ConfigError,
    Dbn,
    NotReady,
    RbmLayer,
    SetupError,
    Simulation,
    VisibleKind,
    ch_threshold,
    classify_event,
    cluster_radius,
    event_benchmark,
    evaluate_pipelines,
    fine_tune,
    heuristic,
    least_cost_routes,
    link_cost,
    monitoring_dispatch,
    run_aco,
    rx_energy,
    train_dbn,
    transition_probabilities,
    tx_energy,
    voronoi_partition,
)

__version__ = "0.1.0"


def default_config():
    return json.loads(_core.default_config())


def run_simulation(config=None, **overrides):
    """Run one scenario. `config` is a dict or JSON string mirroring the CLI config."""
    if isinstance(config, dict):
        config = json.dumps(config)
    return _core.run_simulation(config or "", **overrides)
