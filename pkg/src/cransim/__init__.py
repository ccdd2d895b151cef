"""Deterministic desk-scale simulator for a container-orchestrated C-RAN:
ordered/unique scaling of baseband and radio-head pods, registry-based
discovery with radio-head-first startup, per-node pod addressing and
routing, resource metering, fronthaul throughput accounting, and
metric-driven autoscaling."""

__version__ = "0.1.0"

from .kernel import Simulation
from .registry import Registry
from .scenario import ScenarioConfig, TEMPLATES, load_scenario, save_scenario

__all__ = [
    "Registry",
    "ScenarioConfig",
    "Simulation",
    "TEMPLATES",
    "load_scenario",
    "save_scenario",
    "__version__",
]
