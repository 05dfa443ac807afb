"""Learned capacitated vehicle routing with a hybrid quantum-classical policy."""

from .config import ExperimentConfig, load_config, resolve_config
from .core import (
    Instance,
    Route,
    SolutionReport,
    generate_instance,
    optimality_gap,
    read_instances,
    route_length,
    validate_solution,
    write_instances,
)
from .model import build_model, classical_reference, count_parameters, init_parameters

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "Instance",
    "Route",
    "SolutionReport",
    "build_model",
    "classical_reference",
    "count_parameters",
    "generate_instance",
    "init_parameters",
    "load_config",
    "optimality_gap",
    "read_instances",
    "resolve_config",
    "route_length",
    "validate_solution",
    "write_instances",
    "__version__",
]
