"""Pooling of small grid-connected assets under geographic circle caps.

Public surface: planar constraint-set construction (:mod:`fcrpool.geometry`),
the pool scheduling model with an exact solver (:mod:`fcrpool.model`), the
three-block consensus solver (:mod:`fcrpool.admm`), its message-passing
runtime (:mod:`fcrpool.agents`), data ingestion and synthetic scenes
(:mod:`fcrpool.ingest`), and the ``fcrpool`` command line (:mod:`fcrpool.cli`).
"""

from .admm import AdmmParams, AdmmState, SolveReport
from .geometry import (
    DEFAULT_RADIUS,
    CircleFamily,
    CircleSet,
    ConnectionPoint,
    build_circle_family,
    neighbors_within,
    restrict_family,
    smallest_enclosing_circle,
    two_circle_centers,
)
from .ingest import ExperimentSpec, SyntheticSpec, build_scenario, generate_points, load_points
from .model import (
    DEFAULT_CIRCLE_CAP,
    DEFAULT_POWER_CAP,
    Scenario,
    Solution,
    check_feasible,
    max_usable_capacity,
    monte_carlo_usable_fraction,
    objective_value,
    solve_exact,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmParams",
    "AdmmState",
    "CircleFamily",
    "CircleSet",
    "ConnectionPoint",
    "DEFAULT_CIRCLE_CAP",
    "DEFAULT_POWER_CAP",
    "DEFAULT_RADIUS",
    "ExperimentSpec",
    "Scenario",
    "Solution",
    "SolveReport",
    "SyntheticSpec",
    "build_circle_family",
    "build_scenario",
    "check_feasible",
    "generate_points",
    "load_points",
    "max_usable_capacity",
    "monte_carlo_usable_fraction",
    "neighbors_within",
    "objective_value",
    "restrict_family",
    "smallest_enclosing_circle",
    "solve_exact",
    "two_circle_centers",
]
