"""Change-gated global replanning on occupancy-grid costmaps."""

from .dstar_lite import DStarLite
from .errors import (
    DimensionMismatchError,
    InternalInconsistencyError,
    InvalidEndpointError,
    MapFormatError,
    PlanningError,
    ReplanKitError,
    ScenarioError,
    UnreachableGoalError,
)
from .gridmap import Cell, ChangedCell, Costmap, CostmapDelta, cost_diff, inflate, load_map, neighbors
from .planners import Plan, SearchStats, a_star, dijkstra, octile_heuristic
from .replanner import PlannerMemory, PlanRequest, RequestOutcome, calculate_plan, make_plan
from .sim import ObstacleEvent, RunMetrics, Scenario, load_scenario, run_scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "Cell", "ChangedCell", "Costmap", "CostmapDelta", "DStarLite", "DimensionMismatchError",
    "InternalInconsistencyError", "InvalidEndpointError", "MapFormatError", "ObstacleEvent", "Plan",
    "PlanRequest", "PlannerMemory", "PlanningError", "ReplanKitError", "RequestOutcome", "RunMetrics",
    "Scenario", "ScenarioError", "SearchStats", "UnreachableGoalError", "a_star", "calculate_plan",
    "cost_diff", "dijkstra", "inflate", "load_map", "load_scenario", "make_plan", "neighbors",
    "octile_heuristic", "run_scenario", "simulate",
]
