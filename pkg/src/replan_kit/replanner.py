"""Change-gated plan service.

Every plan request is routed one of three ways:

* the goal changed (or there is no memory yet): plan from scratch;
* the goal is unchanged and the costmap changed beyond the noise threshold:
  push the changed cells into the backend and let it repair its plan;
* nothing changed: hand back the remainder of the previous plan, starting
  from the plan cell nearest to the robot, without searching at all.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Literal, Protocol

import numpy as np

from .dstar_lite import DStarLite
from .errors import PlanningError, ReplanKitError
from .gridmap import Cell, Costmap, CostmapDelta, cost_diff
from .planners import PLANNERS, Plan, SearchStats

FRESH_PLAN = "fresh_plan"
INCREMENTAL_REPLAN = "incremental_replan"
SUFFIX_REUSE = "suffix_reuse"
FAILURE = "failure"
OUTCOME_KINDS = (FRESH_PLAN, INCREMENTAL_REPLAN, SUFFIX_REUSE, FAILURE)

PROPOSED = "proposed"
ALWAYS_REPLAN = "always_replan"
GATINGS = (PROPOSED, ALWAYS_REPLAN)

BACKENDS = ("dijkstra", "a_star", "dstar_lite")


class Backend(Protocol):
    name: str

    def plan_from_scratch(self, costmap: Costmap, start: Cell, goal: Cell) -> tuple[Plan, SearchStats]: ...

    def move_start(self, start: Cell) -> None: ...

    def update_node(self, cell: Cell, new_cost: int) -> None: ...

    def replan(self, start: Cell) -> tuple[Plan, SearchStats]: ...


class DStarLiteBackend:
    name = "dstar_lite"

    def __init__(self):
        self.state: DStarLite | None = None

    def plan_from_scratch(self, costmap, start, goal):
        t0 = time.perf_counter()
        state = DStarLite(costmap, start, goal)
        plan, stats = state.compute_shortest_path(start)
        # Committed only on success so a failed goal switch keeps the old session.
        self.state = state
        return plan, SearchStats(stats.expansions, stats.queue_peak, time.perf_counter() - t0)

    def _require_state(self) -> DStarLite:
        if self.state is None:
            raise ReplanKitError("backend has no search state; plan from scratch first")
        return self.state

    def move_start(self, start):
        self._require_state().move_start(start)

    def update_node(self, cell, new_cost):
        self._require_state().update_node(cell, new_cost)

    def replan(self, start):
        return self._require_state().replan(start)


class StaticBackend:
    """Adapts a from-scratch planner to the incremental backend interface.

    ``update_node`` only records the new cost and marks the backend dirty;
    ``replan`` then runs the wrapped planner over the whole current map.
    """

    def __init__(self, planner: Callable[[Costmap, Cell, Cell], tuple[Plan, SearchStats]], name: str):
        self.planner = planner
        self.name = name
        self._costs = None
        self._template: Costmap | None = None
        self._goal: Cell | None = None
        self._dirty = False
        self._last: tuple[Cell, Plan] | None = None

    def plan_from_scratch(self, costmap, start, goal):
        plan, stats = self.planner(costmap, start, goal)
        self._template = costmap
        self._costs = costmap.costs.copy()
        self._goal = Cell(*goal)
        self._dirty = False
        self._last = (Cell(*start), plan)
        return plan, stats

    def move_start(self, start):
        pass

    def update_node(self, cell, new_cost):
        if self._costs is None:
            raise ReplanKitError("backend has no map; plan from scratch first")
        self._costs[cell[0], cell[1]] = new_cost
        self._dirty = True

    def replan(self, start):
        if self._template is None:
            raise ReplanKitError("backend has no map; plan from scratch first")
        start = Cell(*start)
        if not self._dirty and self._last is not None and self._last[0] == start:
            return self._last[1], SearchStats()
        current = Costmap(self._costs, self._template.resolution, self._template.lethal_threshold)
        plan, stats = self.planner(current, start, self._goal)
        self._dirty = False
        self._last = (start, plan)
        return plan, stats


def static_backend_wrapper(planner: str) -> StaticBackend:
    return StaticBackend(PLANNERS[planner], planner)


def make_backend(name: str) -> Backend:
    if name == "dstar_lite":
        return DStarLiteBackend()
    if name in PLANNERS:
        return static_backend_wrapper(name)
    raise ValueError(f"unknown planner {name!r}; expected one of {BACKENDS}")


@dataclass(frozen=True)
class PlanRequest:
    start: Cell
    goal: Cell
    costmap: Costmap

    def to_json(self, costmap_ref=None) -> dict:
        return {
            "start": list(self.start),
            "goal": list(self.goal),
            "costmap_ref": costmap_ref,
        }


@dataclass(frozen=True)
class RequestOutcome:
    kind: str
    planning_time: float
    expansions: int
    plan_length: float
    plan: Plan | None = None
    error: str | None = None

    def to_json(self) -> dict:
        out = {
            "outcome": self.kind,
            "plan": self.plan.to_json() if self.plan is not None else None,
            "planning_time": self.planning_time,
            "expansions": self.expansions,
        }
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class PlannerMemory:
    """Everything the service keeps between requests of one session."""

    backend: Backend
    noise_threshold: int = 0
    gating: Literal["proposed", "always_replan"] = PROPOSED
    previous_goal: Cell | None = None
    previous_plan: Plan | None = None
    previous_costmap: Costmap | None = None
    last_delta: CostmapDelta | None = None
    stats_log: list[RequestOutcome] = field(default_factory=list)

    @classmethod
    def for_planner(cls, planner: str, noise_threshold: int = 0, gating: str = PROPOSED) -> PlannerMemory:
        if gating not in GATINGS:
            raise ValueError(f"unknown gating {gating!r}; expected one of {GATINGS}")
        return cls(make_backend(planner), noise_threshold, gating)


def closest_index(plan: Plan | list, position: tuple[int, int]) -> int:
    """Lowest index of the plan cell nearest (Euclidean) to ``position``."""
    arr = plan.array if isinstance(plan, Plan) else np.asarray(plan, dtype=np.int64).reshape(-1, 2)
    if not len(arr):
        raise ValueError("closest_index of an empty plan")
    d = ((arr - np.asarray(position, dtype=np.int64)) ** 2).sum(axis=1)
    # argmin returns the first minimum, i.e. the lowest index on ties.
    return int(np.argmin(d))


def calculate_plan(memory: PlannerMemory, req: PlanRequest) -> tuple[Plan, SearchStats, str]:
    """Same-goal branch: repair on a costmap change, otherwise reuse a suffix.

    Returns the plan, the backend statistics and the outcome kind. Memory
    bookkeeping is left to :func:`make_plan`.
    """
    if memory.previous_plan is None or memory.previous_costmap is None:
        raise ReplanKitError("calculate_plan needs a previous plan and costmap")
    delta = cost_diff(req.costmap, memory.previous_costmap, memory.noise_threshold)
    memory.last_delta = delta
    if delta:
        backend = memory.backend
        backend.move_start(req.start)
        for change in delta.changed:
            backend.update_node(change.cell, change.new_cost)
        plan, stats = backend.replan(req.start)
        return plan, stats, INCREMENTAL_REPLAN
    k = closest_index(memory.previous_plan, req.start)
    return memory.previous_plan.suffix(k, req.costmap.resolution), SearchStats(), SUFFIX_REUSE


def make_plan(memory: PlannerMemory, req: PlanRequest) -> Plan:
    """Serve one plan request, updating ``memory``.

    The request's costmap always becomes the stored previous costmap, even if
    planning fails. On failure the previous plan and goal are kept, a failure
    outcome is logged and the planning error is re-raised.
    """
    start, goal = Cell(*req.start), Cell(*req.goal)
    req = PlanRequest(start, goal, req.costmap)
    t0 = time.perf_counter()
    try:
        if memory.gating == ALWAYS_REPLAN or memory.previous_goal != goal:
            memory.last_delta = None
            plan, stats = memory.backend.plan_from_scratch(req.costmap, start, goal)
            kind = FRESH_PLAN
        else:
            plan, stats, kind = calculate_plan(memory, req)
    except PlanningError as exc:
        memory.previous_costmap = req.costmap
        memory.stats_log.append(
            RequestOutcome(FAILURE, time.perf_counter() - t0, 0, 0.0, None, str(exc))
        )
        raise
    elapsed = time.perf_counter() - t0
    if kind != SUFFIX_REUSE:
        memory.previous_plan = plan
        memory.previous_goal = goal
    memory.previous_costmap = req.costmap
    memory.stats_log.append(RequestOutcome(kind, elapsed, stats.expansions, plan.total_cost, plan))
    return plan
