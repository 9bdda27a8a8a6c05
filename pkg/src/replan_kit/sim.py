"""Deterministic scripted-scenario simulator.

A point robot drives along the current global plan on the inflated map while
the plan service is polled at the planner frequency. Scripted obstacle
events edit the base map; the planner only ever sees full costmap snapshots.
Planning time is measured but does not advance simulated time.
"""

from __future__ import annotations

import csv
import gc
import json
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import MapFormatError, PlanningError, ScenarioError, UnreachableGoalError
from .gridmap import Cell, Costmap, CostmapDelta, cost_diff, inflate, inflation_radius_cells, load_map, successor_table
from .planners import Plan
from .replanner import (
    BACKENDS,
    FAILURE,
    FRESH_PLAN,
    GATINGS,
    INCREMENTAL_REPLAN,
    OUTCOME_KINDS,
    PROPOSED,
    SUFFIX_REUSE,
    PlannerMemory,
    PlanRequest,
    make_plan,
)

# Robot motion sub-steps per planner tick.
SUBSTEPS = 5
TIMEOUT_FACTOR = 10.0
_ON_PLAN_EPS = 1e-9


@dataclass(frozen=True)
class ObstacleEvent:
    """Rectangle ``(row, col, width, height)`` added or removed at a trigger.

    Exactly one of ``progress`` (fraction of the initial plan length already
    driven) or ``time`` (simulated seconds) is set.
    """

    rect: tuple[int, int, int, int]
    action: str = "add"
    progress: float | None = None
    time: float | None = None
    jitter: int = 0

    def __post_init__(self):
        if (self.progress is None) == (self.time is None):
            raise ScenarioError("an event needs exactly one of 'progress' or 'time'")
        if self.action not in ("add", "remove"):
            raise ScenarioError(f"unknown event action {self.action!r}")
        if self.progress is not None and not 0.0 <= self.progress <= 1.0:
            raise ScenarioError(f"progress trigger must be in [0, 1], got {self.progress}")
        r, c, w, h = self.rect
        if w <= 0 or h <= 0:
            raise ScenarioError(f"event rectangle must have positive size, got {self.rect}")

    @property
    def sort_key(self) -> tuple[int, float]:
        return (0, self.progress) if self.progress is not None else (1, self.time)

    def cells(self) -> list[Cell]:
        r, c, w, h = self.rect
        return [Cell(rr, cc) for rr in range(r, r + h) for cc in range(c, c + w)]

    def covers(self, cell: tuple[int, int]) -> bool:
        r, c, w, h = self.rect
        return r <= cell[0] < r + h and c <= cell[1] < c + w

    def to_json(self) -> dict:
        out = {"rect": list(self.rect), "action": self.action}
        if self.progress is not None:
            out["progress"] = self.progress
        else:
            out["time"] = self.time
        if self.jitter:
            out["jitter"] = self.jitter
        return out


@dataclass
class Scenario:
    base_map: Costmap
    start: Cell
    goal: Cell
    robot_radius: float = 0.0
    planner_frequency: float = 2.0
    robot_speed: float = 4.0
    events: list[ObstacleEvent] = field(default_factory=list)
    planner: str = "dstar_lite"
    gating: str = PROPOSED
    runs: int = 1
    seed: int = 0
    noise_threshold: int = 0
    map_source: str | None = None

    def __post_init__(self):
        self.start, self.goal = Cell(*self.start), Cell(*self.goal)
        if self.planner not in BACKENDS:
            raise ScenarioError(f"unknown planner {self.planner!r}")
        if self.gating not in GATINGS:
            raise ScenarioError(f"unknown gating {self.gating!r}")
        if not self.planner_frequency > 0:
            raise ScenarioError("planner_frequency must be > 0")
        if not self.robot_speed > 0:
            raise ScenarioError("robot_speed must be > 0")
        if self.robot_radius < 0:
            raise ScenarioError("robot_radius must be >= 0")
        if self.runs < 1:
            raise ScenarioError("runs must be >= 1")
        for cell, name in ((self.start, "start"), (self.goal, "goal")):
            if not self.base_map.in_bounds(cell):
                raise ScenarioError(f"{name} {tuple(cell)} is outside the map")
        self.events = sorted(self.events, key=lambda e: e.sort_key)
        for ev in self.events:
            r, c, w, h = ev.rect
            if r < 0 or c < 0 or r + h > self.base_map.height or c + w > self.base_map.width:
                raise ScenarioError(f"event rectangle {ev.rect} leaves the map")
            if ev.action == "add" and ev.covers(self.goal):
                raise ScenarioError(f"event rectangle {ev.rect} covers the goal")

    def replace(self, **changes) -> Scenario:
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update({k: v for k, v in changes.items() if v is not None})
        return Scenario(**data)


def scenario_from_dict(data: dict, base_dir: str | Path = ".") -> Scenario:
    """Build a :class:`Scenario` from its JSON form.

    ``map`` is either a path (resolved against ``base_dir``), an inline ASCII
    map string containing newlines, or a JSON costmap object.
    """
    try:
        source = data["map"]
        if isinstance(source, dict):
            base_map, map_source = Costmap.from_json(source), "<inline json>"
        elif "\n" in source:
            base_map, map_source = load_map(source), "<inline ascii>"
        else:
            path = Path(base_dir) / source
            text = path.read_text(encoding="utf-8")
            base_map = Costmap.from_json(text) if path.suffix == ".json" else load_map(text)
            map_source = str(path)
        events = [
            ObstacleEvent(
                rect=tuple(int(v) for v in ev["rect"]),
                action=ev.get("action", "add"),
                progress=ev.get("progress"),
                time=ev.get("time"),
                jitter=int(ev.get("jitter", 0)),
            )
            for ev in data.get("events", [])
        ]
        return Scenario(
            base_map=base_map,
            start=Cell(*data["start"]),
            goal=Cell(*data["goal"]),
            robot_radius=float(data.get("robot_radius", 0.0)),
            planner_frequency=float(data.get("planner_frequency", 2.0)),
            robot_speed=float(data.get("robot_speed", 4.0)),
            events=events,
            planner=data.get("planner", "dstar_lite"),
            gating=data.get("gating", PROPOSED),
            runs=int(data.get("runs", 1)),
            seed=int(data.get("seed", 0)),
            noise_threshold=int(data.get("noise_threshold", 0)),
            map_source=map_source,
        )
    except (KeyError, TypeError, ValueError, OSError, MapFormatError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data, path.parent)


class World:
    """Base (uninflated) map plus the inflated costmap the planner sees."""

    def __init__(self, base_map: Costmap, robot_radius: float):
        self.robot_radius = robot_radius
        self.resolution = base_map.resolution
        self.lethal_threshold = base_map.lethal_threshold
        self.base = base_map.costs.copy()
        self.costmap = inflate(base_map, robot_radius)
        self.radius_cells = inflation_radius_cells(robot_radius, base_map.resolution)

    def base_costmap(self) -> Costmap:
        return Costmap(self.base, self.resolution, self.lethal_threshold)


def apply_event(world: World, event: ObstacleEvent) -> CostmapDelta:
    """Edit the base map and re-inflate only the neighbourhood of the edit."""
    r0, c0, w, h = event.rect
    height, width = world.base.shape
    if r0 < 0 or c0 < 0 or r0 + h > height or c0 + w > width:
        raise ValueError(f"event rectangle {event.rect} leaves the {width}x{height} map")
    before = world.costmap
    world.base[r0 : r0 + h, c0 : c0 + w] = world.lethal_threshold if event.action == "add" else 0

    k = world.radius_cells
    # Inflated values in the target window depend only on base cells within k.
    t_r0, t_r1 = max(0, r0 - k), min(height, r0 + h + k)
    t_c0, t_c1 = max(0, c0 - k), min(width, c0 + w + k)
    s_r0, s_r1 = max(0, t_r0 - k), min(height, t_r1 + k)
    s_c0, s_c1 = max(0, t_c0 - k), min(width, t_c1 + k)
    window = Costmap(world.base[s_r0:s_r1, s_c0:s_c1], world.resolution, world.lethal_threshold)
    local = inflate(window, world.robot_radius).costs
    arr = before.costs.copy()
    arr[t_r0:t_r1, t_c0:t_c1] = local[t_r0 - s_r0 : t_r1 - s_r0, t_c0 - s_c0 : t_c1 - s_c0]
    world.costmap = Costmap(arr, world.resolution, world.lethal_threshold)
    return cost_diff(world.costmap, before)


def _project(p: tuple[float, float], pts: list[tuple[float, float]]) -> tuple[int, tuple[float, float], float]:
    """Nearest point on the polyline: ``(segment index, point, distance)``."""
    best = (0, pts[0], math.dist(p, pts[0]))
    for i in range(len(pts) - 1):
        (ar, ac), (br, bc) = pts[i], pts[i + 1]
        dr, dc = br - ar, bc - ac
        seg2 = dr * dr + dc * dc
        t = ((p[0] - ar) * dr + (p[1] - ac) * dc) / seg2
        t = min(1.0, max(0.0, t))
        q = (ar + t * dr, ac + t * dc)
        d = math.dist(p, q)
        if d < best[2] - 1e-12:
            best = (i, q, d)
    return best


def step_robot(position: tuple[float, float], plan: Plan, distance: float) -> tuple[float, float]:
    """Advance ``distance`` cells along the plan polyline, clamping at its end.

    A robot that is not on the polyline first drives straight to the nearest
    point of it (the gap left when a reused plan suffix starts off the robot).
    """
    if distance <= 0:
        return position
    pts = [(float(r), float(c)) for r, c in plan.cells]
    p = (float(position[0]), float(position[1]))
    i, q, gap = _project(p, pts)
    if gap > _ON_PLAN_EPS:
        if distance < gap:
            f = distance / gap
            return (p[0] + (q[0] - p[0]) * f, p[1] + (q[1] - p[1]) * f)
        distance -= gap
    p = q
    while i < len(pts) - 1:
        nxt = pts[i + 1]
        seg = math.dist(p, nxt)
        if distance < seg:
            f = distance / seg
            return (p[0] + (nxt[0] - p[0]) * f, p[1] + (nxt[1] - p[1]) * f)
        distance -= seg
        p = nxt
        i += 1
    return pts[-1]


def nearest_cell(position: tuple[float, float]) -> Cell:
    return Cell(math.floor(position[0] + 0.5), math.floor(position[1] + 0.5))


def plan_length_cells(plan: Plan) -> float:
    """Length in cells, computed from step counts so equal-cost plans agree bit-exactly."""
    diagonal = sum(1 for a, b in zip(plan.cells, plan.cells[1:]) if a.row != b.row and a.col != b.col)
    orthogonal = len(plan.cells) - 1 - diagonal
    return orthogonal + diagonal * math.sqrt(2.0)


@dataclass
class TickRecord:
    tick: int
    time: float
    start: Cell
    position: tuple[float, float]
    outcome: str
    expansions: int
    planning_time: float
    plan: Plan | None = None
    costmap: Costmap | None = None  # kept only for searching ticks

    def to_json(self) -> dict:
        return {
            "record": "tick",
            "tick": self.tick,
            "time": self.time,
            "outcome": self.outcome,
            "expansions": self.expansions,
            "planning_time": self.planning_time,
            "position": list(self.position),
            "start": list(self.start),
        }


@dataclass
class RunMetrics:
    initial_planning_time: float = 0.0
    replanning_times: list[float] = field(default_factory=list)
    replanning_expansions: list[int] = field(default_factory=list)
    total_planning_time: float = 0.0
    outcome_counts: dict[str, int] = field(default_factory=dict)
    path_travelled: list[Cell] = field(default_factory=list)
    goal_reached: bool = False
    expansions_total: int = 0
    failure_reason: str | None = None
    sim_time: float = 0.0
    ticks: list[TickRecord] = field(default_factory=list)
    event_ticks: list[int | None] = field(default_factory=list)  # per placed event; None if it never fired
    trajectory: list[tuple[float, float, float]] = field(default_factory=list)
    placed_events: list[ObstacleEvent] = field(default_factory=list)

    def searching_ticks(self) -> list[TickRecord]:
        return [t for t in self.ticks if t.outcome in (FRESH_PLAN, INCREMENTAL_REPLAN)]

    def to_json(self) -> dict:
        return {
            "record": "run_metrics",
            "initial_planning_time": self.initial_planning_time,
            "replanning_times": self.replanning_times,
            "replanning_expansions": self.replanning_expansions,
            "total_planning_time": self.total_planning_time,
            "outcome_counts": self.outcome_counts,
            "path_travelled": [list(c) for c in self.path_travelled],
            "goal_reached": self.goal_reached,
            "expansions_total": self.expansions_total,
            "failure_reason": self.failure_reason,
            "sim_time": self.sim_time,
            "event_ticks": self.event_ticks,
            "placed_events": [ev.to_json() for ev in self.placed_events],
        }


def placed_events(scenario: Scenario, run_index: int = 0) -> list[ObstacleEvent]:
    """Events for one repetition, with seeded jitter applied where requested.

    The generator is seeded from ``(seed, run_index)``, never from the planner,
    so every planner faces the same placements in a given repetition.
    """
    rng = np.random.default_rng([scenario.seed, run_index])
    h, w = scenario.base_map.height, scenario.base_map.width
    placed = []
    for ev in scenario.events:
        if ev.jitter <= 0:
            placed.append(ev)
            continue
        dr, dc = (int(v) for v in rng.integers(-ev.jitter, ev.jitter + 1, size=2))
        r, c, ew, eh = ev.rect
        r = min(max(0, r + dr), h - eh)
        c = min(max(0, c + dc), w - ew)
        moved = replace(ev, rect=(r, c, ew, eh), jitter=0)
        if moved.action == "add" and moved.covers(scenario.goal):
            moved = replace(ev, jitter=0)
        placed.append(moved)
    return placed


def simulate(scenario: Scenario, run_index: int = 0) -> RunMetrics:
    """Run one repetition of ``scenario`` to completion."""
    world = World(scenario.base_map, scenario.robot_radius)
    for cell, name in ((scenario.start, "start"), (scenario.goal, "goal")):
        if world.costmap.is_lethal(cell):
            raise ScenarioError(f"{name} {tuple(cell)} is not traversable after inflation")

    memory = PlannerMemory.for_planner(scenario.planner, scenario.noise_threshold, scenario.gating)
    # Build the cached neighbour table now so the first timed search doesn't pay for it.
    successor_table(world.costmap.width, world.costmap.height)
    pending = placed_events(scenario, run_index)
    dt = 1.0 / (scenario.planner_frequency * SUBSTEPS)
    step_len = scenario.robot_speed * dt
    metrics = RunMetrics(placed_events=list(pending), event_ticks=[None] * len(pending))
    index_of = {id(ev): i for i, ev in enumerate(pending)}
    counts = Counter({k: 0 for k in OUTCOME_KINDS})

    pos = (float(scenario.start.row), float(scenario.start.col))
    metrics.path_travelled.append(scenario.start)
    metrics.trajectory.append((0.0, pos[0], pos[1]))
    plan: Plan | None = None
    initial_length: float | None = None
    timeout = math.inf
    awaiting: list[int] = []  # events applied since the last tick
    step = 0

    while True:
        t = step * dt
        driven = step * step_len
        due = [
            ev for ev in pending
            if (ev.progress is not None and initial_length is not None and driven >= ev.progress * initial_length)
            or (ev.time is not None and t >= ev.time)
        ]
        for ev in due:
            pending = [e for e in pending if e is not ev]
            robot_cell = nearest_cell(pos)
            if ev.action == "add" and ev.covers(robot_cell):
                raise ScenarioError(f"event {ev.rect} at t={t:.2f}s would cover the robot at {tuple(robot_cell)}")
            apply_event(world, ev)
            if world.costmap.is_lethal(robot_cell):
                raise ScenarioError(
                    f"event {ev.rect} at t={t:.2f}s inflates over the robot at {tuple(robot_cell)}"
                )
            awaiting.append(index_of[id(ev)])

        if step % SUBSTEPS == 0:
            tick = step // SUBSTEPS
            start = nearest_cell(pos)
            snapshot = world.costmap
            # Collector pauses would land in the timed call; collect between ticks instead.
            gc_was_enabled = gc.isenabled()
            gc.disable()
            try:
                plan = make_plan(memory, PlanRequest(start, scenario.goal, snapshot))
                failed = None
            except PlanningError as exc:
                failed = exc
            finally:
                if gc_was_enabled:
                    gc.enable()
            outcome = memory.stats_log[-1]
            counts[outcome.kind] += 1
            searching = outcome.kind in (FRESH_PLAN, INCREMENTAL_REPLAN)
            record = TickRecord(
                tick, t, start, pos, outcome.kind, outcome.expansions, outcome.planning_time,
                plan=outcome.plan if searching else None,
                costmap=snapshot if searching or outcome.kind == FAILURE else None,
            )
            metrics.ticks.append(record)
            metrics.total_planning_time += outcome.planning_time
            metrics.expansions_total += outcome.expansions
            for i in awaiting:
                metrics.event_ticks[i] = tick
            if tick == 0:
                metrics.initial_planning_time = outcome.planning_time
            elif awaiting:
                metrics.replanning_times.append(outcome.planning_time)
                metrics.replanning_expansions.append(outcome.expansions)
            awaiting = []
            if failed is not None:
                metrics.failure_reason = (
                    "unreachable" if isinstance(failed, UnreachableGoalError) else f"invalid endpoint: {failed}"
                )
                break
            if initial_length is None:
                initial_length = plan_length_cells(plan)
                timeout = TIMEOUT_FACTOR * max(initial_length, 1.0) / scenario.robot_speed

        if pos == (float(scenario.goal.row), float(scenario.goal.col)):
            metrics.goal_reached = True
            break
        if t >= timeout:
            metrics.failure_reason = "timeout"
            break

        nxt = step_robot(pos, plan, step_len)
        # Safety stop: never drive into a cell that became lethal since the last plan.
        if not world.costmap.is_lethal(nearest_cell(nxt)):
            pos = nxt
        step += 1
        metrics.trajectory.append((step * dt, pos[0], pos[1]))
        cell = nearest_cell(pos)
        if cell != metrics.path_travelled[-1]:
            metrics.path_travelled.append(cell)

    metrics.sim_time = step * dt
    metrics.outcome_counts = dict(counts)
    return metrics


def _mean_sd(values: list[float]) -> dict:
    if not values:
        return {"mean": 0.0, "sd": 0.0}
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return {"mean": statistics.fmean(values), "sd": sd}


def aggregate(runs: list[RunMetrics]) -> dict:
    """Mean and sample standard deviation of the timing and work metrics."""
    n_events = max((len(r.replanning_times) for r in runs), default=0)
    return {
        "runs": len(runs),
        "initial_planning_time": _mean_sd([r.initial_planning_time for r in runs]),
        "replanning_times": [
            _mean_sd([r.replanning_times[i] for r in runs if i < len(r.replanning_times)])
            for i in range(n_events)
        ],
        "replanning_expansions": [
            _mean_sd([r.replanning_expansions[i] for r in runs if i < len(r.replanning_expansions)])
            for i in range(n_events)
        ],
        "total_planning_time": _mean_sd([r.total_planning_time for r in runs]),
        "expansions_total": _mean_sd([r.expansions_total for r in runs]),
        "goal_reached": all(r.goal_reached for r in runs),
    }


def run_scenario(scenario: Scenario, runs: int | None = None) -> tuple[list[RunMetrics], dict]:
    """Repeat the scenario ``runs`` times (default: the scenario's own count)."""
    n = scenario.runs if runs is None else runs
    results = [simulate(scenario, i) for i in range(n)]
    return results, aggregate(results)


def write_traces(metrics: RunMetrics, out_dir: str | Path, prefix: str) -> dict[str, Path]:
    """Write the JSON-lines tick trace, the robot path CSV and the plans CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / f"{prefix}.trace.jsonl",
        "path": out / f"{prefix}.path.csv",
        "plans": out / f"{prefix}.plans.csv",
        "events": out / f"{prefix}.events.csv",
    }
    with paths["trace"].open("w", encoding="utf-8") as fh:
        for rec in metrics.ticks:
            fh.write(json.dumps(rec.to_json()) + "\n")
        fh.write(json.dumps(metrics.to_json()) + "\n")
    with paths["path"].open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "row", "col"])
        for t, r, c in metrics.trajectory:
            writer.writerow([f"{t:.6f}", f"{r:.6f}", f"{c:.6f}"])
    with paths["plans"].open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["plan", "tick", "time", "outcome", "seq", "row", "col"])
        for k, rec in enumerate(metrics.searching_ticks()):
            for seq, (r, c) in enumerate(rec.plan.cells):
                writer.writerow([k, rec.tick, f"{rec.time:.6f}", rec.outcome, seq, r, c])
    with paths["events"].open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event", "tick", "action", "row", "col", "width", "height"])
        for i, (ev, tick) in enumerate(zip(metrics.placed_events, metrics.event_ticks)):
            writer.writerow([i, "" if tick is None else tick, ev.action, *ev.rect])
    return paths


def read_plans_csv(path: str | Path) -> list[dict]:
    """Plans exported by :func:`write_traces`, in export order."""
    plans: dict[int, dict] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["plan"])
            entry = plans.setdefault(
                k, {"tick": int(row["tick"]), "time": float(row["time"]), "outcome": row["outcome"], "cells": []}
            )
            entry["cells"].append(Cell(int(row["row"]), int(row["col"])))
    return [plans[k] for k in sorted(plans)]


def read_events_csv(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "event": int(row["event"]),
                "tick": int(row["tick"]) if row["tick"] else None,
                "action": row["action"],
                "rect": tuple(int(row[k]) for k in ("row", "col", "width", "height")),
            })
    return out
