import json

import numpy as np
import pytest

from replan_kit.errors import ScenarioError
from replan_kit.gridmap import LETHAL, Cell, Costmap, cost_diff, inflate
from replan_kit.planners import Plan
from replan_kit.replanner import ALWAYS_REPLAN, FRESH_PLAN, INCREMENTAL_REPLAN, SUFFIX_REUSE
from replan_kit.sim import (
    ObstacleEvent,
    Scenario,
    World,
    aggregate,
    apply_event,
    load_scenario,
    placed_events,
    read_events_csv,
    read_plans_csv,
    run_scenario,
    scenario_from_dict,
    simulate,
    step_robot,
    write_traces,
)

from conftest import SCENARIOS, brute_inflate


def empty_scenario(**kw) -> Scenario:
    base = dict(base_map=Costmap.empty(20, 20), start=(0, 0), goal=(19, 19), planner="a_star")
    base.update(kw)
    return Scenario(**base)


# -- robot motion ----------------------------------------------------------------


def test_step_robot_moves_along_plan():
    plan = Plan.from_cells([(0, 0), (0, 1), (0, 2), (1, 3)], 1.0)
    assert step_robot((0.0, 0.0), plan, 1.5) == (0.0, 1.5)
    assert step_robot((0.0, 0.0), plan, 100.0) == (1.0, 3.0)
    assert step_robot((0.0, 1.0), plan, 0.0) == (0.0, 1.0)


def test_step_robot_closes_gap_to_suffix_first():
    plan = Plan.from_cells([(0, 2), (0, 3)], 1.0)
    assert step_robot((0.0, 0.0), plan, 1.0) == (0.0, 1.0)
    assert step_robot((0.0, 0.0), plan, 2.5) == (0.0, 2.5)


# -- world and events ------------------------------------------------------------


def test_added_footprint_puts_inflated_ring_in_delta():
    world = World(Costmap.empty(10, 10), robot_radius=1.0)
    before = world.costmap
    ev = ObstacleEvent(rect=(4, 4, 2, 2), progress=0.5)
    delta = apply_event(world, ev)
    base = np.zeros((10, 10), dtype=np.uint8)
    base[4:6, 4:6] = LETHAL
    expected = brute_inflate(base, 1)
    assert np.array_equal(world.costmap.costs, expected)
    ring = {(r, c) for r, c in zip(*np.nonzero(expected != before.costs))}
    assert set(map(tuple, delta.cells)) == ring
    assert len(ring) == 4 + 8  # the 2x2 block and one cell beyond each side


def test_apply_event_local_reinflation_matches_full(rng):
    base = np.where(rng.random((25, 25)) < 0.1, LETHAL, 0).astype(np.uint8)
    world = World(Costmap(base), robot_radius=2.0)
    for rect, action in [((3, 3, 4, 2), "add"), ((10, 12, 3, 3), "add"), ((3, 3, 4, 2), "remove")]:
        apply_event(world, ObstacleEvent(rect=rect, action=action, time=0.0))
        assert np.array_equal(world.costmap.costs, inflate(world.base_costmap(), 2.0).costs)


def test_event_validation():
    with pytest.raises(ScenarioError):
        ObstacleEvent(rect=(0, 0, 1, 1))
    with pytest.raises(ScenarioError):
        ObstacleEvent(rect=(0, 0, 1, 1), progress=0.5, time=1.0)
    with pytest.raises(ScenarioError):
        ObstacleEvent(rect=(0, 0, 0, 1), progress=0.5)
    with pytest.raises(ScenarioError):
        ObstacleEvent(rect=(0, 0, 1, 1), progress=1.5)
    with pytest.raises(ScenarioError):
        ObstacleEvent(rect=(0, 0, 1, 1), action="move", time=0.0)


def test_scenario_validation():
    with pytest.raises(ScenarioError):
        empty_scenario(planner="rrt")
    with pytest.raises(ScenarioError):
        empty_scenario(gating="never")
    with pytest.raises(ScenarioError):
        empty_scenario(goal=(20, 0))
    with pytest.raises(ScenarioError):
        empty_scenario(events=[ObstacleEvent(rect=(18, 18, 2, 2), progress=0.5)])
    with pytest.raises(ScenarioError):
        empty_scenario(events=[ObstacleEvent(rect=(18, 18, 3, 3), progress=0.5)])
    with pytest.raises(ScenarioError):
        scenario_from_dict({"start": [0, 0]})
    with pytest.raises(ScenarioError):
        load_scenario(SCENARIOS / "missing.json")


def test_start_inside_inflation_is_rejected():
    m = Costmap.empty(10, 10).with_costs([((0, 1), LETHAL)])
    with pytest.raises(ScenarioError):
        simulate(empty_scenario(base_map=m, start=(0, 0), goal=(9, 9), robot_radius=1.0))


def test_inline_ascii_map():
    sc = scenario_from_dict({"map": "3 1 1\n...\n", "start": [0, 0], "goal": [0, 2], "planner": "dijkstra"})
    m = simulate(sc)
    assert m.goal_reached and m.path_travelled[-1] == Cell(0, 2)


# -- full runs -----------------------------------------------------------------


def test_static_empty_map_plans_once():
    m = simulate(empty_scenario())
    assert m.goal_reached and m.failure_reason is None
    assert m.outcome_counts[FRESH_PLAN] == 1
    assert m.outcome_counts[SUFFIX_REUSE] == len(m.ticks) - 1
    assert m.outcome_counts[INCREMENTAL_REPLAN] == 0
    assert m.path_travelled[0] == Cell(0, 0) and m.path_travelled[-1] == Cell(19, 19)


def test_always_replan_searches_every_tick():
    proposed = simulate(empty_scenario())
    always = simulate(empty_scenario(gating=ALWAYS_REPLAN))
    assert always.outcome_counts[FRESH_PLAN] == len(always.ticks)
    assert always.expansions_total > proposed.expansions_total
    assert [t.tick for t in always.ticks] == [t.tick for t in proposed.ticks]


def test_two_obstacle_scenario_repairs_twice_and_avoids_footprints():
    sc = load_scenario(SCENARIOS / "two_obstacles.json")
    m = simulate(sc, 0)
    assert m.goal_reached
    assert m.outcome_counts[FRESH_PLAN] == 1
    assert m.outcome_counts[INCREMENTAL_REPLAN] == 2
    assert all(t is not None for t in m.event_ticks)
    assert len(m.replanning_expansions) == 2 and all(e > 0 for e in m.replanning_expansions)
    footprint = {c for ev in m.placed_events for c in ev.cells()}
    assert not footprint & set(m.searching_ticks()[-1].plan.cells)
    assert not footprint & set(m.path_travelled)


def test_placed_events_are_seeded_per_run():
    sc = load_scenario(SCENARIOS / "two_obstacles.json")
    a, b = placed_events(sc, 0), placed_events(sc, 0)
    assert a == b
    assert all(ev.jitter == 0 for ev in a)
    for ev, orig in zip(a, sc.events):
        assert max(abs(ev.rect[0] - orig.rect[0]), abs(ev.rect[1] - orig.rect[1])) <= orig.jitter
    # Planner choice does not change the placements.
    assert placed_events(sc.replace(planner="dijkstra"), 3) == placed_events(sc, 3)


def test_unreachable_goal_reports_failure():
    a = np.zeros((6, 6), dtype=np.uint8)
    a[:, 3] = LETHAL
    m = simulate(empty_scenario(base_map=Costmap(a), start=(0, 0), goal=(5, 5)))
    assert not m.goal_reached
    assert m.failure_reason == "unreachable"


def test_time_triggered_event_at_zero_is_seen_by_first_plan():
    ev = ObstacleEvent(rect=(8, 8, 4, 4), time=0.0)
    m = simulate(empty_scenario(events=[ev], planner="dstar_lite"))
    assert m.event_ticks == [0]
    assert not set(ev.cells()) & set(m.ticks[0].plan.cells)
    assert m.replanning_times == []


def test_run_scenario_and_aggregate():
    runs, agg = run_scenario(empty_scenario(), runs=3)
    assert len(runs) == 3 and agg["runs"] == 3
    assert agg["goal_reached"]
    assert agg["expansions_total"]["sd"] == 0.0
    assert aggregate(runs[:1])["total_planning_time"]["sd"] == 0.0


def test_trace_round_trip(tmp_path):
    sc = load_scenario(SCENARIOS / "two_obstacles.json")
    m = simulate(sc, 1)
    paths = write_traces(m, tmp_path, "two_obstacles")
    lines = paths["trace"].read_text().splitlines()
    assert len(lines) == len(m.ticks) + 1
    assert json.loads(lines[-1])["record"] == "run_metrics"
    plans = read_plans_csv(paths["plans"])
    assert [p["cells"] for p in plans] == [list(t.plan.cells) for t in m.searching_ticks()]
    assert [p["outcome"] for p in plans] == [FRESH_PLAN, INCREMENTAL_REPLAN, INCREMENTAL_REPLAN]
    events = read_events_csv(paths["events"])
    assert [e["rect"] for e in events] == [ev.rect for ev in m.placed_events]
    assert [e["tick"] for e in events] == m.event_ticks
    header = paths["path"].read_text().splitlines()[0]
    assert header == "time,row,col"
