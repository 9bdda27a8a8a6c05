"""Static grid planners (Dijkstra, A*) and the plan/statistics types they share.

Both planners run the same best-first core; Dijkstra is A* with a zero
heuristic. Queue entries are ordered by ``(f, h, row, col)`` so that results
are fully deterministic.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidEndpointError, UnreachableGoalError
from .gridmap import SQRT2, Cell, Costmap, successor_table

Heuristic = Callable[[Cell, Cell, float], float]

_OCTILE_DIAG = SQRT2 - 1.0


@dataclass(frozen=True)
class Plan:
    """Ordered cells from start to goal (inclusive) and their summed step cost."""

    cells: tuple[Cell, ...]
    total_cost: float

    def __post_init__(self):
        if not self.cells:
            raise ValueError("a plan needs at least one cell")

    @classmethod
    def from_cells(cls, cells: Sequence[tuple[int, int]], resolution: float) -> Plan:
        cells = tuple(Cell(*c) for c in cells)
        return cls(cells, path_cost(cells, resolution))

    @property
    def start(self) -> Cell:
        return self.cells[0]

    @property
    def goal(self) -> Cell:
        return self.cells[-1]

    def __len__(self) -> int:
        return len(self.cells)

    @cached_property
    def array(self) -> np.ndarray:
        """Cells as an ``(n, 2)`` int array (row, col)."""
        return np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)

    def suffix(self, index: int, resolution: float) -> Plan:
        if not 0 <= index < len(self.cells):
            raise IndexError(f"suffix index {index} outside plan of {len(self.cells)} cells")
        steps = np.abs(np.diff(self.array[index:], axis=0))
        n_diag = int(np.count_nonzero(steps.min(axis=1))) if len(steps) else 0
        return Plan(self.cells[index:], _step_cost(len(steps) - n_diag, n_diag, resolution))

    def to_json(self) -> dict:
        return {"cells": [[c.row, c.col] for c in self.cells], "total_cost": self.total_cost}

    @classmethod
    def from_json(cls, data: dict) -> Plan:
        return cls(tuple(Cell(r, c) for r, c in data["cells"]), float(data["total_cost"]))


@dataclass(frozen=True)
class SearchStats:
    expansions: int = 0
    queue_peak: int = 0
    wall_time: float = 0.0


def octile_heuristic(a: tuple[int, int], b: tuple[int, int], resolution: float = 1.0) -> float:
    """Octile distance in meters; ``a`` may hold index arrays instead of ints."""
    dx = abs(a[1] - b[1])
    dy = abs(a[0] - b[0])
    return resolution * (np.maximum(dx, dy) + _OCTILE_DIAG * np.minimum(dx, dy))


def zero_heuristic(a, b, resolution: float = 1.0) -> float:
    return 0.0


def heuristic_field(heuristic: Heuristic, costmap: Costmap, goal: tuple[int, int]) -> list[float]:
    """Heuristic value of every cell in row-major order, evaluated in one vectorized call."""
    shape = (costmap.height, costmap.width)
    h = np.asarray(heuristic(np.indices(shape), goal, costmap.resolution), dtype=float)
    return np.broadcast_to(h, shape).ravel().tolist()


def _step_cost(n_orth: int, n_diag: int, resolution: float) -> float:
    return resolution * (n_orth + n_diag * SQRT2)


def path_cost(cells: Sequence[tuple[int, int]], resolution: float) -> float:
    """Octile length of ``cells`` in meters.

    Computed from the orthogonal and diagonal step counts, so two paths with
    the same counts get bit-identical costs whatever the step order.
    """
    n_orth = n_diag = 0
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        dr, dc = abs(r1 - r0), abs(c1 - c0)
        if dr > 1 or dc > 1 or (dr == 0 and dc == 0):
            raise ValueError(f"cells {(r0, c0)} and {(r1, c1)} are not 8-adjacent")
        if dr and dc:
            n_diag += 1
        else:
            n_orth += 1
    return _step_cost(n_orth, n_diag, resolution)


def check_endpoints(costmap: Costmap, start: tuple[int, int], goal: tuple[int, int]) -> None:
    for name, cell in (("start", start), ("goal", goal)):
        if not costmap.in_bounds(cell):
            raise InvalidEndpointError(f"{name} {tuple(cell)} is out of bounds")
        if costmap.is_lethal(cell):
            raise InvalidEndpointError(f"{name} {tuple(cell)} is lethal")


def best_first_search(
    costmap: Costmap, start: tuple[int, int], goal: tuple[int, int], heuristic: Heuristic
) -> tuple[Plan, SearchStats]:
    """Shared A*/Dijkstra core over the 8-connected, no-corner-cutting grid."""
    check_endpoints(costmap, start, goal)
    start, goal = Cell(*start), Cell(*goal)
    t0 = time.perf_counter()

    w = costmap.width
    res = costmap.resolution
    diag = res * SQRT2
    flat = costmap.flat_costs
    lethal = costmap.lethal_threshold
    moves = successor_table(w, costmap.height)
    s, t = start.row * w + start.col, goal.row * w + goal.col

    hs = heuristic_field(heuristic, costmap, goal)
    g = {s: 0.0}
    parent = {s: -1}
    closed = set()
    h0 = hs[s]
    heap = [(h0, h0, s)]
    expansions = 0
    peak = 1
    while heap:
        _, _, u = heapq.heappop(heap)
        if u in closed:
            continue
        closed.add(u)
        expansions += 1
        if u == t:
            break
        gu = g[u]
        for v, sa, sb in moves[u]:
            if flat[v] >= lethal or v in closed:
                continue
            if sa >= 0:
                if flat[sa] >= lethal or flat[sb] >= lethal:
                    continue
                ng = gu + diag
            else:
                ng = gu + res
            if ng < g.get(v, math.inf):
                g[v] = ng
                parent[v] = u
                hv = hs[v]
                heapq.heappush(heap, (ng + hv, hv, v))
        if len(heap) > peak:
            peak = len(heap)
    else:
        raise UnreachableGoalError(f"no path from {tuple(start)} to {tuple(goal)}")

    cells = []
    u = t
    while u != -1:
        cells.append(Cell(*divmod(u, w)))
        u = parent[u]
    cells.reverse()
    wall = time.perf_counter() - t0
    return Plan.from_cells(cells, res), SearchStats(expansions, peak, wall)


def dijkstra(costmap: Costmap, start: tuple[int, int], goal: tuple[int, int]) -> tuple[Plan, SearchStats]:
    """Minimum-cost plan by uniform-cost search."""
    return best_first_search(costmap, start, goal, zero_heuristic)


def a_star(costmap: Costmap, start: tuple[int, int], goal: tuple[int, int]) -> tuple[Plan, SearchStats]:
    """Minimum-cost plan guided by the octile heuristic."""
    return best_first_search(costmap, start, goal, octile_heuristic)


PLANNERS = {"dijkstra": dijkstra, "a_star": a_star}
