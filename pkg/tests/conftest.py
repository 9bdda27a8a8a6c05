"""Shared fixtures and independent brute-force oracles.

The oracles deliberately avoid the package's own neighbour tables so that a
bug there cannot hide itself.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from replan_kit.gridmap import LETHAL, Costmap

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"


def grid_graph(costs: np.ndarray, resolution: float = 1.0, lethal: int = LETHAL) -> csr_matrix:
    """Sparse adjacency of the 8-connected, no-corner-cutting grid."""
    h, w = costs.shape
    blocked = costs >= lethal
    rows, cols, weights = [], [], []
    for r in range(h):
        for c in range(w):
            if blocked[r, c]:
                continue
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < h and 0 <= cc < w) or blocked[rr, cc]:
                        continue
                    if dr and dc and (blocked[r + dr, c] or blocked[r, c + dc]):
                        continue
                    rows.append(r * w + c)
                    cols.append(rr * w + cc)
                    weights.append(resolution * (math.sqrt(2.0) if dr and dc else 1.0))
    return csr_matrix((weights, (rows, cols)), shape=(h * w, h * w))


def oracle_cost(costmap: Costmap, start, goal) -> float:
    """Shortest path cost by scipy's graph Dijkstra (``inf`` if unreachable)."""
    graph = grid_graph(costmap.costs, costmap.resolution, costmap.lethal_threshold)
    w = costmap.width
    dist = csgraph_dijkstra(graph, indices=start[0] * w + start[1])
    return float(dist[goal[0] * w + goal[1]])


def brute_inflate(costs: np.ndarray, radius_cells: int, lethal: int = LETHAL) -> np.ndarray:
    """Mark every cell within Euclidean ``radius_cells`` of a lethal cell."""
    h, w = costs.shape
    src = [(r, c) for r in range(h) for c in range(w) if costs[r, c] >= lethal]
    out = costs.copy()
    for r in range(h):
        for c in range(w):
            if any((r - a) ** 2 + (c - b) ** 2 <= radius_cells**2 for a, b in src):
                out[r, c] = max(out[r, c], lethal)
    return out


def random_map(rng: np.random.Generator, size: int, density: float, resolution: float = 1.0) -> Costmap:
    arr = np.where(rng.random((size, size)) < density, LETHAL, 0).astype(np.uint8)
    return Costmap(arr, resolution)


def random_solvable(rng: np.random.Generator, size: int, density: float, resolution: float = 1.0):
    """Random map plus free start/goal that are connected (checked by the oracle)."""
    while True:
        m = random_map(rng, size, density, resolution)
        free = np.argwhere(m.costs < LETHAL)
        if len(free) < 2:
            continue
        i, j = rng.choice(len(free), size=2, replace=False)
        s, g = tuple(int(v) for v in free[i]), tuple(int(v) for v in free[j])
        if math.isfinite(oracle_cost(m, s, g)):
            return m, s, g


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
