"""Incremental D* Lite planner over the 8-connected costmap graph.

The search runs backwards from the goal, so ``g`` holds cost-to-goal and the
robot position plays the role of the search target. State persists between
calls: after map changes are pushed through :meth:`DStarLite.update_node`,
:meth:`DStarLite.replan` only repairs the part of the search that the changes
invalidated.
"""

from __future__ import annotations

import heapq
import math
import time

import numpy as np

from .errors import InternalInconsistencyError, InvalidEndpointError, UnreachableGoalError
from .gridmap import SQRT2, Cell, Costmap, successor_table
from .planners import Plan, SearchStats, check_endpoints

INF = math.inf

# Every cost on this grid is ``a + b*sqrt(2)`` cells with integers a, b >= 0.
# Values are carried exactly as ``(a << 32) | b`` and only turned into floats
# for ordering. Equal costs therefore compare equal bit-for-bit no matter in
# which order their steps were summed, which the lexicographic key test needs.
_SHIFT = 32
_LOW = (1 << _SHIFT) - 1
ORTH_STEP = 1 << _SHIFT
DIAG_STEP = 1


def _as_float(p) -> float:
    """Length in cells of a packed value (``inf`` passes through)."""
    if p == INF:
        return INF
    return (p >> _SHIFT) + (p & _LOW) * SQRT2


class DStarLite:
    """Persistent D* Lite search state for one goal.

    Keys are ``(min(g, rhs) + h(start, s) + km, min(g, rhs))`` and compare
    lexicographically, with the flat row-major index as a final tie-break.
    The queue uses lazy deletion: ``_open`` maps each queued cell to its live
    key and heap entries that disagree with it are discarded on pop.
    """

    def __init__(self, costmap: Costmap, start: tuple[int, int], goal: tuple[int, int]):
        check_endpoints(costmap, start, goal)
        self._w = w = costmap.width
        self._h = costmap.height
        self.resolution = costmap.resolution
        self.lethal_threshold = costmap.lethal_threshold
        self._costs = list(costmap.flat_costs)
        self._moves = successor_table(w, costmap.height)

        n = w * costmap.height
        # Packed exact values and their float images, kept in lockstep.
        self._g = [INF] * n
        self._gf = [INF] * n
        self._rhs = [INF] * n
        self._rf = [INF] * n
        self._km = 0
        self.goal = Cell(*goal)
        self._goal = goal[0] * w + goal[1]
        self.start = Cell(*start)
        self.last_start = self.start
        self._start = start[0] * w + start[1]
        self._rebuild_heuristic()

        self._heap: list[tuple[float, float, int]] = []
        self._open: dict[int, tuple[float, float]] = {}
        # Cells whose rhs must be recomputed before the next search.
        self._pending: set[int] = set()
        self.queue_peak = 0
        self._set_rhs(self._goal, 0)
        self._push(self._goal, self._key(self._goal))

    # -- inspection ---------------------------------------------------------

    def index(self, cell: tuple[int, int]) -> int:
        return cell[0] * self._w + cell[1]

    @property
    def km(self) -> float:
        """Key modifier in meters."""
        return _as_float(self._km) * self.resolution

    def g_of(self, cell: tuple[int, int]) -> float:
        """Cost-to-goal estimate of ``cell`` in meters."""
        self._flush()
        return self._gf[self.index(cell)] * self.resolution

    def rhs_of(self, cell: tuple[int, int]) -> float:
        self._flush()
        return self._rf[self.index(cell)] * self.resolution

    def queued_cells(self) -> list[Cell]:
        self._flush()
        return [Cell(*divmod(i, self._w)) for i in sorted(self._open)]

    def costmap(self) -> Costmap:
        """Snapshot of the map as the planner currently sees it."""
        arr = np.asarray(self._costs, dtype=np.uint8).reshape(self._h, self._w)
        return Costmap(arr, self.resolution, self.lethal_threshold)

    # -- internals ----------------------------------------------------------

    def _set_g(self, u: int, p) -> None:
        self._g[u] = p
        self._gf[u] = _as_float(p)

    def _set_rhs(self, u: int, p) -> None:
        self._rhs[u] = p
        self._rf[u] = _as_float(p)

    def _heuristic(self, a: int, b: int) -> int:
        ra, ca = divmod(a, self._w)
        rb, cb = divmod(b, self._w)
        dx = ca - cb if ca > cb else cb - ca
        dy = ra - rb if ra > rb else rb - ra
        if dx > dy:
            return ((dx - dy) << _SHIFT) + dy
        return ((dy - dx) << _SHIFT) + dx

    def _rebuild_heuristic(self) -> None:
        """Packed octile distance from every cell to the current start."""
        r0, c0 = divmod(self._start, self._w)
        rows, cols = np.indices((self._h, self._w))
        dy = np.abs(rows - r0).ravel().astype(np.int64)
        dx = np.abs(cols - c0).ravel().astype(np.int64)
        lo = np.minimum(dx, dy)
        self._hs = (((np.maximum(dx, dy) - lo) << _SHIFT) + lo).tolist()

    def _key(self, u: int) -> tuple[float, float]:
        if self._gf[u] <= self._rf[u]:
            m, mf = self._g[u], self._gf[u]
        else:
            m, mf = self._rhs[u], self._rf[u]
        if mf == INF:
            return (INF, INF)
        p = m + self._hs[u] + self._km
        return ((p >> _SHIFT) + (p & _LOW) * SQRT2, mf)

    def _push(self, u: int, key: tuple[float, float]) -> None:
        self._open[u] = key
        heapq.heappush(self._heap, (key[0], key[1], u))
        if len(self._open) > self.queue_peak:
            self.queue_peak = len(self._open)

    def _top(self) -> tuple[float, float, int] | None:
        heap, live = self._heap, self._open
        while heap:
            k1, k2, u = heap[0]
            key = live.get(u)
            if key is not None and key[0] == k1 and key[1] == k2:
                return heap[0]
            heapq.heappop(heap)
        return None

    def _edges(self, u: int) -> list[tuple[int, int]]:
        """Finite edges ``(v, packed_cost)`` incident to ``u`` (the graph is symmetric)."""
        costs, lethal = self._costs, self.lethal_threshold
        out = []
        if costs[u] < lethal:
            for v, sa, sb in self._moves[u]:
                if costs[v] >= lethal:
                    continue
                if sa >= 0:
                    if costs[sa] < lethal and costs[sb] < lethal:
                        out.append((v, DIAG_STEP))
                else:
                    out.append((v, ORTH_STEP))
        return out

    def _lookahead(self, u: int):
        g, gf = self._g, self._gf
        best, best_f = INF, INF
        for v, c in self._edges(u):
            if gf[v] == INF:
                continue
            p = g[v] + c
            f = (p >> _SHIFT) + (p & _LOW) * SQRT2
            if f < best_f:
                best, best_f = p, f
        return best

    def _requeue(self, u: int) -> None:
        if self._g[u] != self._rhs[u]:
            self._push(u, self._key(u))
        elif u in self._open:
            del self._open[u]

    def _update_vertex(self, u: int) -> None:
        if u != self._goal:
            self._set_rhs(u, self._lookahead(u))
        self._requeue(u)

    # -- public operations --------------------------------------------------

    def move_start(self, start: tuple[int, int]) -> None:
        """Re-root the search at ``start``, folding the shift into ``km``."""
        start = Cell(*start)
        if not (0 <= start.row < self._h and 0 <= start.col < self._w):
            raise InvalidEndpointError(f"start {tuple(start)} is out of bounds")
        if start != self.last_start:
            self._km += self._heuristic(self.index(self.last_start), self.index(start))
            self.last_start = start
        self.start = start
        if self.index(start) != self._start:
            self._start = self.index(start)
            self._rebuild_heuristic()

    def update_node(self, cell: tuple[int, int], new_cost: int) -> None:
        """Record a new cost for ``cell`` and schedule its 3x3 block for repair.

        Every edge whose cost can depend on ``cell`` (incident edges, plus the
        diagonals that sweep past it) has both endpoints in that block. The rhs
        values are recomputed once per cell at the start of the next search, so
        a batch of neighbouring changes costs no more than its footprint.
        """
        r, c = cell
        if not (0 <= r < self._h and 0 <= c < self._w):
            raise ValueError(f"cell {tuple(cell)} is out of bounds")
        u = r * self._w + c
        old = self._costs[u]
        self._costs[u] = int(new_cost)
        lethal = self.lethal_threshold
        if (old >= lethal) == (new_cost >= lethal):
            return
        self._pending.add(u)
        self._pending.update(v for v, _, _ in self._moves[u])

    def _flush(self) -> None:
        pending, self._pending = self._pending, set()
        for u in sorted(pending):
            self._update_vertex(u)

    def compute_shortest_path(self, start: tuple[int, int] | None = None) -> tuple[Plan, SearchStats]:
        """Expand until the start is locally consistent, then extract the plan."""
        t0 = time.perf_counter()
        if start is not None:
            self.move_start(start)
        self._flush()
        s = self._start
        if self._costs[s] >= self.lethal_threshold:
            raise InvalidEndpointError(f"start {tuple(self.start)} is lethal")

        g, gf, rhs, rf = self._g, self._gf, self._rhs, self._rf
        hs, km = self._hs, self._km
        costs, lethal, moves = self._costs, self.lethal_threshold, self._moves
        heap, live = self._heap, self._open
        lookahead = self._lookahead
        push, pop = heapq.heappush, heapq.heappop
        goal = self._goal
        expansions = 0
        peak = self.queue_peak

        def key_of(v: int) -> tuple[float, float]:
            if gf[v] <= rf[v]:
                m, mf = g[v], gf[v]
            else:
                m, mf = rhs[v], rf[v]
            if mf == INF:
                return (INF, INF)
            p = m + hs[v] + km
            return ((p >> _SHIFT) + (p & _LOW) * SQRT2, mf)

        def requeue(v: int) -> None:
            if g[v] != rhs[v]:
                k = key_of(v)
                live[v] = k
                push(heap, (k[0], k[1], v))
            elif v in live:
                del live[v]

        while heap:
            k1, k2, u = heap[0]
            key = live.get(u)
            if key is None or key[0] != k1 or key[1] != k2:
                pop(heap)
                continue
            if not ((k1, k2) < key_of(s) or rhs[s] != g[s]):
                break
            pop(heap)
            del live[u]
            expansions += 1
            k_new = key_of(u)
            if (k1, k2) < k_new:
                live[u] = k_new
                push(heap, (k_new[0], k_new[1], u))
                continue
            if costs[u] >= lethal:
                edges = ()
            else:
                edges = moves[u]
            if gf[u] > rf[u]:
                gu = rhs[u]
                g[u], gf[u] = gu, rf[u]
                # Only neighbors whose rhs improved can change state; stale keys
                # of the rest are caught by the key check on pop.
                for v, sa, sb in edges:
                    if v == goal or costs[v] >= lethal:
                        continue
                    if sa >= 0:
                        if costs[sa] >= lethal or costs[sb] >= lethal:
                            continue
                        p = gu + DIAG_STEP
                    else:
                        p = gu + ORTH_STEP
                    f = (p >> _SHIFT) + (p & _LOW) * SQRT2
                    if f < rf[v]:
                        rhs[v], rf[v] = p, f
                        requeue(v)
            else:
                g_old = g[u]
                g[u], gf[u] = INF, INF
                # rhs(u) depends only on successors, so it is still valid.
                requeue(u)
                for v, sa, sb in edges:
                    if v == goal or costs[v] >= lethal:
                        continue
                    if sa >= 0:
                        if costs[sa] >= lethal or costs[sb] >= lethal:
                            continue
                        c = DIAG_STEP
                    else:
                        c = ORTH_STEP
                    if rhs[v] == g_old + c:
                        p = lookahead(v)
                        rhs[v], rf[v] = p, _as_float(p)
                        requeue(v)
            if len(live) > peak:
                peak = len(live)
        self.queue_peak = peak

        if gf[s] == INF:
            raise UnreachableGoalError(f"no path from {tuple(self.start)} to {tuple(self.goal)}")
        plan = self._extract_plan()
        return plan, SearchStats(expansions, self.queue_peak, time.perf_counter() - t0)

    def replan(self, start: tuple[int, int] | None = None) -> tuple[Plan, SearchStats]:
        """Repair the search after map updates and/or a start move."""
        return self.compute_shortest_path(start)

    def _extract_plan(self) -> Plan:
        g, gf = self._g, self._gf
        u = self._start
        path = [u]
        seen = {u}
        while u != self._goal:
            best = None
            for v, c in self._edges(u):
                if gf[v] == INF:
                    continue
                cand = (_as_float(g[v] + c), gf[v], v)
                if best is None or cand < best:
                    best = cand
            if best is None:
                raise UnreachableGoalError(
                    f"no path from {tuple(self.start)} to {tuple(self.goal)}"
                )
            u = best[2]
            if u in seen:
                raise InternalInconsistencyError(f"plan extraction revisited cell {divmod(u, self._w)}")
            seen.add(u)
            path.append(u)
        return Plan.from_cells([divmod(i, self._w) for i in path], self.resolution)


def initialize(costmap: Costmap, start: tuple[int, int], goal: tuple[int, int]) -> DStarLite:
    return DStarLite(costmap, start, goal)
