"""Occupancy-grid costmaps, footprint inflation and the costmap difference gate.

Costs are integers in ``[0, 255]``; any cell at or above the map's
``lethal_threshold`` (254 by default) is untraversable. Maps are immutable
snapshots: every operation that changes costs returns a new :class:`Costmap`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import DimensionMismatchError, MapFormatError

FREE = 0
LETHAL = 254
SQRT2 = math.sqrt(2.0)

# (d_row, d_col) in a fixed order; diagonals last.
ORTHOGONAL_MOVES = ((-1, 0), (0, -1), (0, 1), (1, 0))
DIAGONAL_MOVES = ((-1, -1), (-1, 1), (1, -1), (1, 1))


class Cell(NamedTuple):
    row: int
    col: int


class Costmap:
    """Immutable 2D grid of traversal costs.

    Parameters
    ----------
    costs:
        Array-like of shape ``(height, width)`` with integer costs in 0..255.
    resolution:
        Meters per cell, strictly positive.
    lethal_threshold:
        Cost at or above which a cell blocks traversal.
    """

    __slots__ = ("_costs", "resolution", "lethal_threshold", "_flat")

    def __init__(self, costs, resolution: float = 1.0, lethal_threshold: int = LETHAL):
        arr = np.array(costs, dtype=np.int64, copy=True)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise MapFormatError(f"costs must be a non-empty 2D grid, got shape {arr.shape}")
        if arr.min() < 0 or arr.max() > 255:
            raise MapFormatError("costs must lie in [0, 255]")
        if not resolution > 0:
            raise MapFormatError(f"resolution must be > 0, got {resolution}")
        arr = arr.astype(np.uint8)
        arr.flags.writeable = False
        self._costs = arr
        self.resolution = float(resolution)
        self.lethal_threshold = int(lethal_threshold)
        self._flat: list[int] | None = None

    @classmethod
    def empty(cls, width: int, height: int, resolution: float = 1.0) -> Costmap:
        return cls(np.zeros((height, width), dtype=np.uint8), resolution)

    @property
    def costs(self) -> np.ndarray:
        """Read-only ``(height, width)`` uint8 view of the costs."""
        return self._costs

    @property
    def width(self) -> int:
        return self._costs.shape[1]

    @property
    def height(self) -> int:
        return self._costs.shape[0]

    @property
    def flat_costs(self) -> list[int]:
        """Row-major costs as a plain list, cached for fast scalar access."""
        if self._flat is None:
            self._flat = self._costs.ravel().tolist()
        return self._flat

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def cost(self, cell: tuple[int, int]) -> int:
        return self.flat_costs[cell[0] * self.width + cell[1]]

    def is_lethal(self, cell: tuple[int, int]) -> bool:
        return self.cost(cell) >= self.lethal_threshold

    def lethal_mask(self) -> np.ndarray:
        return self._costs >= self.lethal_threshold

    def comparable(self, other: Costmap) -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and self.resolution == other.resolution
        )

    def with_costs(self, updates: Iterable[tuple[tuple[int, int], int]]) -> Costmap:
        """Return a copy with the given ``(cell, cost)`` assignments applied."""
        arr = self._costs.copy()
        for (r, c), value in updates:
            arr[r, c] = value
        return Costmap(arr, self.resolution, self.lethal_threshold)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Costmap):
            return NotImplemented
        return (
            self.comparable(other)
            and self.lethal_threshold == other.lethal_threshold
            and np.array_equal(self._costs, other._costs)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.resolution, self._costs.tobytes()))

    def __repr__(self) -> str:
        n_lethal = int(self.lethal_mask().sum())
        return (
            f"Costmap({self.width}x{self.height}, res={self.resolution}, "
            f"lethal_cells={n_lethal})"
        )

    # -- serialization ----------------------------------------------------

    def to_ascii(self) -> str:
        """Serialize to the ``W H RES`` + character-grid format.

        Only binary maps (cost 0 or lethal) can be represented; anything else
        raises ``ValueError`` rather than being silently rounded.
        """
        lethal = self.lethal_mask()
        if np.any((self._costs != FREE) & ~lethal):
            raise ValueError("ASCII format only represents free (0) and lethal cells")
        lines = [f"{self.width} {self.height} {self.resolution!r}"]
        for row in lethal:
            lines.append("".join("#" if v else "." for v in row))
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "costs": self.flat_costs,
        }

    @classmethod
    def from_json(cls, data: dict | str) -> Costmap:
        if isinstance(data, str):
            data = json.loads(data)
        try:
            width, height = int(data["width"]), int(data["height"])
            costs = list(data["costs"])
            resolution = float(data["resolution"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(f"malformed JSON costmap: {exc}") from exc
        if width <= 0 or height <= 0 or len(costs) != width * height:
            raise MapFormatError(
                f"JSON costmap declares {width}x{height} but holds {len(costs)} costs"
            )
        return cls(np.asarray(costs).reshape(height, width), resolution)


@dataclass(frozen=True)
class ChangedCell:
    cell: Cell
    old_cost: int
    new_cost: int


@dataclass(frozen=True)
class CostmapDelta:
    """Cells whose cost moved by more than the noise threshold."""

    changed: tuple[ChangedCell, ...] = field(default_factory=tuple)
    magnitude: int = 0

    def __bool__(self) -> bool:
        return bool(self.changed)

    def __len__(self) -> int:
        return len(self.changed)

    @property
    def cells(self) -> list[Cell]:
        return [c.cell for c in self.changed]

    def bounding_box(self) -> tuple[Cell, Cell] | None:
        """Inclusive ``(top_left, bottom_right)`` of the changes, or None."""
        if not self.changed:
            return None
        rows = [c.cell.row for c in self.changed]
        cols = [c.cell.col for c in self.changed]
        return Cell(min(rows), min(cols)), Cell(max(rows), max(cols))


def load_map(text: str) -> Costmap:
    """Parse the ASCII map format.

    The first non-empty line is ``W H RES``; it is followed by ``H`` rows of
    exactly ``W`` characters, ``.`` for free and ``#`` for lethal.
    """
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MapFormatError("empty map text")
    header = lines[0].split()
    if len(header) != 3:
        raise MapFormatError(f"header must be 'W H RES', got {lines[0]!r}")
    try:
        width, height, resolution = int(header[0]), int(header[1]), float(header[2])
    except ValueError as exc:
        raise MapFormatError(f"bad header {lines[0]!r}") from exc
    if width <= 0 or height <= 0:
        raise MapFormatError(f"map must have positive size, got {width}x{height}")
    if not resolution > 0:
        raise MapFormatError(f"resolution must be > 0, got {resolution}")
    rows = lines[1:]
    if len(rows) != height:
        raise MapFormatError(f"header declares {height} rows, found {len(rows)}")
    costs = np.zeros((height, width), dtype=np.uint8)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise MapFormatError(f"row {r} has {len(row)} characters, expected {width}")
        for c, ch in enumerate(row):
            if ch == "#":
                costs[r, c] = LETHAL
            elif ch != ".":
                raise MapFormatError(f"unknown character {ch!r} at row {r}, col {c}")
    return Costmap(costs, resolution)


def inflation_radius_cells(robot_radius: float, resolution: float) -> int:
    # Tolerance keeps e.g. 0.3 / 0.1 == 2.9999999999999996 at 3, not 4.
    return max(0, math.ceil(robot_radius / resolution - 1e-9))


def inflate(costmap: Costmap, robot_radius: float) -> Costmap:
    """Mark every cell within the robot radius of a lethal cell as lethal.

    Distances are Euclidean in cell units, measured from the lethal cells of
    the input map, with the radius rounded up to whole cells.
    """
    if robot_radius < 0:
        raise ValueError(f"robot_radius must be >= 0, got {robot_radius}")
    r = inflation_radius_cells(robot_radius, costmap.resolution)
    if r == 0:
        return costmap
    lethal = costmap.lethal_mask()
    if not lethal.any():
        return costmap
    dist = distance_transform_edt(~lethal)
    grow = (dist <= r) & ~lethal
    if not grow.any():
        return costmap
    arr = costmap.costs.copy()
    arr[grow] = min(255, costmap.lethal_threshold)
    return Costmap(arr, costmap.resolution, costmap.lethal_threshold)


def cost_diff(current: Costmap, previous: Costmap, noise_threshold: int = 0) -> CostmapDelta:
    """Cells where ``|current - previous| > noise_threshold``, in row-major order."""
    if not current.comparable(previous):
        raise DimensionMismatchError(
            f"cannot diff {current.width}x{current.height}@{current.resolution} "
            f"against {previous.width}x{previous.height}@{previous.resolution}"
        )
    if current is previous or np.array_equal(current.costs, previous.costs):
        return CostmapDelta()
    new = current.costs.astype(np.int16)
    old = previous.costs.astype(np.int16)
    absdiff = np.abs(new - old)
    rows, cols = np.nonzero(absdiff > noise_threshold)
    if rows.size == 0:
        return CostmapDelta()
    changed = tuple(
        ChangedCell(Cell(r, c), o, n)
        for r, c, o, n in zip(
            rows.tolist(), cols.tolist(), old[rows, cols].tolist(), new[rows, cols].tolist()
        )
    )
    return CostmapDelta(changed, int(absdiff[rows, cols].sum()))


def neighbors(costmap: Costmap, cell: tuple[int, int]) -> list[tuple[Cell, float]]:
    """Traversable 8-connected neighbors of ``cell`` with their step costs.

    A diagonal step is dropped when either orthogonal cell it sweeps past is
    lethal, so paths never cut obstacle corners.
    """
    if not costmap.in_bounds(cell):
        raise ValueError(f"cell {tuple(cell)} is out of bounds")
    r, c = cell
    h, w = costmap.height, costmap.width
    flat = costmap.flat_costs
    lethal = costmap.lethal_threshold
    res = costmap.resolution

    def free(rr: int, cc: int) -> bool:
        return 0 <= rr < h and 0 <= cc < w and flat[rr * w + cc] < lethal

    out: list[tuple[Cell, float]] = []
    for dr, dc in ORTHOGONAL_MOVES:
        if free(r + dr, c + dc):
            out.append((Cell(r + dr, c + dc), res))
    for dr, dc in DIAGONAL_MOVES:
        if free(r + dr, c + dc) and free(r + dr, c) and free(r, c + dc):
            out.append((Cell(r + dr, c + dc), res * SQRT2))
    return out



@lru_cache(maxsize=32)
def successor_table(width: int, height: int) -> tuple[tuple[tuple[int, int, int], ...], ...]:
    """In-bounds candidate moves per flat cell index.

    Each move is ``(neighbor, side_a, side_b)``; for diagonal moves the sides
    are the two orthogonal cells that must be free to avoid corner cutting,
    for orthogonal moves both are -1. Lethality is left to the caller.
    """
    table = []
    for r in range(height):
        for c in range(width):
            moves = []
            for dr, dc in ORTHOGONAL_MOVES:
                rr, cc = r + dr, c + dc
                if 0 <= rr < height and 0 <= cc < width:
                    moves.append((rr * width + cc, -1, -1))
            for dr, dc in DIAGONAL_MOVES:
                rr, cc = r + dr, c + dc
                if 0 <= rr < height and 0 <= cc < width:
                    moves.append((rr * width + cc, rr * width + c, r * width + cc))
            table.append(tuple(moves))
    return tuple(table)
