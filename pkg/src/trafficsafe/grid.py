"""Square cell grid: indexing, letter+number names, 3x3 neighborhoods.

Columns grow east and are lettered spreadsheet-style (A..Z, AA..); rows grow
north and are numbered from 0. Cell A0 has its lower-left corner at the grid
origin.

Point-to-cell indexing uses half-open cells so the plane is partitioned. The
intra/inter/coexist predicates use closed bounds, so a point on a shared edge
satisfies both adjacent cells.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Optional

from .geo import CartPoint

DEFAULT_CELL_SIZE = 1000.0

_NAME_RE = re.compile(r"^([A-Z]+)(0|[1-9][0-9]*)$")

NEIGHBOR_OFFSETS = tuple(
    (dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)
)


class OutOfGridError(ValueError):
    pass


class CellNameError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    col: int
    row: int
    size: float = DEFAULT_CELL_SIZE

    def __post_init__(self):
        if self.col < 0 or self.row < 0:
            raise OutOfGridError(f"negative cell index ({self.col}, {self.row})")
        if not self.size > 0:
            raise ValueError(f"cell size must be > 0, got {self.size}")

    @property
    def x_min(self) -> float:
        return self.col * self.size

    @property
    def y_min(self) -> float:
        return self.row * self.size

    @property
    def center(self) -> CartPoint:
        return CartPoint(self.x_min + self.size / 2, self.y_min + self.size / 2)

    @property
    def name(self) -> str:
        return cell_name(self)

    def contains(self, p: CartPoint) -> bool:
        """Closed-bound containment."""
        return (self.x_min <= p.x <= self.x_min + self.size
                and self.y_min <= p.y <= self.y_min + self.size)

    def __str__(self) -> str:
        return self.name


def cell_of(p: CartPoint, d: float = DEFAULT_CELL_SIZE) -> Cell:
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise OutOfGridError(f"non-finite point {p}")
    if p.x < 0 or p.y < 0:
        raise OutOfGridError(f"point ({p.x}, {p.y}) lies west or south of the grid origin")
    return Cell(int(math.floor(p.x / d)), int(math.floor(p.y / d)), d)


def col_letters(col: int) -> str:
    if col < 0:
        raise OutOfGridError(f"negative column {col}")
    out = []
    n = col + 1
    while n:
        n, rem = divmod(n - 1, 26)
        out.append(chr(ord("A") + rem))
    return "".join(reversed(out))


def letters_col(letters: str) -> int:
    n = 0
    for ch in letters:
        n = n * 26 + (ord(ch) - ord("A") + 1)
    return n - 1


def cell_name(c: Cell) -> str:
    return f"{col_letters(c.col)}{c.row}"


def parse_cell_name(name: str, d: float = DEFAULT_CELL_SIZE) -> Cell:
    if not isinstance(name, str):
        raise CellNameError(f"cell name must be text, got {type(name).__name__}")
    m = _NAME_RE.match(name)
    if m is None:
        raise CellNameError(f"malformed cell name {name!r}")
    return Cell(letters_col(m.group(1)), int(m.group(2)), d)


def neighbor(c: Cell, dx: int, dy: int) -> Optional[Cell]:
    """The cell at offset (dx, dy), or None past the grid edge."""
    col, row = c.col + dx, c.row + dy
    if col < 0 or row < 0:
        return None
    return Cell(col, row, c.size)


@dataclass(frozen=True)
class Neighborhood:
    center: Cell
    # index-aligned with NEIGHBOR_OFFSETS; None marks a clipped member
    members: tuple[Optional[Cell], ...]

    def __iter__(self) -> Iterator[Cell]:
        return (m for m in self.members if m is not None)

    def __contains__(self, c: object) -> bool:
        return isinstance(c, Cell) and is_neighbor(self.center, c)


def neighborhood(c: Cell) -> Neighborhood:
    return Neighborhood(c, tuple(neighbor(c, dx, dy) for dx, dy in NEIGHBOR_OFFSETS))


def is_neighbor(a: Cell, b: Cell) -> bool:
    """b is one of the 8 cells around a (a itself excluded)."""
    if a.size != b.size:
        return False
    dx, dy = b.col - a.col, b.row - a.row
    return max(abs(dx), abs(dy)) == 1


def in_zone(a: Cell, b: Cell) -> bool:
    """b is a or one of its 8 neighbors."""
    return a == b or is_neighbor(a, b)


def intra(i: CartPoint, user_cell: Cell) -> bool:
    return user_cell.contains(i)


def inter(i: CartPoint, user_cell: Cell, sensor_cell: Cell) -> bool:
    return is_neighbor(user_cell, sensor_cell) and user_cell.contains(i)


def coexist(sensor_pos: CartPoint, user_cell: Cell) -> bool:
    return user_cell.contains(sensor_pos)
