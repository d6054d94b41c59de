"""Syntax tree for scenario constraint files (``.lcs``)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

COMPARATORS = ("==", "!=", "<=", ">=", "<", ">")
RELATIONS = ("left_of", "right_of", "above", "below", "inside", "overlaps")
KINDS = ("count", "count_per_cell", "relation", "distance", "size_ratio", "attribute_in", "pairing")


@dataclass(frozen=True)
class Pos:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Selector:
    category: str
    filters: tuple[tuple[str, str], ...] = ()
    pos: Optional[Pos] = field(default=None, compare=False, repr=False)

    def matches(self, category: str, attributes) -> bool:
        if category != self.category:
            return False
        return all(attributes.get(k) == v for k, v in self.filters)

    def describe(self) -> str:
        if not self.filters:
            return self.category
        inner = ", ".join(f"{k}={v}" for k, v in self.filters)
        return f"{self.category}[{inner}]"


@dataclass(frozen=True)
class Region:
    name: str
    bbox: tuple[float, float, float, float]
    rows: Optional[int] = None
    cols: Optional[int] = None
    pos: Optional[Pos] = field(default=None, compare=False, repr=False)

    @property
    def is_grid(self) -> bool:
        return self.rows is not None

    def cell_bounds(self, row: int, col: int) -> tuple[float, float, float, float]:
        x1, y1, x2, y2 = self.bbox
        rows, cols = self.rows or 1, self.cols or 1
        w = (x2 - x1) / cols
        h = (y2 - y1) / rows
        return (x1 + col * w, y1 + row * h, x1 + (col + 1) * w, y1 + (row + 1) * h)


@dataclass(frozen=True)
class Constraint:
    """One declarative rule; exactly one violation category per rule.

    Field use by kind:
      count / count_per_cell  selectors=(a,), comparator, threshold, region (scope)
      relation                selectors=(a,) or (a, b), relation, region (when b is a region)
      distance / size_ratio   selectors=(a, b), comparator, threshold
      attribute_in            selectors=(a,), key, values
      pairing                 selectors=(a, b), key, order_by
    """

    id: str
    kind: str
    violation: str
    selectors: tuple[Selector, ...]
    comparator: Optional[str] = None
    threshold: Optional[float] = None
    region: Optional[str] = None
    relation: Optional[str] = None
    key: Optional[str] = None
    values: Optional[tuple[str, ...]] = None
    order_by: Optional[str] = None
    pos: Optional[Pos] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    classes: tuple[str, ...]
    objects: tuple[str, ...]
    regions: tuple[Region, ...] = ()
    maxcounts: tuple[tuple[str, int], ...] = ()
    constraints: tuple[Constraint, ...] = ()

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def maxcount(self, category: str) -> Optional[int]:
        for cat, n in self.maxcounts:
            if cat == category:
                return n
        return None

    def constraint(self, cid: str) -> Constraint:
        for c in self.constraints:
            if c.id == cid:
                return c
        raise KeyError(cid)

    @property
    def canvas_size(self) -> tuple[float, float]:
        """Canvas extent implied by the declared regions (800x600 when none)."""
        if not self.regions:
            return (800.0, 600.0)
        return (
            float(max(r.bbox[2] for r in self.regions)),
            float(max(r.bbox[3] for r in self.regions)),
        )
