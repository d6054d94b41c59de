"""Decompose scenario constraints into atomic, individually checkable subqueries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Optional

from ..errors import CompileError
from .ast import Constraint, ScenarioSpec, Selector
from .serializer import format_number

# Extra categorical answers beyond a rule's allowed values.
UNLISTED = "unlisted"  # the object's attribute is outside the allowed set (or missing)
ABSENT = "absent"      # no object occupies this slot

ANSWER_TYPES = ("numeric", "boolean", "categorical")
REASONING_KINDS = ("direction", "distance", "size", "counting", "other")

_CMP_WORDS = {
    "==": "equal to",
    "!=": "different from",
    "<": "less than",
    "<=": "at most",
    ">": "greater than",
    ">=": "at least",
}
_REL_WORDS = {
    "left_of": "to the left of",
    "right_of": "to the right of",
    "above": "above",
    "below": "below",
    "inside": "inside",
    "overlaps": "overlapping",
}

TEMPLATES = {
    "count": "How many {a} are there {scope}?",
    "relation": "Is the {a} {rel} {b}?",
    "distance": "Is the distance between the centres of the {a} and the {b} {cmp} {threshold} pixels?",
    "size_ratio": "Is the area of the {a} {cmp} {threshold} times the area of the {b}?",
    "attribute": (
        "What is the {key} of {a} #{index} (objects ordered top to bottom, then left to right)? "
        "Answer with one of: {values}."
    ),
    "pairing_count": "Are there as many {a} as {b}?",
    "pairing_match": "Do {a} #{index} and {b} #{index}, both ordered by {order}, have the same {key}?",
}


@dataclass(frozen=True)
class Check:
    """Predicate an answer must satisfy: ``answer <op> expected``."""

    op: str
    expected: Any

    def to_dict(self) -> dict[str, Any]:
        exp = list(self.expected) if isinstance(self.expected, tuple) else self.expected
        return {"op": self.op, "expected": exp}


@dataclass(frozen=True)
class Scope:
    region: Optional[str] = None
    cell: Optional[tuple[int, int]] = None
    bounds: Optional[tuple[float, float, float, float]] = None
    closed_right: bool = True
    closed_bottom: bool = True
    slot: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {}
        if self.region is not None:
            data["region"] = self.region
        if self.cell is not None:
            data["cell"] = list(self.cell)
        if self.bounds is not None:
            data["bounds"] = list(self.bounds)
        if self.slot is not None:
            data["slot"] = self.slot
        return data


@dataclass(frozen=True)
class AtomicSubquery:
    id: str
    question_text: str
    answer_type: str
    check: Check
    violation_category: str
    reasoning_kind: str
    role: str
    constraint: Constraint
    scope: Optional[Scope] = None
    values: tuple[str, ...] = ()
    slots: tuple[tuple[str, str], ...] = ()
    region_bounds: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self) -> None:
        if self.answer_type not in ANSWER_TYPES:
            raise CompileError(f"unknown answer type {self.answer_type!r}")
        if self.answer_type == "categorical" and not self.values:
            raise CompileError(f"categorical subquery {self.id} has an empty value set")

    @property
    def constraint_id(self) -> str:
        return self.constraint.id

    def slot_map(self) -> dict[str, str]:
        return dict(self.slots)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "id": self.id,
            "constraint": self.constraint.id,
            "kind": self.constraint.kind,
            "role": self.role,
            "question_text": self.question_text,
            "answer_type": self.answer_type,
            "check": self.check.to_dict(),
            "violation_category": self.violation_category,
            "reasoning_kind": self.reasoning_kind,
        }
        if self.values:
            data["values"] = list(self.values)
        if self.scope is not None:
            data["scope"] = self.scope.to_dict()
        return data


@dataclass(frozen=True)
class SubqueryProgram:
    scenario: str
    subqueries: tuple[AtomicSubquery, ...]
    groups: tuple[tuple[str, tuple[int, ...]], ...] = field(default=())

    def __len__(self) -> int:
        return len(self.subqueries)

    def __iter__(self):
        return iter(self.subqueries)

    def by_id(self) -> dict[str, AtomicSubquery]:
        return {q.id: q for q in self.subqueries}

    def group_of(self, constraint_id: str) -> list[AtomicSubquery]:
        for cid, idx in self.groups:
            if cid == constraint_id:
                return [self.subqueries[i] for i in idx]
        raise KeyError(constraint_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "T": len(self.subqueries),
            "groups": {cid: [self.subqueries[i].id for i in idx] for cid, idx in self.groups},
            "subqueries": [q.to_dict() for q in self.subqueries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _fmt_box(b) -> str:
    return "[" + ", ".join(format_number(v) for v in b) + "]"


def _scope_text(scope: Optional[Scope]) -> str:
    if scope is None:
        return "in the whole image"
    if scope.cell is not None:
        r, c = scope.cell
        return f"in cell ({r}, {c}) of grid {scope.region} {_fmt_box(scope.bounds)}"
    return f"in region {scope.region} {_fmt_box(scope.bounds)}"


def _relation_kind(name: str) -> str:
    return "direction" if name in ("left_of", "right_of", "above", "below") else "other"


def expansion_size(spec: ScenarioSpec, c: Constraint) -> int:
    """Number of subqueries a constraint expands to (closed form)."""
    if c.kind == "count_per_cell":
        r = spec.region(c.region)
        return r.rows * r.cols
    if c.kind in ("count", "relation", "distance", "size_ratio"):
        return 1
    bound = spec.maxcount(c.selectors[0].category)
    if bound is None:
        raise CompileError(f"constraint {c.id!r}: no maxcount declared for {c.selectors[0].category!r}")
    return bound if c.kind == "attribute_in" else 1 + bound


def _make(c, ordinal, role, answer_type, check, kind, slots, scope=None, values=(), region_bounds=None):
    text = TEMPLATES[role].format(**slots)
    return AtomicSubquery(
        id=f"{c.id}.{ordinal}",
        question_text=text,
        answer_type=answer_type,
        check=check,
        violation_category=c.violation,
        reasoning_kind=kind,
        role=role,
        constraint=c,
        scope=scope,
        values=tuple(values),
        slots=tuple(slots.items()),
        region_bounds=region_bounds,
    )


def _expand(spec: ScenarioSpec, c: Constraint) -> list[AtomicSubquery]:
    a: Selector = c.selectors[0]
    if c.kind in ("count", "count_per_cell"):
        check = Check(c.comparator, int(c.threshold))
        if c.kind == "count":
            scope = None
            if c.region is not None:
                r = spec.region(c.region)
                scope = Scope(region=r.name, bounds=r.bbox)
            slots = {"a": a.describe(), "scope": _scope_text(scope)}
            return [_make(c, 0, "count", "numeric", check, "counting", slots, scope)]
        region = spec.region(c.region)
        out = []
        for row in range(region.rows):
            for col in range(region.cols):
                scope = Scope(
                    region=region.name,
                    cell=(row, col),
                    bounds=region.cell_bounds(row, col),
                    closed_right=col == region.cols - 1,
                    closed_bottom=row == region.rows - 1,
                )
                slots = {"a": a.describe(), "scope": _scope_text(scope)}
                out.append(_make(c, len(out), "count", "numeric", check, "counting", slots, scope))
        return out
    if c.kind == "relation":
        if c.region is not None:
            r = spec.region(c.region)
            b_text = f"region {r.name} {_fmt_box(r.bbox)}"
            bounds = r.bbox
        else:
            b_text = "the " + c.selectors[1].describe()
            bounds = None
        slots = {"a": a.describe(), "rel": _REL_WORDS[c.relation], "b": b_text}
        return [_make(c, 0, "relation", "boolean", Check("==", True), _relation_kind(c.relation),
                      slots, region_bounds=bounds)]
    if c.kind in ("distance", "size_ratio"):
        slots = {
            "a": a.describe(),
            "b": c.selectors[1].describe(),
            "cmp": _CMP_WORDS[c.comparator],
            "threshold": format_number(c.threshold),
        }
        kind = "distance" if c.kind == "distance" else "size"
        return [_make(c, 0, c.kind, "boolean", Check("==", True), kind, slots)]
    expansion_size(spec, c)  # raises when unbounded
    bound = spec.maxcount(a.category)
    if c.kind == "attribute_in":
        values = tuple(c.values) + (UNLISTED, ABSENT)
        check = Check("in", tuple(c.values) + (ABSENT,))
        out = []
        for i in range(bound):
            slots = {"a": a.describe(), "key": c.key, "index": str(i + 1), "values": ", ".join(values)}
            out.append(_make(c, i, "attribute", "categorical", check, "other", slots,
                             Scope(slot=i), values))
        return out
    # pairing
    b = c.selectors[1]
    order = c.order_by or "position"
    out = [_make(c, 0, "pairing_count", "boolean", Check("==", True), "counting",
                 {"a": a.describe(), "b": b.describe()})]
    for i in range(bound):
        slots = {"a": a.describe(), "b": b.describe(), "index": str(i + 1), "order": order, "key": c.key}
        out.append(_make(c, i + 1, "pairing_match", "boolean", Check("==", True), "direction",
                         slots, Scope(slot=i)))
    return out


@lru_cache(maxsize=64)
def compile_spec(spec: ScenarioSpec) -> SubqueryProgram:
    """Deterministic expansion of every constraint, in declaration order."""
    if not spec.constraints:
        raise CompileError(f"scenario {spec.name!r} has no constraints to compile")
    subqueries: list[AtomicSubquery] = []
    groups = []
    for c in spec.constraints:
        if c.violation not in spec.classes:
            raise CompileError(f"constraint {c.id!r}: violation {c.violation!r} not declared in classes")
        start = len(subqueries)
        subqueries.extend(_expand(spec, c))
        groups.append((c.id, tuple(range(start, len(subqueries)))))
    ids = [q.id for q in subqueries]
    if len(set(ids)) != len(ids):
        raise CompileError("subquery ids are not unique")
    return SubqueryProgram(spec.name, tuple(subqueries), tuple(groups))
