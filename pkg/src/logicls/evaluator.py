"""Deterministic geometric answers to atomic subqueries over symbolic scenes."""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Any, Union

from .errors import EvaluationError
from .lang.ast import Selector
from .lang.compiler import ABSENT, UNLISTED, AtomicSubquery, Scope, SubqueryProgram
from .scene import BBox, ObjectInstance, Scene

CMP = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class Numeric:
    value: float

    def __post_init__(self) -> None:
        if isinstance(self.value, bool) or not math.isfinite(self.value):
            raise EvaluationError(f"numeric answer must be a finite number, got {self.value!r}")

    kind = "numeric"

    def render(self) -> str:
        v = self.value
        return str(int(v)) if float(v).is_integer() else repr(float(v))

    def to_json(self) -> Any:
        return int(self.value) if float(self.value).is_integer() else self.value


@dataclass(frozen=True)
class Boolean:
    value: bool
    kind = "boolean"

    def render(self) -> str:
        return "yes" if self.value else "no"

    def to_json(self) -> Any:
        return bool(self.value)


@dataclass(frozen=True)
class Categorical:
    value: str
    kind = "categorical"

    def render(self) -> str:
        return self.value

    def to_json(self) -> Any:
        return self.value


@dataclass(frozen=True)
class Unanswerable:
    """No answer exists, e.g. a required object is missing. Never the same as false."""

    reason: str = ""
    kind = "unanswerable"

    def render(self) -> str:
        return "unanswerable"

    def to_json(self) -> Any:
        return None


AnswerValue = Union[Numeric, Boolean, Categorical]
Outcome = Union[Numeric, Boolean, Categorical, Unanswerable]


def value_to_dict(v: Outcome) -> dict[str, Any]:
    data: dict[str, Any] = {"type": v.kind, "value": v.to_json()}
    if isinstance(v, Unanswerable) and v.reason:
        data["reason"] = v.reason
    return data


def value_from_dict(d: dict[str, Any]) -> Outcome:
    kind = d.get("type")
    if kind == "numeric":
        return Numeric(d["value"])
    if kind == "boolean":
        return Boolean(bool(d["value"]))
    if kind == "categorical":
        return Categorical(str(d["value"]))
    if kind == "unanswerable":
        return Unanswerable(d.get("reason", ""))
    raise EvaluationError(f"unknown answer type {kind!r}")


@dataclass
class Trace:
    """An answer plus the objects it was derived from, for grounded explanations."""

    value: Outcome
    objects: list[tuple[str, ObjectInstance]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def select(scene: Scene, selector: Selector) -> list[ObjectInstance]:
    return [o for o in scene.objects if selector.matches(o.category, o.attributes)]


def in_scope(point: tuple[float, float], scope: Scope | None, scene: Scene) -> bool:
    """Closed test for plain regions and the canvas; grid cells are half-open
    except along the grid's last row and column."""
    x, y = point
    if scope is None or scope.bounds is None:
        return 0 <= x <= scene.width and 0 <= y <= scene.height
    x1, y1, x2, y2 = scope.bounds
    if scope.cell is None:
        return x1 <= x <= x2 and y1 <= y <= y2
    in_x = x1 <= x < x2 or (scope.closed_right and x == x2)
    in_y = y1 <= y < y2 or (scope.closed_bottom and y == y2)
    return in_x and in_y


def resolve(scene: Scene, selector: Selector) -> tuple[ObjectInstance | None, int]:
    """Pick the single object a selector refers to: nearest the canvas centre, then smallest id."""
    matches = select(scene, selector)
    if not matches:
        return None, 0
    cx, cy = scene.width / 2.0, scene.height / 2.0
    best = min(matches, key=lambda o: (math.hypot(o.center[0] - cx, o.center[1] - cy), o.id))
    return best, len(matches)


def _order_key(value: str | None):
    if value is None:
        return (2, 0.0, "")
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def ordered(objs: list[ObjectInstance], key: str | None = None) -> list[ObjectInstance]:
    """Sort by attribute ``key`` when given, else by centre y then x; id breaks ties."""
    if key is None:
        return sorted(objs, key=lambda o: (o.center[1], o.center[0], o.id))
    return sorted(objs, key=lambda o: (_order_key(o.attributes.get(key)), o.center[1], o.center[0], o.id))


def _resolved_pair(scene: Scene, q: AtomicSubquery, t: Trace):
    c = q.constraint
    a, na = resolve(scene, c.selectors[0])
    if a is None:
        return None, None
    t.objects.append((c.selectors[0].describe(), a))
    if na > 1:
        t.notes.append(f"{na} candidates for {c.selectors[0].describe()}; used {a.id}, nearest the image centre")
    if c.region is not None:
        return a, BBox(*q.region_bounds)
    b, nb = resolve(scene, c.selectors[1])
    if b is None:
        return a, None
    t.objects.append((c.selectors[1].describe(), b))
    if nb > 1:
        t.notes.append(f"{nb} candidates for {c.selectors[1].describe()}; used {b.id}, nearest the image centre")
    return a, b.bbox


def relation_holds(name: str, a: BBox, b: BBox) -> bool:
    (ax, ay), (bx, by) = a.center, b.center
    if name == "left_of":
        return ax < bx
    if name == "right_of":
        return ax > bx
    if name == "above":
        return ay < by
    if name == "below":
        return ay > by
    if name == "inside":
        return b.contains(a)
    if name == "overlaps":
        return a.intersection_area(b) > 0
    raise EvaluationError(f"unknown relation {name!r}")


def trace(scene: Scene, q: AtomicSubquery) -> Trace:
    c = q.constraint
    role = q.role
    if role == "count":
        t = Trace(Numeric(0))
        sel = c.selectors[0]
        hits = [o for o in select(scene, sel) if in_scope(o.center, q.scope, scene)]
        t.value = Numeric(len(hits))
        t.objects = [(sel.describe(), o) for o in hits]
        return t
    if role in ("relation", "distance", "size_ratio"):
        t = Trace(Unanswerable())
        a, b = _resolved_pair(scene, q, t)
        if a is None or b is None:
            missing = c.selectors[0] if a is None else c.selectors[1]
            t.value = Unanswerable(f"no {missing.describe()} in the scene")
            return t
        if role == "relation":
            t.value = Boolean(relation_holds(c.relation, a.bbox, b))
        elif role == "distance":
            d = math.dist(a.bbox.center, b.center)
            t.notes.append(f"centre distance {d:.2f} px")
            t.value = Boolean(CMP[c.comparator](d, c.threshold))
        else:
            if b.area <= 0:
                raise EvaluationError("size_ratio divisor has zero area")
            ratio = a.bbox.area / b.area
            t.notes.append(f"area ratio {ratio:.4f}")
            t.value = Boolean(CMP[c.comparator](ratio, c.threshold))
        return t
    if role == "attribute":
        objs = ordered(select(scene, c.selectors[0]))
        i = q.scope.slot
        if i >= len(objs):
            t = Trace(Categorical(ABSENT))
            t.notes.append(f"slot {i + 1} is vacant ({len(objs)} {c.selectors[0].describe()} present)")
            return t
        obj = objs[i]
        raw = obj.attributes.get(c.key)
        value = raw if raw in c.values else UNLISTED
        t = Trace(Categorical(value), [(c.selectors[0].describe(), obj)])
        if value == UNLISTED:
            t.notes.append(f"{c.key} of {obj.id} is {raw!r}")
        return t
    if role in ("pairing_count", "pairing_match"):
        left = ordered(select(scene, c.selectors[0]), c.order_by)
        right = ordered(select(scene, c.selectors[1]), c.order_by)
        if role == "pairing_count":
            t = Trace(Boolean(len(left) == len(right)))
            t.notes.append(f"{len(left)} {c.selectors[0].describe()} vs {len(right)} {c.selectors[1].describe()}")
            t.objects = [(c.selectors[0].describe(), o) for o in left] + [
                (c.selectors[1].describe(), o) for o in right
            ]
            return t
        i = q.scope.slot
        if i >= len(left) and i >= len(right):
            t = Trace(Boolean(True))
            t.notes.append(f"slot {i + 1} is vacant on both sides")
            return t
        if i >= len(left) or i >= len(right):
            side = c.selectors[0] if i >= len(left) else c.selectors[1]
            return Trace(Unanswerable(f"no {side.describe()} #{i + 1} to pair"))
        a, b = left[i], right[i]
        t = Trace(Boolean(a.attributes.get(c.key) is not None and a.attributes.get(c.key) == b.attributes.get(c.key)))
        t.objects = [(c.selectors[0].describe(), a), (c.selectors[1].describe(), b)]
        return t
    raise EvaluationError(f"unknown subquery role {role!r}")


def evaluate(scene: Scene, subquery: AtomicSubquery) -> Outcome:
    return trace(scene, subquery).value


def evaluate_program(scene: Scene, program: SubqueryProgram) -> list[tuple[str, Outcome]]:
    return [(q.id, evaluate(scene, q)) for q in program.subqueries]
