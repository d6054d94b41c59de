"""Seeded synthetic scenes with a known set of injected constraint violations.

A scene is built in two passes. First a layout that satisfies every constraint
is sampled: count rules fix how many objects of each selector live in each
region or grid cell, attribute and pairing rules fix attributes, and the
pairwise geometric rules (relations, distances, size ratios) are repaired by
resampling until they hold. Then each requested category is broken by an edit
targeted at one of its constraints. The result is re-classified against the
ground truth and kept only if the labels match the request exactly;
otherwise a fresh attempt is drawn.
"""

from __future__ import annotations

import functools
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .aggregator import truth_labels
from .errors import GenerationError, UnknownViolationError, UnsatisfiableError
from .evaluator import CMP, Boolean, evaluate, ordered, resolve, select
from .lang.ast import Constraint, ScenarioSpec, Selector
from .lang.compiler import AtomicSubquery, compile_spec
from .scene import BBox, LabelSet, ObjectInstance, Scene

Box = tuple[float, float, float, float]

MAX_ATTEMPTS = 60
REPAIR_ROUNDS = 30
OFF_SPEC_VALUE = "other"
_BINARY = ("relation", "distance", "size_ratio")


@dataclass
class _Unit:
    bounds: Box
    target: int


@dataclass
class _Group:
    selector: Selector
    units: list[_Unit]
    size_frac: tuple[float, float] = (0.15, 0.35)


@dataclass
class _Draft:
    """Mutable working copy of a scene under construction."""

    spec: ScenarioSpec
    width: float
    height: float
    objects: dict[str, dict] = field(default_factory=dict)
    counters: dict[str, itertools.count] = field(default_factory=dict)

    def new_id(self, category: str) -> str:
        counter = self.counters.setdefault(category, itertools.count(1))
        while True:
            oid = f"{category}_{next(counter):02d}"
            if oid not in self.objects:
                return oid

    def add(self, category: str, box: Box, attributes: dict[str, str], home: Box) -> str:
        oid = self.new_id(category)
        self.objects[oid] = {"category": category, "box": _round_box(box), "attributes": dict(attributes), "home": home}
        return oid

    def scene(self, image_ref: str = "draft", labels: LabelSet | None = None,
              categories: frozenset[str] | None = None) -> Scene:
        """Freeze the draft; ``categories`` keeps only those objects (enough for one rule)."""
        objs = [
            ObjectInstance(oid, o["category"], BBox(*o["box"]), o["attributes"])
            for oid, o in self.objects.items()
            if categories is None or o["category"] in categories
        ]
        return Scene(self.spec.name, image_ref, self.width, self.height, tuple(objs), labels)


def _round_box(box: Box) -> Box:
    x1, y1, x2, y2 = (round(v, 2) for v in box)
    if x2 <= x1:
        x2 = x1 + 0.01
    if y2 <= y1:
        y2 = y1 + 0.01
    return (x1, y1, x2, y2)


def _first_subquery(spec: ScenarioSpec, c: Constraint) -> AtomicSubquery:
    return compile_spec(spec).group_of(c.id)[0]


# --- static conflict detection -------------------------------------------------

def _probe_values(thresholds: Iterable[float]) -> list[float]:
    pts = {0.0}
    for t in thresholds:
        for d in (-1.0, -0.5, -1e-6, 0.0, 1e-6, 0.5, 1.0):
            pts.add(t + d)
        pts.add(t * 2 + 1)
    return sorted(pts)


def _conflict(a: Constraint, b: Constraint) -> bool:
    """True when no single measured value can violate both constraints."""
    numeric = ("count", "distance", "size_ratio")
    if a.kind != b.kind or a.kind not in numeric:
        return False
    if a.selectors != b.selectors or a.region != b.region:
        return False
    for v in _probe_values((a.threshold, b.threshold)):
        if a.kind == "count" and (v < 0 or not float(v).is_integer()):
            continue
        if not CMP[a.comparator](v, a.threshold) and not CMP[b.comparator](v, b.threshold):
            return False
    return True


def statically_compatible(spec: ScenarioSpec, categories: Iterable[str]) -> bool:
    cats = sorted(set(categories))
    for x, y in itertools.combinations(cats, 2):
        cx = [c for c in spec.constraints if c.violation == x]
        cy = [c for c in spec.constraints if c.violation == y]
        if all(_conflict(a, b) for a in cx for b in cy):
            return False
    return True


@functools.lru_cache(maxsize=64)
def realizable_sets(spec: ScenarioSpec, max_size: int = 2, probe_seeds: int = 2) -> list[frozenset[str]]:
    """Label sets of size <= ``max_size`` the generator can produce for ``spec``.

    Sets that are statically compatible are kept only if generation succeeds
    for one of the first ``probe_seeds`` seeds. Some singletons fail this
    probe: deleting an object that another rule also refers to makes that rule
    unanswerable too.
    """
    out = []
    for k in range(0, max_size + 1):
        for combo in itertools.combinations(spec.classes, k):
            if not statically_compatible(spec, combo):
                continue
            for seed in range(probe_seeds):
                try:
                    generate_scene(spec, combo, seed, max_attempts=15)
                except UnsatisfiableError:
                    continue
                out.append(frozenset(combo))
                break
    return out


# --- normal layout ------------------------------------------------------------

def _pick_count(comparators: list[tuple[str, float]]) -> int:
    top = int(max(t for _, t in comparators)) + 3
    ok = [n for n in range(0, max(top, 1) + 1) if all(CMP[op](n, t) for op, t in comparators)]
    if not ok:
        raise GenerationError(f"count rules {comparators} admit no count")
    if any(op in ("==", ">=", ">") for op, _ in comparators):
        return ok[0]
    return min(ok[-1], int(max(t for _, t in comparators)))


def _covers(group: _Group, sel: Selector) -> bool:
    g = group.selector
    if g.category != sel.category or sum(u.target for u in group.units) == 0:
        return False
    return set(sel.filters) <= set(g.filters)


def _plan_groups(spec: ScenarioSpec) -> list[_Group]:
    width, height = spec.canvas_size
    canvas: Box = (0.0, 0.0, width, height)
    rules: dict[tuple[Selector, Optional[str]], list[tuple[str, float]]] = {}
    for c in spec.constraints:
        if c.kind in ("count", "count_per_cell"):
            rules.setdefault((c.selectors[0], c.region), []).append((c.comparator, c.threshold))
    groups = []
    for (sel, region), comps in rules.items():
        n = _pick_count(comps)
        if region is None:
            units = [_Unit(canvas, n)]
        else:
            r = spec.region(region)
            if r.is_grid:
                units = [_Unit(r.cell_bounds(i, j), n) for i in range(r.rows) for j in range(r.cols)]
            else:
                units = [_Unit(r.bbox, n)]
        groups.append(_Group(sel, units))
    for c in spec.constraints:
        if c.kind in ("count", "count_per_cell"):
            continue
        sels = list(c.selectors)
        for sel in sels:
            if any(_covers(g, sel) for g in groups):
                continue
            if c.kind in ("attribute_in", "pairing"):
                n = spec.maxcount(c.selectors[0].category) or 1
            else:
                n = 1
            groups.append(_Group(sel, [_Unit(canvas, n)]))
    return groups


def _sample_box(rng: random.Random, bounds: Box, frac: tuple[float, float], size: tuple[float, float] | None = None) -> Box:
    x1, y1, x2, y2 = bounds
    bw, bh = x2 - x1, y2 - y1
    if size is None:
        side = min(bw, bh) * rng.uniform(*frac)
        aspect = rng.uniform(0.75, 1.33)
        w, h = side * math.sqrt(aspect), side / math.sqrt(aspect)
    else:
        w, h = size
    w, h = min(w, bw * 0.95), min(h, bh * 0.95)
    ox = rng.uniform(x1, x2 - w)
    oy = rng.uniform(y1, y2 - h)
    return (ox, oy, ox + w, oy + h)


def _iou(a: Box, b: Box) -> float:
    return BBox(*a).iou(BBox(*b))


def _place(draft: _Draft, rng: random.Random, category: str, bounds: Box, frac, size=None) -> Box:
    same = [o["box"] for o in draft.objects.values() if o["category"] == category]
    box = _sample_box(rng, bounds, frac, size)
    for _ in range(20):
        if all(_iou(box, other) == 0.0 for other in same):
            break
        box = _sample_box(rng, bounds, frac, size)
    return box


def _valid_attributes(spec: ScenarioSpec, sel: Selector, rng: random.Random) -> dict[str, str]:
    attrs = dict(sel.filters)
    for c in spec.constraints:
        if c.kind == "attribute_in" and c.selectors[0].matches(sel.category, attrs) and c.key not in attrs:
            attrs[c.key] = rng.choice(c.values)
    return attrs


def _assign_pairings(draft: _Draft, rng: random.Random) -> None:
    for c in draft.spec.constraints:
        if c.kind != "pairing":
            continue
        a_sel, b_sel = c.selectors
        scene = draft.scene()
        left, right = select(scene, a_sel), select(scene, b_sel)
        if len(right) != len(left):
            raise GenerationError(f"pairing {c.id}: generator produced unequal lists")
        if c.order_by:
            for i, obj in enumerate(ordered(left)):
                draft.objects[obj.id]["attributes"][c.order_by] = str(i + 1)
            for i, obj in enumerate(ordered(right)):
                draft.objects[obj.id]["attributes"][c.order_by] = str(i + 1)
            scene = draft.scene()
            left = select(scene, a_sel)
            right = select(scene, b_sel)
        keys = [str(i + 1) for i in range(len(left))]
        rng.shuffle(keys)
        for a, b, k in zip(ordered(left, c.order_by), ordered(right, c.order_by), keys):
            draft.objects[a.id]["attributes"][c.key] = k
            draft.objects[b.id]["attributes"][c.key] = k


def _binary_ok(draft: _Draft, c: Constraint) -> Optional[bool]:
    scene = draft.scene(categories=frozenset(sel.category for sel in c.selectors))
    value = evaluate(scene, _first_subquery(draft.spec, c))
    return value.value if isinstance(value, Boolean) else None


def _target_ratio(rng: random.Random, op: str, k: float, want: bool) -> float:
    lower_ok = op in (">=", ">")
    upper_ok = op in ("<=", "<")
    if op == "==":
        return k if want else k * rng.uniform(1.1, 1.4)
    if op == "!=":
        return k * rng.uniform(1.1, 1.4) if want else k
    if lower_ok == want:
        return k * rng.uniform(1.05, 1.4)
    assert upper_ok or lower_ok
    return k * rng.uniform(0.55, 0.95)


def _repair(draft: _Draft, rng: random.Random, c: Constraint, want: bool) -> bool:
    """Move or resize the first operand of a geometric rule until the rule evaluates to ``want``."""
    scene = draft.scene()
    a, _ = resolve(scene, c.selectors[0])
    if a is None:
        return False
    obj = draft.objects[a.id]
    canvas: Box = (0.0, 0.0, draft.width, draft.height)
    if c.region is not None:
        ref = draft.spec.region(c.region).bbox
    else:
        b, _ = resolve(scene, c.selectors[1])
        if b is None:
            return False
        ref = tuple(b.bbox.as_list())
    x1, y1, x2, y2 = obj["box"]
    w, h = x2 - x1, y2 - y1

    if c.kind == "size_ratio":
        rx1, ry1, rx2, ry2 = ref
        ratio = _target_ratio(rng, c.comparator, c.threshold, want)
        scale = math.sqrt(ratio * (rx2 - rx1) * (ry2 - ry1) / (w * h))
        nw, nh = w * scale, h * scale
        if nw >= draft.width or nh >= draft.height:
            return False
        cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
        nx1 = min(max(cx - nw / 2, 0.0), draft.width - nw)
        ny1 = min(max(cy - nh / 2, 0.0), draft.height - nh)
        obj["box"] = _round_box((nx1, ny1, nx1 + nw, ny1 + nh))
        return _binary_ok(draft, c) is want

    if c.kind == "relation" and c.relation == "inside" and want:
        rx1, ry1, rx2, ry2 = ref
        rw, rh = rx2 - rx1, ry2 - ry1
        if w > rw * 0.95 or h > rh * 0.95:
            f = min(rw / w, rh / h) * rng.uniform(0.5, 0.9)
            w, h = w * f, h * f
        obj["box"] = _round_box(_sample_box(rng, ref, (0, 0), (w, h)))
        return _binary_ok(draft, c) is want

    bounds = obj["home"] if want else canvas
    for _ in range(80):
        obj["box"] = _round_box(_sample_box(rng, bounds, (0, 0), (w, h)))
        if _binary_ok(draft, c) is want:
            return True
    return False


def _normal_draft(spec: ScenarioSpec, rng: random.Random) -> _Draft:
    width, height = spec.canvas_size
    draft = _Draft(spec, width, height)
    for group in _plan_groups(spec):
        for unit in group.units:
            for _ in range(unit.target):
                box = _place(draft, rng, group.selector.category, unit.bounds, group.size_frac)
                draft.add(group.selector.category, box, _valid_attributes(spec, group.selector, rng), unit.bounds)
    _assign_pairings(draft, rng)
    binary = [c for c in spec.constraints if c.kind in _BINARY]
    for _ in range(REPAIR_ROUNDS):
        broken = [c for c in binary if _binary_ok(draft, c) is not True]
        if not broken:
            return draft
        for c in broken:
            _repair(draft, rng, c, True)
    raise GenerationError("could not satisfy the geometric rules")


# --- violation edits ----------------------------------------------------------

def _count_units(spec: ScenarioSpec, c: Constraint, draft: _Draft) -> list[tuple[AtomicSubquery, Box]]:
    out = []
    for q in compile_spec(spec).group_of(c.id):
        bounds = q.scope.bounds if q.scope is not None and q.scope.bounds else (0.0, 0.0, draft.width, draft.height)
        out.append((q, bounds))
    return out


def _break_count(draft: _Draft, rng: random.Random, c: Constraint) -> bool:
    spec = draft.spec
    q, bounds = rng.choice(_count_units(spec, c, draft))
    scene = draft.scene()
    n = int(evaluate(scene, q).value)
    candidates = [m for m in range(0, n + 4) if not CMP[c.comparator](m, c.threshold)]
    if not candidates:
        return False
    best = min(abs(m - n) for m in candidates)
    m = rng.choice([m for m in candidates if abs(m - n) == best])
    sel = c.selectors[0]
    if m < n:
        from .evaluator import in_scope

        inside = [o for o in select(scene, sel) if in_scope(o.center, q.scope, scene)]
        for o in rng.sample(inside, n - m):
            del draft.objects[o.id]
    else:
        template = [o for o in draft.objects.values() if o["category"] == sel.category]
        size = None
        if template:
            bx = rng.choice(template)["box"]
            size = (bx[2] - bx[0], bx[3] - bx[1])
        for _ in range(m - n):
            box = _place(draft, rng, sel.category, bounds, (0.15, 0.35), size)
            draft.add(sel.category, box, _valid_attributes(spec, sel, rng), bounds)
    return True


def _break_attribute(draft: _Draft, rng: random.Random, c: Constraint) -> bool:
    objs = ordered(select(draft.scene(), c.selectors[0]))[: draft.spec.maxcount(c.selectors[0].category)]
    if not objs:
        return False
    victim = rng.choice(objs)
    draft.objects[victim.id]["attributes"][c.key] = OFF_SPEC_VALUE
    return True


def _break_pairing(draft: _Draft, rng: random.Random, c: Constraint) -> bool:
    scene = draft.scene()
    left = ordered(select(scene, c.selectors[0]), c.order_by)
    right = ordered(select(scene, c.selectors[1]), c.order_by)
    options = []
    if len(left) >= 2:
        options.append("swap")
    if left:
        options.append("retag")
    if right:
        options.append("drop")
    if not options:
        return False
    move = rng.choice(options)
    if move == "swap":
        i, j = rng.sample(range(len(left)), 2)
        ai, aj = draft.objects[left[i].id]["attributes"], draft.objects[left[j].id]["attributes"]
        if ai.get(c.key) == aj.get(c.key):
            return False
        ai[c.key], aj[c.key] = aj.get(c.key), ai.get(c.key)
    elif move == "retag":
        victim = rng.choice(left)
        draft.objects[victim.id]["attributes"][c.key] = OFF_SPEC_VALUE
    else:
        del draft.objects[rng.choice(right).id]
    return True


def _break(draft: _Draft, rng: random.Random, c: Constraint) -> bool:
    if c.kind in ("count", "count_per_cell"):
        return _break_count(draft, rng, c)
    if c.kind in _BINARY:
        return _repair(draft, rng, c, False)
    if c.kind == "attribute_in":
        return _break_attribute(draft, rng, c)
    return _break_pairing(draft, rng, c)


def _default_ref(spec: ScenarioSpec, injected: frozenset[str], seed: int) -> str:
    tag = "+".join(sorted(injected)) or "normal"
    return f"synthetic://{spec.name}/{seed:06d}/{tag}"


def generate_scene(
    spec: ScenarioSpec,
    injected_violations: Iterable[str] = (),
    seed: int = 0,
    image_ref: str | None = None,
    max_attempts: int = MAX_ATTEMPTS,
) -> Scene:
    """A scene whose ground-truth classification is exactly ``injected_violations``
    (``{normal}`` when empty). Deterministic in (spec, injected set, seed)."""
    injected = frozenset(injected_violations)
    unknown = injected - set(spec.classes)
    if unknown:
        raise UnknownViolationError(f"unknown violation categories for {spec.name}: {sorted(unknown)}")
    if not statically_compatible(spec, injected):
        raise UnsatisfiableError(f"{sorted(injected)} cannot be realized together in {spec.name}")
    target = LabelSet.from_anomalies(injected)
    ref = image_ref or _default_ref(spec, injected, seed)
    for attempt in range(max_attempts):
        rng = random.Random(f"{spec.name}|{','.join(sorted(injected))}|{seed}|{attempt}")
        try:
            draft = _normal_draft(spec, rng)
        except GenerationError:
            continue
        ok = True
        for category in sorted(injected):
            options = [c for c in spec.constraints if c.violation == category]
            if not _break(draft, rng, rng.choice(options)):
                ok = False
                break
        if not ok:
            continue
        scene = draft.scene(ref)
        if truth_labels(scene, spec) == target:
            return scene.with_labels(target)
    raise UnsatisfiableError(
        f"no scene realizing {sorted(injected) or ['normal']} for {spec.name} after {max_attempts} attempts"
    )
