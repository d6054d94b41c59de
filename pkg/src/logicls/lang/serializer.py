from __future__ import annotations

import re

from .ast import Constraint, ScenarioSpec, Selector

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?\Z")


def format_number(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    text = repr(float(x))
    if "e" in text or "E" in text:
        text = f"{x:.17f}".rstrip("0")
    return text


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _value(v: str) -> str:
    return v if _IDENT.match(v) or _NUMBER.match(v) else _quote(v)


def _selector(sel: Selector) -> str:
    if not sel.filters:
        return sel.category
    inner = ", ".join(f"{k}={_value(v)}" for k, v in sel.filters)
    return f"{sel.category}[{inner}]"


def _box(b) -> str:
    return "[" + ", ".join(format_number(v) for v in b) + "]"


def _rule(c: Constraint) -> str:
    s = c.selectors
    if c.kind in ("count", "count_per_cell"):
        text = f"count({_selector(s[0])}) {c.comparator} {int(c.threshold)}"
        return text + (f" per {c.region}" if c.region else "")
    if c.kind == "relation":
        other = c.region if c.region is not None else _selector(s[1])
        return f"relation({_selector(s[0])}, {other}) is {c.relation}"
    if c.kind in ("distance", "size_ratio"):
        return f"{c.kind}({_selector(s[0])}, {_selector(s[1])}) {c.comparator} {format_number(c.threshold)}"
    if c.kind == "attribute_in":
        values = ", ".join(_value(v) for v in c.values)
        return f"attribute({_selector(s[0])}, {c.key}) in {{{values}}}"
    text = f"pairing({_selector(s[0])}, {_selector(s[1])}) by {c.key}"
    return text + (f" order_by {c.order_by}" if c.order_by else "")


def serialize(spec: ScenarioSpec) -> str:
    """Render a spec back to canonical ``.lcs`` source."""
    lines = [f"scenario {_quote(spec.name)} {{"]
    if spec.classes:
        lines.append("  classes: " + ", ".join(spec.classes))
    if spec.objects:
        lines.append("  objects: " + ", ".join(spec.objects))
    for r in spec.regions:
        if r.is_grid:
            lines.append(f"  region {r.name} = grid({r.rows}, {r.cols}) over {_box(r.bbox)}")
        else:
            lines.append(f"  region {r.name} = {_box(r.bbox)}")
    for cat, n in spec.maxcounts:
        lines.append(f"  maxcount {cat} = {n}")
    for c in spec.constraints:
        lines.append(f"  constraint {c.id} violation={_quote(c.violation)} {_rule(c)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def rule_text(c: Constraint) -> str:
    """The rule part of a constraint statement, as written in a constraint file."""
    return _rule(c)
