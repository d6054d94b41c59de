"""Recursive-descent parser for scenario constraint files.

Grammar summary (full EBNF in docs/grammar.md)::

    file       := scenario+
    scenario   := 'scenario' STRING '{' statement* '}'
    statement  := 'classes' ':' names | 'objects' ':' names
                | 'region' IDENT '=' (bbox | 'grid' '(' INT ',' INT ')' 'over' bbox)
                | 'maxcount' IDENT '=' INT
                | 'constraint' IDENT 'violation' '=' STRING rule
"""

from __future__ import annotations

import math
from dataclasses import replace

from ..scene import NORMAL
from .ast import COMPARATORS, RELATIONS, Constraint, Pos, Region, ScenarioSpec, Selector
from .compiler import ABSENT, UNLISTED
from .lexer import ParseError, SemanticError, Token, tokenize

_RULES = ("count", "relation", "distance", "size_ratio", "attribute", "pairing")


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    # token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def error(self, expected: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(f"expected {expected}, found {tok}", tok.line, tok.col)

    def expect_op(self, op: str) -> Token:
        if self.tok.kind == "OP" and self.tok.value == op:
            return self.advance()
        raise self.error(f"'{op}'")

    def expect_kw(self, word: str) -> Token:
        if self.tok.kind == "IDENT" and self.tok.value == word:
            return self.advance()
        raise self.error(f"'{word}'")

    def expect(self, kind: str, what: str) -> Token:
        if self.tok.kind == kind:
            return self.advance()
        raise self.error(what)

    def at_op(self, op: str) -> bool:
        return self.tok.kind == "OP" and self.tok.value == op

    def at_kw(self, word: str) -> bool:
        return self.tok.kind == "IDENT" and self.tok.value == word

    def number(self) -> float:
        tok = self.expect("NUMBER", "a number")
        value = float(tok.value)
        if not math.isfinite(value):
            raise ParseError(f"number {tok.value} is not finite", tok.line, tok.col)
        return value

    def integer(self) -> int:
        tok = self.expect("NUMBER", "an integer")
        if not tok.value.lstrip("-").isdigit():
            raise ParseError(f"expected an integer, found {tok.value}", tok.line, tok.col)
        return int(tok.value)

    # grammar

    def parse_file(self) -> list[tuple[ScenarioSpec, dict]]:
        out = [self.parse_scenario()]
        while self.tok.kind != "EOF":
            out.append(self.parse_scenario())
        return out

    def parse_scenario(self) -> tuple[ScenarioSpec, dict]:
        self.expect_kw("scenario")
        name = self.expect("STRING", "a quoted scenario name").value
        self.expect_op("{")
        classes: list[tuple[str, Token]] = []
        objects: list[tuple[str, Token]] = []
        regions: list[Region] = []
        maxcounts: list[tuple[str, int, Token]] = []
        constraints: list[Constraint] = []
        refs: list[tuple[str, Token]] = []
        while not self.at_op("}"):
            tok = self.tok
            if self.at_kw("classes"):
                self.advance()
                self.expect_op(":")
                classes.extend(self.names())
            elif self.at_kw("objects"):
                self.advance()
                self.expect_op(":")
                objects.extend(self.names())
            elif self.at_kw("region"):
                regions.append(self.parse_region())
            elif self.at_kw("maxcount"):
                self.advance()
                cat = self.expect("IDENT", "a category name")
                self.expect_op("=")
                ntok = self.tok
                n = self.integer()
                if n < 1:
                    raise ParseError("maxcount must be at least 1", ntok.line, ntok.col)
                maxcounts.append((cat.value, n, cat))
            elif self.at_kw("constraint"):
                constraints.append(self.parse_constraint(refs))
            else:
                raise self.error("a statement (classes, objects, region, maxcount, constraint) or '}'", tok)
        self.expect_op("}")
        spec = ScenarioSpec(
            name=name,
            classes=tuple(c for c, _ in classes),
            objects=tuple(o for o, _ in objects),
            regions=tuple(regions),
            maxcounts=tuple((c, n) for c, n, _ in maxcounts),
            constraints=tuple(constraints),
        )
        return spec, {"classes": classes, "objects": objects, "maxcounts": maxcounts, "refs": refs}

    def names(self) -> list[tuple[str, Token]]:
        tok = self.expect("IDENT", "a name")
        out = [(tok.value, tok)]
        while self.at_op(","):
            self.advance()
            tok = self.expect("IDENT", "a name")
            out.append((tok.value, tok))
        return out

    def bbox(self) -> tuple[float, float, float, float]:
        start = self.expect_op("[")
        vals = [self.number()]
        for _ in range(3):
            self.expect_op(",")
            vals.append(self.number())
        self.expect_op("]")
        x1, y1, x2, y2 = vals
        if min(vals) < 0 or not (x1 < x2 and y1 < y2):
            raise SemanticError(f"invalid box {vals}: need 0 <= x1 < x2 and 0 <= y1 < y2", start.line, start.col)
        return (x1, y1, x2, y2)

    def parse_region(self) -> Region:
        self.expect_kw("region")
        name = self.expect("IDENT", "a region name")
        self.expect_op("=")
        if self.at_kw("grid"):
            self.advance()
            self.expect_op("(")
            rtok = self.tok
            rows = self.integer()
            self.expect_op(",")
            ctok = self.tok
            cols = self.integer()
            self.expect_op(")")
            if rows < 1:
                raise SemanticError("grid rows must be >= 1", rtok.line, rtok.col)
            if cols < 1:
                raise SemanticError("grid cols must be >= 1", ctok.line, ctok.col)
            self.expect_kw("over")
            return Region(name.value, self.bbox(), rows, cols, pos=name.pos)
        return Region(name.value, self.bbox(), pos=name.pos)

    def selector(self, refs: list) -> Selector:
        cat = self.expect("IDENT", "a category name")
        refs.append((cat.value, cat))
        filters = []
        if self.at_op("["):
            self.advance()
            while True:
                key = self.expect("IDENT", "an attribute name")
                self.expect_op("=")
                filters.append((key.value, self.value()))
                if self.at_op(","):
                    self.advance()
                    continue
                break
            self.expect_op("]")
        return Selector(cat.value, tuple(filters), pos=cat.pos)

    def value(self) -> str:
        tok = self.tok
        if tok.kind in ("IDENT", "STRING", "NUMBER"):
            self.advance()
            return tok.value
        raise self.error("a value")

    def comparator(self) -> str:
        tok = self.tok
        if tok.kind == "OP" and tok.value in COMPARATORS:
            self.advance()
            return tok.value
        raise self.error("a comparator (==, !=, <, <=, >, >=)")

    def parse_constraint(self, refs: list) -> Constraint:
        self.expect_kw("constraint")
        cid = self.expect("IDENT", "a constraint id")
        self.expect_kw("violation")
        self.expect_op("=")
        violation = self.expect("STRING", "a quoted violation category")
        refs.append(("violation:" + violation.value, violation))
        rule = self.tok
        if rule.kind != "IDENT" or rule.value not in _RULES:
            raise self.error("a rule (" + ", ".join(_RULES) + ")")
        self.advance()
        self.expect_op("(")
        common = dict(id=cid.value, violation=violation.value, pos=cid.pos)
        if rule.value == "count":
            a = self.selector(refs)
            self.expect_op(")")
            cmp = self.comparator()
            threshold = float(self.integer())
            region = None
            if self.at_kw("per"):
                self.advance()
                rtok = self.expect("IDENT", "a region name")
                refs.append(("region:" + rtok.value, rtok))
                region = rtok.value
            # count vs count_per_cell is settled once regions are known
            return Constraint(kind="count", selectors=(a,), comparator=cmp, threshold=threshold,
                              region=region, **common)
        if rule.value == "relation":
            a = self.selector(refs)
            self.expect_op(",")
            b = self.selector(refs)
            self.expect_op(")")
            self.expect_kw("is")
            rel = self.expect("IDENT", "a relation name")
            refs.append(("relation:" + rel.value, rel))
            return Constraint(kind="relation", selectors=(a, b), relation=rel.value, **common)
        if rule.value in ("distance", "size_ratio"):
            a = self.selector(refs)
            self.expect_op(",")
            b = self.selector(refs)
            self.expect_op(")")
            cmp = self.comparator()
            return Constraint(kind=rule.value, selectors=(a, b), comparator=cmp,
                              threshold=self.number(), **common)
        if rule.value == "attribute":
            a = self.selector(refs)
            self.expect_op(",")
            key = self.expect("IDENT", "an attribute name")
            self.expect_op(")")
            self.expect_kw("in")
            brace = self.expect_op("{")
            values = [self.value()]
            while self.at_op(","):
                self.advance()
                values.append(self.value())
            self.expect_op("}")
            if len(set(values)) != len(values):
                raise SemanticError("duplicate value in allowed set", brace.line, brace.col)
            reserved = {UNLISTED, ABSENT} & set(values)
            if reserved:
                raise SemanticError(f"{sorted(reserved)[0]!r} is a reserved answer value", brace.line, brace.col)
            return Constraint(kind="attribute_in", selectors=(a,), key=key.value,
                              values=tuple(values), **common)
        # pairing
        a = self.selector(refs)
        self.expect_op(",")
        b = self.selector(refs)
        self.expect_op(")")
        self.expect_kw("by")
        key = self.expect("IDENT", "an attribute name")
        order_by = None
        if self.at_kw("order_by"):
            self.advance()
            order_by = self.expect("IDENT", "an attribute name").value
        return Constraint(kind="pairing", selectors=(a, b), key=key.value, order_by=order_by, **common)


def _check(spec: ScenarioSpec, info: dict) -> ScenarioSpec:
    """Resolve names and enforce declaration rules; returns the finished spec."""
    seen: dict[str, Token] = {}
    for name, tok in info["classes"]:
        if name == NORMAL:
            raise SemanticError(f"'{NORMAL}' is implicit and cannot be declared as a class", tok.line, tok.col)
        if name in seen:
            raise SemanticError(f"class {name!r} declared twice", tok.line, tok.col)
        seen[name] = tok
    objects: dict[str, Token] = {}
    for name, tok in info["objects"]:
        if name in objects:
            raise SemanticError(f"object category {name!r} declared twice", tok.line, tok.col)
        objects[name] = tok
    regions: dict[str, Region] = {}
    for r in spec.regions:
        if r.name in regions:
            raise SemanticError(f"duplicate region {r.name!r}", r.pos.line, r.pos.col)
        if r.name in objects:
            raise SemanticError(f"region {r.name!r} clashes with an object category", r.pos.line, r.pos.col)
        regions[r.name] = r
    for cat, _, tok in info["maxcounts"]:
        if cat not in objects:
            raise SemanticError(f"maxcount for undeclared object category {cat!r}", tok.line, tok.col)
    if len({c for c, _, _ in info["maxcounts"]}) != len(info["maxcounts"]):
        tok = info["maxcounts"][-1][2]
        raise SemanticError("maxcount declared twice for one category", tok.line, tok.col)

    ids: set[str] = set()
    for c in spec.constraints:
        if c.id in ids:
            raise SemanticError(f"duplicate constraint id {c.id!r}", c.pos.line, c.pos.col)
        ids.add(c.id)

    for ref, tok in info["refs"]:
        if ref.startswith("violation:"):
            name = ref.split(":", 1)[1]
            if name not in seen:
                raise SemanticError(f"violation category {name!r} is not declared in classes", tok.line, tok.col)
        elif ref.startswith("region:"):
            name = ref.split(":", 1)[1]
            if name not in regions:
                raise SemanticError(f"unknown region {name!r}", tok.line, tok.col)
        elif ref.startswith("relation:"):
            name = ref.split(":", 1)[1]
            if name not in RELATIONS:
                raise SemanticError(
                    f"unknown relation {name!r} (known: {', '.join(RELATIONS)})", tok.line, tok.col
                )
        elif ref not in objects and ref not in regions:
            raise SemanticError(f"undeclared category {ref!r}", tok.line, tok.col)

    finished = []
    for c in spec.constraints:
        for sel in c.selectors:
            if sel.category in regions and not (c.kind == "relation" and sel is c.selectors[1]):
                raise SemanticError(f"region {sel.category!r} used where an object selector is required",
                                    sel.pos.line, sel.pos.col)
        if c.kind == "count" and c.region is not None and regions[c.region].is_grid:
            c = replace(c, kind="count_per_cell")
        elif c.kind == "relation" and c.selectors[1].category in regions:
            b = c.selectors[1]
            if b.filters:
                raise SemanticError("a region operand cannot carry attribute filters", b.pos.line, b.pos.col)
            if regions[b.category].is_grid:
                raise SemanticError("relation operand must be a plain region, not a grid", b.pos.line, b.pos.col)
            c = replace(c, selectors=(c.selectors[0],), region=b.category)
        elif c.kind in ("attribute_in", "pairing"):
            if spec.maxcount(c.selectors[0].category) is None:
                raise SemanticError(
                    f"constraint {c.id!r} needs 'maxcount {c.selectors[0].category} = N' to bound its expansion",
                    c.pos.line, c.pos.col,
                )
        finished.append(c)
    return ScenarioSpec(spec.name, spec.classes, spec.objects, spec.regions, spec.maxcounts, tuple(finished))


def parse_many(text: str) -> list[ScenarioSpec]:
    parser = _Parser(text)
    return [_check(spec, info) for spec, info in parser.parse_file()]


def parse(text: str) -> ScenarioSpec:
    """Parse a file holding exactly one scenario block."""
    specs = parse_many(text)
    if len(specs) != 1:
        raise ParseError(f"expected exactly one scenario block, found {len(specs)}", 1, 1)
    return specs[0]


def parse_file(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


__all__ = ["parse", "parse_many", "parse_file", "Pos"]
