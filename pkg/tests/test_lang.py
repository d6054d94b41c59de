import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from logicls import catalog
from logicls.errors import CompileError
from logicls.lang import (
    KINDS, DSLError, LexError, ParseError, SemanticError, compile_spec, expansion_size, parse, parse_many,
    serialize,
)
from logicls.lang.lexer import tokenize

from conftest import ALL_KINDS, PUSHPINS_DIRECTIONAL
from mutations import MUTATIONS

HEADER = 'scenario "s" {\n  classes: missing_pushpin, washer_gone\n  objects: pushpin, nut\n'
GRID = "  region cell_grid = grid(3, 5) over [0, 0, 1500, 900]\n"


def corpus():
    return [catalog.scenario_path(n).read_text() for n in catalog.scenario_names()] + [ALL_KINDS,
                                                                                     PUSHPINS_DIRECTIONAL]


class TestParse:
    def test_minimal_count_per_cell(self):
        spec = parse(HEADER + GRID + '  constraint c1 violation="missing_pushpin" count(pushpin) == 1 per cell_grid\n}')
        (c,) = spec.constraints
        assert c.kind == "count_per_cell"
        assert c.region == "cell_grid" and c.threshold == 1

    def test_pushpins_file(self, specs):
        spec = specs["pushpins"]
        assert len(spec.constraints) == 1
        assert len(compile_spec(spec)) == 15

    def test_undeclared_category_named(self):
        src = HEADER + '  constraint c violation="missing_pushpin" count(washer) >= 1\n}'
        with pytest.raises(SemanticError, match="washer") as info:
            parse(src)
        line = src.split("\n")[3]
        assert (info.value.line, info.value.col) == (4, line.index("washer") + 1)

    def test_duplicate_region(self):
        with pytest.raises(SemanticError, match="twice|duplicate"):
            parse(HEADER + GRID + GRID + "}")

    def test_unknown_relation(self):
        src = HEADER + '  constraint c violation="missing_pushpin" relation(pushpin, nut) is near\n}'
        with pytest.raises(SemanticError, match="near"):
            parse(src)

    def test_lex_error_position(self):
        with pytest.raises(LexError) as info:
            parse('scenario "s" {\n  classes: a $\n}')
        assert (info.value.line, info.value.col) == (2, 14)

    def test_syntax_error_position(self):
        with pytest.raises(ParseError) as info:
            parse('scenario "s" {\n  region r = [0, 0, 10]\n}')
        assert info.value.line == 2

    def test_maxcount_required_for_attribute(self):
        src = HEADER + '  constraint c violation="missing_pushpin" attribute(nut, size) in {m4}\n}'
        with pytest.raises(SemanticError, match="maxcount"):
            parse(src)

    def test_reserved_value(self):
        src = HEADER + '  maxcount nut = 2\n  constraint c violation="missing_pushpin" attribute(nut, size) in {absent}\n}'
        with pytest.raises(SemanticError, match="reserved"):
            parse(src)

    def test_normal_not_declarable(self):
        with pytest.raises(SemanticError, match="normal"):
            parse('scenario "s" { classes: normal }')

    def test_exactly_one_scenario(self):
        two = 'scenario "a" { classes: x }\nscenario "b" { classes: y }'
        assert [s.name for s in parse_many(two)] == ["a", "b"]
        with pytest.raises(ParseError):
            parse(two)

    def test_comments_and_escapes(self):
        spec = parse('# top\nscenario "a \\"q\\"" { # trailing\n classes: x }')
        assert spec.name == 'a "q"'

    def test_kinds_fixture_covers_all(self, kinds_spec):
        assert {c.kind for c in kinds_spec.constraints} == set(KINDS)


class TestRoundTrip:
    @pytest.mark.parametrize("text", corpus())
    def test_fixpoint(self, text):
        first = parse(text)
        again = parse(serialize(first))
        assert again == first
        assert serialize(again) == serialize(first)

    def test_header_only(self):
        spec = parse('scenario "empty" { classes: a }')
        assert parse(serialize(spec)) == spec


class TestCompile:
    def test_grid_scopes(self, specs):
        program = compile_spec(specs["pushpins"])
        cells = [q.scope.cell for q in program.subqueries]
        assert cells == [(r, c) for r in range(3) for c in range(5)]
        assert len({q.id for q in program.subqueries}) == 15

    def test_pairing_expansion(self):
        src = ('scenario "w" {\n classes: bad\n objects: cable, terminal\n maxcount cable = 3\n'
               ' constraint p violation="bad" pairing(cable, terminal) by index\n}')
        program = compile_spec(parse(src))
        assert len(program) == 4
        assert [q.role for q in program.subqueries] == ["pairing_count"] + ["pairing_match"] * 3

    def test_count_without_region(self):
        src = 'scenario "w" {\n classes: bad\n objects: nut\n constraint p violation="bad" count(nut) >= 2\n}'
        assert len(compile_spec(parse(src))) == 1

    def test_no_constraints(self):
        with pytest.raises(CompileError):
            compile_spec(parse('scenario "e" { classes: a }'))

    @pytest.mark.parametrize("text", corpus())
    def test_total_matches_independent_count(self, text):
        spec = parse(text)

        def oracle(c):
            if c.kind == "count_per_cell":
                r = next(r for r in spec.regions if r.name == c.region)
                return r.rows * r.cols
            bound = dict(spec.maxcounts).get(c.selectors[0].category)
            return {"attribute_in": bound, "pairing": None if bound is None else bound + 1}.get(c.kind, 1)

        program = compile_spec(spec)
        assert len(program) == sum(oracle(c) for c in spec.constraints)
        assert all(expansion_size(spec, c) == oracle(c) for c in spec.constraints)
        assert {q.violation_category for q in program.subqueries} <= set(spec.classes)

    def test_deterministic(self, specs):
        a = parse(catalog.scenario_path("juice_bottle").read_text())
        b = parse(catalog.scenario_path("juice_bottle").read_text())
        assert compile_spec(a).to_json() == compile_spec(b).to_json()

    def test_json_export(self, specs):
        data = compile_spec(specs["splicing_connectors"]).to_dict()
        assert data["T"] == 9
        assert all({"id", "question_text", "answer_type", "check"} <= set(q) for q in data["subqueries"])

    def test_categorical_values_nonempty(self, kinds_spec):
        for q in compile_spec(kinds_spec).subqueries:
            if q.answer_type == "categorical":
                assert q.values and set(q.check.expected) <= set(q.values)


class TestRobustness:
    @pytest.mark.parametrize("mutate", MUTATIONS, ids=lambda f: f.__name__)
    @pytest.mark.parametrize("name", catalog.scenario_names())
    def test_mutation_gives_positioned_error(self, mutate, name):
        text = mutate(catalog.scenario_path(name).read_text())
        with pytest.raises(DSLError) as info:
            parse(text)
        lines = text.split("\n")
        assert 1 <= info.value.line <= len(lines) + 1
        assert info.value.col >= 1

    @settings(max_examples=200, suppress_health_check=[HealthCheck.too_slow])
    @given(st.data())
    def test_random_edits_never_crash(self, data):
        text = catalog.scenario_path(data.draw(st.sampled_from(catalog.scenario_names()))).read_text()
        pos = data.draw(st.integers(0, len(text)))
        junk = data.draw(st.text(alphabet='{}[](),:=<>!"#@$ \nabc019_.-', max_size=4))
        cut = data.draw(st.integers(0, 3))
        mutated = text[:pos] + junk + text[pos + cut:]
        try:
            parse(mutated)
        except DSLError as exc:
            assert exc.line >= 1 and exc.col >= 1

    @given(st.text(max_size=60))
    def test_tokenizer_total(self, text):
        try:
            tokenize(text)
        except LexError as exc:
            assert exc.line >= 1
