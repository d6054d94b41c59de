"""Constraint language: parse ``.lcs`` scenario files and compile them to subqueries."""

from .ast import COMPARATORS, KINDS, RELATIONS, Constraint, Region, ScenarioSpec, Selector
from .compiler import (
    ABSENT,
    UNLISTED,
    AtomicSubquery,
    Check,
    Scope,
    SubqueryProgram,
    compile_spec,
    expansion_size,
)
from .lexer import DSLError, LexError, ParseError, SemanticError
from .parser import parse, parse_file, parse_many
from .serializer import serialize

compile = compile_spec  # noqa: A001 - module-level alias mirrors the operation name

__all__ = [
    "ABSENT", "UNLISTED", "COMPARATORS", "KINDS", "RELATIONS",
    "AtomicSubquery", "Check", "Constraint", "DSLError", "LexError", "ParseError",
    "Region", "ScenarioSpec", "Scope", "Selector", "SemanticError", "SubqueryProgram",
    "compile", "compile_spec", "expansion_size", "parse", "parse_file", "parse_many", "serialize",
]
