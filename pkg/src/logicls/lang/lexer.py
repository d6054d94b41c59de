from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import LogiclsError
from .ast import Pos


class DSLError(LogiclsError):
    """Any error in a constraint file; always carries a 1-based line and column."""

    stage = "error"

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {self.stage}: {message}")
        self.message = message
        self.line = line
        self.col = col

    @property
    def pos(self) -> Pos:
        return Pos(self.line, self.col)


class LexError(DSLError):
    stage = "lexical error"


class ParseError(DSLError):
    stage = "syntax error"


class SemanticError(DSLError):
    stage = "semantic error"


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, STRING, NUMBER, OP, EOF
    value: str
    line: int
    col: int

    @property
    def pos(self) -> Pos:
        return Pos(self.line, self.col)

    def __str__(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        return repr(self.value)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<NUMBER>-?\d+(?:\.\d+)?(?![A-Za-z_]))
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<STRING>"(?:[^"\\\n]|\\["\\])*")
  | (?P<OP>==|!=|<=|>=|[<>{}\[\](),:=])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, line_start = 0, 1, 0
    n = len(text)
    while i < n:
        m = _TOKEN_RE.match(text, i)
        col = i - line_start + 1
        if m is None:
            ch = text[i]
            if ch == '"':
                raise LexError("unterminated string literal", line, col)
            raise LexError(f"unexpected character {ch!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "STRING":
            tokens.append(Token(kind, _unescape(value[1:-1]), line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = i + value.rindex("\n") + 1
        i = m.end()
    tokens.append(Token("EOF", "", line, i - line_start + 1))
    return tokens


def _unescape(body: str) -> str:
    return re.sub(r'\\(["\\])', r"\1", body)
