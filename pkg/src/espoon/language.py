"""Textual policies and attribute files.

Policy grammar::

    policy     := "IF" cond "THEN" "CAN" "<" token "," token "," token ">"
    cond       := term ("OR" term)*
    term       := factor ("AND" factor)*
    factor     := comparison | INT "OF" "(" cond ("," cond)+ ")" | "(" cond ")"
    comparison := NAME "=" VALUE
                | NAME "=" INT "#" INT
                | NAME ("<" | ">" | "<=" | ">=") INT "#" INT

Attribute files hold one ``name=value`` or ``name:=int#bits`` per line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

from .policy import (
    And,
    Expression,
    KOf,
    Numeric,
    NumericCmp,
    Or,
    PolicyError,
    SatTuple,
    StringEq,
    normalize_token,
)

KEYWORDS = {"IF", "THEN", "CAN", "AND", "OR", "OF"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<op><=|>=|[=<>#(),])
  | (?P<word>[^\s,<>()=#]+)
    """,
    re.VERBOSE,
)
_INT = re.compile(r"[0-9]+")


class PolicySyntaxError(PolicyError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class PolicyAst:
    condition: Expression
    sat: SatTuple


@dataclass(frozen=True)
class _Tok:
    kind: str  # "op", "word", "kw" or "end"
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PolicySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind, value = m.lastgroup, m.group()
        if kind == "word" and value in KEYWORDS:
            kind = "kw"
        if kind != "ws":
            tokens.append(_Tok(kind, value, line, pos - line_start + 1))
        for offset, ch in enumerate(value):
            if ch == "\n":
                line, line_start = line + 1, pos + offset + 1
        pos = m.end()
    tokens.append(_Tok("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def peek(self) -> _Tok:
        return self.tokens[self.pos]

    def error(self, message: str, tok: _Tok | None = None) -> PolicySyntaxError:
        tok = tok or self.peek
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        return PolicySyntaxError(f"{message}, found {found}", tok.line, tok.column)

    def advance(self) -> _Tok:
        tok = self.peek
        self.pos += 1
        return tok

    def accept(self, kind: str, text: str | None = None) -> _Tok | None:
        tok = self.peek
        if tok.kind == kind and (text is None or tok.text == text):
            return self.advance()
        return None

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> _Tok:
        tok = self.accept(kind, text)
        if tok is None:
            raise self.error(f"expected {what or text or kind}")
        return tok

    def integer(self, what: str) -> int:
        tok = self.peek
        if tok.kind != "word" or not _INT.fullmatch(tok.text):
            raise self.error(f"expected {what}")
        return int(self.advance().text)

    def policy(self) -> PolicyAst:
        self.expect("kw", "IF")
        cond = self.cond()
        self.expect("kw", "THEN")
        self.expect("kw", "CAN")
        self.expect("op", "<")
        items = [self.expect("word", what="tuple item").text]
        for _ in range(2):
            self.expect("op", ",")
            items.append(self.expect("word", what="tuple item").text)
        self.expect("op", ">")
        return PolicyAst(cond, SatTuple(*items))

    def cond(self) -> Expression:
        terms = [self.term()]
        while self.accept("kw", "OR"):
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def term(self) -> Expression:
        factors = [self.factor()]
        while self.accept("kw", "AND"):
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else And(tuple(factors))

    def factor(self) -> Expression:
        tok = self.peek
        if self.accept("op", "("):
            inner = self.cond()
            self.expect("op", ")")
            return inner
        following = self.tokens[self.pos + 1]
        if tok.kind == "word" and following.kind == "kw" and following.text == "OF":
            k = self.integer("threshold")
            self.advance()
            self.expect("op", "(")
            items = [self.cond()]
            while self.accept("op", ","):
                items.append(self.cond())
            close = self.expect("op", ")")
            if len(items) < 2:
                raise PolicySyntaxError("k OF needs at least two conditions", close.line, close.column)
            if not 1 <= k <= len(items):
                raise PolicySyntaxError(
                    f"threshold {k} out of range for {len(items)} conditions", tok.line, tok.column
                )
            return KOf(k, tuple(items))
        return self.comparison()

    def comparison(self) -> Expression:
        name_tok = self.expect("word", what="attribute name")
        op_tok = self.peek
        if op_tok.kind != "op" or op_tok.text not in ("=", "<", ">", "<=", ">="):
            raise self.error("expected comparison operator")
        self.advance()
        if op_tok.text == "=":
            value_tok = self.expect("word", what="value")
            if not (_INT.fullmatch(value_tok.text) and self.peek.text == "#"):
                return StringEq(name_tok.text, value_tok.text)
            constant = int(value_tok.text)
        else:
            constant = self.integer("integer constant")
        self.expect("op", "#", what="'#' and bit width")
        bits = self.integer("bit width")
        try:
            return NumericCmp(name_tok.text, op_tok.text, constant, bits)
        except PolicyError as exc:
            raise PolicySyntaxError(str(exc), name_tok.line, name_tok.column) from None


def parse_condition(text: str) -> Expression:
    parser = _Parser(text)
    cond = parser.cond()
    parser.expect("end", what="end of condition")
    return cond


def parse_policy(text: str) -> PolicyAst:
    parser = _Parser(text)
    ast = parser.policy()
    parser.expect("end", what="end of policy")
    return ast


def split_policies(text: str) -> Iterator[tuple[int, str]]:
    """Yield ``(first_line, source)`` for each ``IF ... >`` policy in ``text``."""
    start_line, chunk = None, []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped and start_line is None:
            continue
        if start_line is None:
            start_line = lineno
        chunk.append(line)
        if stripped.endswith(">"):
            yield start_line, "\n".join(chunk)
            start_line, chunk = None, []
    if chunk:
        yield start_line, "\n".join(chunk)


def parse_policies(text: str) -> list[PolicyAst]:
    asts = []
    for first_line, source in split_policies(text):
        try:
            asts.append(parse_policy(source))
        except PolicySyntaxError as exc:
            raise PolicySyntaxError(
                str(exc).split(": ", 1)[1], exc.line + first_line - 1, exc.column
            ) from None
    return asts


_ATTR_STRING = re.compile(r"\s*([^\s,<>()=#:]+)\s*=\s*([^,<>()]*?)\s*")
_ATTR_NUMERIC = re.compile(r"\s*([^\s,<>()=#:]+)\s*:=\s*([0-9]+)\s*#\s*([0-9]+)\s*")


def parse_attributes(text: str) -> dict[str, str | Numeric]:
    assignment: dict[str, str | Numeric] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        numeric = _ATTR_NUMERIC.fullmatch(line)
        string = None if numeric else _ATTR_STRING.fullmatch(line)
        match = numeric or string
        if match is None or (string and not string.group(2)):
            raise PolicySyntaxError("expected name=value or name:=int#bits", lineno, 1)
        name = match.group(1)
        if name in assignment:
            raise PolicySyntaxError(f"duplicate attribute {name!r}", lineno, match.start(1) + 1)
        if numeric:
            value, bits = int(numeric.group(2)), int(numeric.group(3))
            if bits < 1 or value >= 1 << bits:
                raise PolicySyntaxError(
                    f"{value} does not fit in {bits} bits", lineno, numeric.start(2) + 1
                )
            assignment[name] = Numeric(value, bits)
        else:
            assignment[name] = normalize_token(string.group(2))
    return assignment


def _render_expr(expr: Expression, parent: type | None = None) -> str:
    if isinstance(expr, StringEq):
        return f"{expr.name}={expr.value}"
    if isinstance(expr, NumericCmp):
        return f"{expr.name}{expr.op}{expr.constant}#{expr.bits}"
    if isinstance(expr, KOf):
        inner = ", ".join(_render_expr(item) for item in expr.items)
        return f"{expr.k} OF ({inner})"
    joiner = " AND " if isinstance(expr, And) else " OR "
    text = joiner.join(_render_expr(item, type(expr)) for item in expr.items)
    # AND binds tighter than OR; same-kind nesting needs parens to survive a reparse
    if parent is And or (parent is Or and isinstance(expr, Or)):
        return f"({text})"
    return text


def render_condition(expr: Expression) -> str:
    return _render_expr(expr)


def render_policy(ast: PolicyAst) -> str:
    sat = ast.sat
    return f"IF {render_condition(ast.condition)} THEN CAN <{sat.subject}, {sat.action}, {sat.target}>"


def render_attributes(assignment: dict[str, str | Numeric]) -> str:
    lines = []
    for name, value in assignment.items():
        if isinstance(value, tuple):
            lines.append(f"{name}:={value.value}#{value.bits}")
        else:
            lines.append(f"{name}={value}")
    return "\n".join(lines) + ("\n" if lines else "")
