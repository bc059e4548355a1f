"""Plaintext policy structures: tuples, threshold trees and bag-of-bits tokens.

Numeric attributes are expanded into one wildcard token per bit, MSB first,
e.g. ``AT = 10`` on 5 bits becomes ``AT:0****``, ``AT:*1***``, ... and
range comparisons compile into AND/OR gates over those single-bit tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping, NamedTuple, Union

OPERATORS = ("<", ">", "<=", ">=", "=")
_OPERATOR_ALIASES = {"≤": "<=", "≥": ">="}
_WHITESPACE = re.compile(r"\s+")


class PolicyError(ValueError):
    pass


def normalize_token(raw: str) -> str:
    """Strip all whitespace from ``raw``; case is preserved."""
    token = _WHITESPACE.sub("", raw)
    if not token:
        raise PolicyError(f"empty token {raw!r}")
    return token


@dataclass(frozen=True)
class SatTuple:
    subject: str
    action: str
    target: str

    def __post_init__(self):
        for name in ("subject", "action", "target"):
            object.__setattr__(self, name, normalize_token(getattr(self, name)))

    def __iter__(self):
        return iter((self.subject, self.action, self.target))


@dataclass(frozen=True)
class Leaf:
    """Tree leaf; ``value`` is a token, or a ciphertext once encrypted."""

    value: Any


@dataclass(frozen=True)
class Gate:
    threshold: int
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise PolicyError("gate without children")
        if not 1 <= self.threshold <= len(self.children):
            raise PolicyError(
                f"threshold {self.threshold} out of range for {len(self.children)} children"
            )


Node = Union[Leaf, Gate]


# Condition expressions, as produced by the policy parser.


@dataclass(frozen=True)
class StringEq:
    name: str
    value: str


@dataclass(frozen=True)
class NumericCmp:
    name: str
    op: str
    constant: int
    bits: int

    def __post_init__(self):
        op = _OPERATOR_ALIASES.get(self.op, self.op)
        object.__setattr__(self, "op", op)
        if op not in OPERATORS:
            raise PolicyError(f"unknown operator {self.op!r}")
        _check_width(self.name, self.constant, self.bits)


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class KOf:
    k: int
    items: tuple


Expression = Union[StringEq, NumericCmp, And, Or, KOf]


class Numeric(NamedTuple):
    value: int
    bits: int


AttributeAssignment = Mapping[str, Union[str, Numeric]]


def _check_width(name: str, value: int, bits: int) -> None:
    if bits < 1:
        raise PolicyError(f"{name}: bit width must be at least 1, got {bits}")
    if not 0 <= value < 1 << bits:
        raise PolicyError(f"{name}: {value} does not fit in {bits} bits")


def bit_token(name: str, position: int, bit: int, bits: int) -> str:
    return f"{name}:{'*' * position}{bit}{'*' * (bits - position - 1)}"


def never_token(name: str) -> str:
    # '<' never survives attribute parsing, so no request can produce this token
    return f"{name}:<unsatisfiable>"


def expand_numeric(name: str, value: int, bits: int) -> list[str]:
    _check_width(name, value, bits)
    return [
        bit_token(name, i, (value >> (bits - 1 - i)) & 1, bits) for i in range(bits)
    ]


def expand_attributes(assignment: AttributeAssignment) -> frozenset[str]:
    tokens: set[str] = set()
    for name, value in assignment.items():
        name = normalize_token(name)
        if isinstance(value, tuple):
            tokens.update(expand_numeric(name, *value))
        else:
            tokens.add(normalize_token(f"{name}={value}"))
    return frozenset(tokens)


def _join(threshold_kind: str, first: Node, rest: Node | None) -> Node:
    """AND/OR of a bit leaf with a subtree, flattening same-kind gates."""
    if rest is None:
        return first
    children = [first]
    if isinstance(rest, Gate) and rest.threshold == (1 if threshold_kind == "or" else len(rest.children)):
        children.extend(rest.children)
    else:
        children.append(rest)
    return Gate(1 if threshold_kind == "or" else len(children), tuple(children))


def _strict(name: str, constant: int, bits: int, greater: bool) -> Node | None:
    """Subtree for ``v > constant`` (or ``<``); ``None`` when unsatisfiable.

    Scans from the least significant bit up. At bit i, with ``win`` the bit
    value that makes v strictly beat the constant there: if the constant has
    the losing bit, v either wins at i or ties and must win below; if the
    constant already has the winning bit, v must tie and win below.
    """
    win = 1 if greater else 0
    node: Node | None = None
    for i in reversed(range(bits)):
        k_bit = (constant >> (bits - 1 - i)) & 1
        if k_bit != win:
            node = _join("or", Leaf(bit_token(name, i, win, bits)), node)
        elif node is not None:
            node = _join("and", Leaf(bit_token(name, i, win, bits)), node)
    return node


def _always(name: str, bits: int) -> Node:
    return Gate(1, (Leaf(bit_token(name, 0, 0, bits)), Leaf(bit_token(name, 0, 1, bits))))


def compile_numeric(name: str, op: str, constant: int, bits: int) -> Node:
    cmp = NumericCmp(normalize_token(name), op, constant, bits)
    name, op = cmp.name, cmp.op
    top = (1 << bits) - 1
    if op == "=":
        leaves = [Leaf(t) for t in expand_numeric(name, constant, bits)]
        return leaves[0] if bits == 1 else Gate(bits, tuple(leaves))
    if op == ">=":
        if constant == 0:
            return _always(name, bits)
        op, constant = ">", constant - 1
    elif op == "<=":
        if constant == top:
            return _always(name, bits)
        op, constant = "<", constant + 1
    node = _strict(name, constant, bits, greater=(op == ">"))
    return node if node is not None else Leaf(never_token(name))


def compile_condition(expr: Expression) -> Node:
    if isinstance(expr, StringEq):
        return Leaf(normalize_token(f"{expr.name}={expr.value}"))
    if isinstance(expr, NumericCmp):
        return compile_numeric(expr.name, expr.op, expr.constant, expr.bits)
    if isinstance(expr, And):
        k, items = len(expr.items), expr.items
    elif isinstance(expr, Or):
        k, items = 1, expr.items
    elif isinstance(expr, KOf):
        k, items = expr.k, expr.items
    else:
        raise PolicyError(f"not a condition expression: {expr!r}")
    return Gate(k, tuple(compile_condition(item) for item in items))


def evaluate_plaintext(tree: Node, tokens: frozenset[str] | set[str]) -> bool:
    if isinstance(tree, Leaf):
        return tree.value in tokens
    satisfied = sum(evaluate_plaintext(child, tokens) for child in tree.children)
    return satisfied >= tree.threshold


def evaluate_expression(expr: Expression, assignment: AttributeAssignment) -> bool:
    """Direct predicate semantics, independent of tree compilation."""
    if isinstance(expr, StringEq):
        value = assignment.get(expr.name)
        return isinstance(value, str) and normalize_token(value) == normalize_token(expr.value)
    if isinstance(expr, NumericCmp):
        value = assignment.get(expr.name)
        if not isinstance(value, tuple) or value.bits != expr.bits:
            return False
        return compare(value.value, expr.op, expr.constant)
    results = [evaluate_expression(item, assignment) for item in expr.items]
    if isinstance(expr, And):
        return all(results)
    if isinstance(expr, Or):
        return any(results)
    return sum(results) >= expr.k


def compare(value: int, op: str, constant: int) -> bool:
    return {
        "<": value < constant,
        ">": value > constant,
        "<=": value <= constant,
        ">=": value >= constant,
        "=": value == constant,
    }[_OPERATOR_ALIASES.get(op, op)]


def iter_leaves(tree: Node) -> Iterator[Leaf]:
    if isinstance(tree, Leaf):
        yield tree
    else:
        for child in tree.children:
            yield from iter_leaves(child)


def iter_nodes(tree: Node) -> Iterator[Node]:
    yield tree
    if isinstance(tree, Gate):
        for child in tree.children:
            yield from iter_nodes(child)


def map_leaves(tree: Node, fn: Callable[[Any], Any]) -> Node:
    if isinstance(tree, Leaf):
        return Leaf(fn(tree.value))
    return Gate(tree.threshold, tuple(map_leaves(child, fn) for child in tree.children))


def shape(tree: Node) -> tuple:
    """Gate structure with leaves erased, for comparing plain and encrypted trees."""
    if isinstance(tree, Leaf):
        return ()
    return (tree.threshold, tuple(shape(child) for child in tree.children))
