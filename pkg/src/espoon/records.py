"""Line-oriented text records for keys, ciphertexts and stored policies.

A record is a type tag line followed by one field per line. Integers are
written as lowercase hex, strings as the hex of their UTF-8 bytes, byte
strings as plain hex. Nested records follow inline with their own tag;
sequences are prefixed by a hex count line. Blocks in the append-log stores
are separated by a blank line.
"""

from __future__ import annotations

from dataclasses import fields
from typing import Any, Iterable, Iterator

from . import crypto
from .policy import Gate, Leaf, SatTuple


class RecordError(ValueError):
    pass


INT, DEC, STR, BYTES, RECORD, NODE, LIST = "int", "dec", "str", "bytes", "record", "node", "list"

# tag -> (class, [(field, kind)])
SCHEMAS: dict[str, tuple[type, list[tuple[str, str]]]] = {}


def register(cls: type, kinds: dict[str, str]) -> None:
    names = [f.name for f in fields(cls)]
    if set(names) != set(kinds):
        raise TypeError(f"schema for {cls.__name__} does not cover its fields")
    SCHEMAS[cls.__name__] = (cls, [(name, kinds[name]) for name in names])


register(crypto.SystemParams, dict(p=INT, q=INT, g=INT, h=INT, hash_id=STR, prf_id=STR))
register(crypto.MasterSecret, dict(x=INT, prf_key=BYTES))
register(crypto.UserKey, dict(user_id=STR, x1=INT, prf_key=BYTES))
register(crypto.ServerKey, dict(user_id=STR, x2=INT))
register(crypto.ClientCiphertext, dict(c1hat=INT, c2hat=INT, c3hat=BYTES))
register(crypto.ServerCiphertext, dict(c1=INT, c2=BYTES))
register(crypto.Trapdoor, dict(t1=INT, t2=INT))
register(SatTuple, dict(subject=STR, action=STR, target=STR))


def _dump_value(kind: str, value: Any, out: list[str]) -> None:
    if kind == INT:
        if value < 0:
            raise RecordError("negative integers are not representable")
        out.append(format(value, "x"))
    elif kind == DEC:
        out.append(str(int(value)))
    elif kind == STR:
        out.append(value.encode("utf-8").hex())
    elif kind == BYTES:
        out.append(bytes(value).hex())
    elif kind == RECORD:
        _dump_record(value, out)
    elif kind == NODE:
        _dump_node(value, out)
    elif kind == LIST:
        out.append(format(len(value), "x"))
        for item in value:
            _dump_record(item, out)
    else:
        raise RecordError(f"unknown field kind {kind!r}")


def _dump_node(node: Any, out: list[str]) -> None:
    if isinstance(node, Gate):
        out.extend(["Gate", format(node.threshold, "x"), format(len(node.children), "x")])
        for child in node.children:
            _dump_node(child, out)
    else:
        out.append("Leaf")
        _dump_record(node.value, out)


def _dump_record(obj: Any, out: list[str]) -> None:
    tag = type(obj).__name__
    if tag not in SCHEMAS:
        raise RecordError(f"no record schema for {tag}")
    out.append(tag)
    for name, kind in SCHEMAS[tag][1]:
        _dump_value(kind, getattr(obj, name), out)


def dumps(obj: Any) -> str:
    out: list[str] = []
    _dump_record(obj, out)
    return "\n".join(out) + "\n"


class _Lines:
    def __init__(self, lines: Iterable[str]):
        self._it: Iterator[str] = iter(lines)
        self.lineno = 0

    def next(self) -> str:
        try:
            line = next(self._it)
        except StopIteration:
            raise RecordError(f"truncated record after line {self.lineno}") from None
        self.lineno += 1
        return line.strip()

    def hex_int(self) -> int:
        line = self.next()
        try:
            if line != line.lower():
                raise ValueError
            return int(line, 16)
        except ValueError:
            raise RecordError(f"line {self.lineno}: expected lowercase hex, got {line!r}") from None

    def hex_bytes(self) -> bytes:
        line = self.next()
        try:
            return bytes.fromhex(line)
        except ValueError:
            raise RecordError(f"line {self.lineno}: bad hex bytes {line!r}") from None


def _load_value(kind: str, lines: _Lines) -> Any:
    if kind == INT:
        return lines.hex_int()
    if kind == DEC:
        line = lines.next()
        if not line.isdigit():
            raise RecordError(f"line {lines.lineno}: expected decimal, got {line!r}")
        return int(line)
    if kind == STR:
        return lines.hex_bytes().decode("utf-8")
    if kind == BYTES:
        return lines.hex_bytes()
    if kind == RECORD:
        return _load_record(lines)
    if kind == NODE:
        return _load_node(lines)
    if kind == LIST:
        return tuple(_load_record(lines) for _ in range(lines.hex_int()))
    raise RecordError(f"unknown field kind {kind!r}")


def _load_node(lines: _Lines) -> Any:
    tag = lines.next()
    if tag == "Gate":
        threshold = lines.hex_int()
        count = lines.hex_int()
        return Gate(threshold, tuple(_load_node(lines) for _ in range(count)))
    if tag == "Leaf":
        return Leaf(_load_record(lines))
    raise RecordError(f"line {lines.lineno}: expected tree node, got {tag!r}")


def _load_record(lines: _Lines, expect: type | None = None) -> Any:
    tag = lines.next()
    if tag not in SCHEMAS:
        raise RecordError(f"line {lines.lineno}: unknown record tag {tag!r}")
    cls, schema = SCHEMAS[tag]
    if expect is not None and cls is not expect:
        raise RecordError(f"expected {expect.__name__} record, got {tag}")
    return cls(**{name: _load_value(kind, lines) for name, kind in schema})


def loads(text: str, expect: type | None = None) -> Any:
    lines = _Lines(line for line in text.splitlines() if line.strip())
    return _load_record(lines, expect)


def split_blocks(text: str) -> list[str]:
    return [block for block in text.split("\n\n") if block.strip()]
