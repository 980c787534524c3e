"""S-expression lexer, reader and printer.

The lexer never fails: it produces a token stream covering the whole input,
comments and whitespace included, so callers that rewrite identifiers can
splice by offset.  The reader is strict and raises :class:`DatumSyntaxError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union


class DatumSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Symbol:
    name: str


@dataclass(frozen=True)
class Number:
    text: str


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Boolean:
    value: bool


@dataclass(frozen=True)
class Keyword:
    name: str


@dataclass(frozen=True)
class Char:
    text: str  # as written, e.g. ``#\a`` or ``#\space``


@dataclass(frozen=True)
class List:
    items: tuple


@dataclass(frozen=True)
class Vector:
    items: tuple


@dataclass(frozen=True)
class Quoted:
    datum: "Datum"
    prefix: str = "'"


Datum = Union[Symbol, Number, Text, Boolean, Keyword, Char, List, Vector, Quoted]


@dataclass(frozen=True)
class Token:
    kind: str  # ws comment open close vopen quote string atom
    text: str
    start: int
    end: int
    closed: bool = True  # False for an unterminated string or block comment


DELIMITERS = frozenset(" \t\n\r\f\v()[]\";'`,")
NUMBER_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?|[+-]?\d+/\d+")
# Word characters used when scanning comment text for identifiers.
COMMENT_WORD_RE = re.compile(r"[A-Za-z0-9_?!+*/<>=%&^~$:.-]+")
_OPEN = {"(": ")", "[": "]"}


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            tokens.append(Token("ws", text[i:j], i, j))
            i = j
        elif c == ";":
            j = text.find("\n", i)
            j = n if j < 0 else j
            tokens.append(Token("comment", text[i:j], i, j))
            i = j
        elif c == "#" and text.startswith("#|", i):
            j = text.find("|#", i + 2)
            closed = j >= 0
            j = n if j < 0 else j + 2
            tokens.append(Token("comment", text[i:j], i, j, closed))
            i = j
        elif c in "([":
            tokens.append(Token("open", c, i, i + 1))
            i += 1
        elif c in ")]":
            tokens.append(Token("close", c, i, i + 1))
            i += 1
        elif c == "#" and text.startswith("#(", i):
            tokens.append(Token("vopen", "#(", i, i + 2))
            i += 2
        elif c in "'`":
            tokens.append(Token("quote", c, i, i + 1))
            i += 1
        elif c == ",":
            j = i + 2 if text.startswith(",@", i) else i + 1
            tokens.append(Token("quote", text[i:j], i, j))
            i = j
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            closed = j < n
            j = min(j + 1, n)
            tokens.append(Token("string", text[i:j], i, j, closed))
            i = j
        else:
            j = i
            if text.startswith("#\\", i) and i + 2 < n:
                j = i + 3
            while j < n and text[j] not in DELIMITERS:
                j += 1
            tokens.append(Token("atom", text[i:j], i, j))
            i = j
    return tokens


_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "a": "\a", "0": "\0"}


def _decode_string(raw: str) -> str:
    out = []
    i = 1
    while i < len(raw) - 1:
        c = raw[i]
        if c == "\\" and i + 1 < len(raw) - 1:
            out.append(_ESCAPES.get(raw[i + 1], raw[i + 1]))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def atom_datum(text: str) -> Datum:
    if text in ("#t", "#true"):
        return Boolean(True)
    if text in ("#f", "#false"):
        return Boolean(False)
    if text.startswith("#:") and len(text) > 2:
        return Keyword(text[2:])
    if text.startswith("#\\"):
        return Char(text)
    if NUMBER_RE.fullmatch(text):
        return Number(text)
    return Symbol(text)


class Reader:
    """Reads datums from a token stream, remembering their offsets."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = [t for t in tokenize(text) if t.kind not in ("ws", "comment")]
        self.pos = 0
        # id(datum) -> (start, end); lets callers locate nested datums
        self.offsets: dict[int, tuple[int, int]] = {}

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def read(self) -> tuple[Datum, int, int]:
        """Next datum with its (start, end) character offsets."""
        datum, start, end = self._read()
        self.offsets[id(datum)] = (start, end)
        return datum, start, end

    def span_of(self, datum: Datum) -> tuple[int, int]:
        return self.offsets[id(datum)]

    def _read(self) -> tuple[Datum, int, int]:
        if self.at_end():
            raise DatumSyntaxError("unexpected end of input", len(self.text))
        tok = self.tokens[self.pos]
        self.pos += 1
        if tok.kind == "atom":
            return atom_datum(tok.text), tok.start, tok.end
        if tok.kind == "string":
            if not tok.closed:
                raise DatumSyntaxError("unterminated text literal", tok.start)
            return Text(_decode_string(tok.text)), tok.start, tok.end
        if tok.kind == "quote":
            inner, _, end = self.read()
            return Quoted(inner, tok.text), tok.start, end
        if tok.kind in ("open", "vopen"):
            closer = ")" if tok.kind == "vopen" else _OPEN[tok.text]
            items = []
            while True:
                if self.at_end():
                    raise DatumSyntaxError("unbalanced parenthesis", tok.start)
                nxt = self.tokens[self.pos]
                if nxt.kind == "close":
                    self.pos += 1
                    if nxt.text != closer:
                        raise DatumSyntaxError(f"mismatched {nxt.text!r}", nxt.start)
                    break
                items.append(self.read()[0])
            cls = Vector if tok.kind == "vopen" else List
            return cls(tuple(items)), tok.start, nxt.end
        raise DatumSyntaxError(f"unexpected {tok.text!r}", tok.start)

    def read_spans(self) -> Iterator[tuple[Datum, int, int]]:
        """Top-level datums, each with the offsets of its own tokens."""
        while not self.at_end():
            yield self.read()


def parse_datum(text: str) -> tuple[Datum, str]:
    """Read the first datum of ``text``; returns it with the unread remainder."""
    reader = Reader(text)
    datum, _, end = reader.read()
    return datum, text[end:]


def read_all(text: str) -> list[Datum]:
    return [d for d, _, _ in Reader(text).read_spans()]


def read_all_spans(text: str) -> list[tuple[Datum, int, int]]:
    """Every top-level datum with its start/end offsets; raises on bad input."""
    return list(Reader(text).read_spans())


def _escape(s: str) -> str:
    return (
        s.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\t", "\\t")
        .replace("\r", "\\r")
        .replace("\0", "\\0")
        .replace("\a", "\\a")
    )


def print_datum(d: Datum) -> str:
    if isinstance(d, Symbol):
        return d.name
    if isinstance(d, Number):
        return d.text
    if isinstance(d, Text):
        return f'"{_escape(d.value)}"'
    if isinstance(d, Boolean):
        return "#t" if d.value else "#f"
    if isinstance(d, Keyword):
        return f"#:{d.name}"
    if isinstance(d, Char):
        return d.text
    if isinstance(d, List):
        return "(" + " ".join(print_datum(x) for x in d.items) + ")"
    if isinstance(d, Vector):
        return "#(" + " ".join(print_datum(x) for x in d.items) + ")"
    if isinstance(d, Quoted):
        return d.prefix + print_datum(d.datum)
    raise TypeError(f"not a datum: {d!r}")


def symbols(d: Datum) -> Iterator[str]:
    """Every symbol name in ``d``, depth first."""
    if isinstance(d, Symbol):
        yield d.name
    elif isinstance(d, (List, Vector)):
        for x in d.items:
            yield from symbols(x)
    elif isinstance(d, Quoted):
        yield from symbols(d.datum)
