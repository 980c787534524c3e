"""ILP Markdown reader.

The carrier format is plain Markdown.  Fenced blocks opened by exactly three
backticks are chunks; their info string is ``lang key=value ...`` with the
recognized keys ``file``, ``chunk``, ``doc`` and ``tangle`` (anything else is
kept in ``Chunk.attributes``).  A ``## api`` section with ``### Zero-Step
Logic`` / ``### Succ-Step Logic`` sub-headings is a step specification, and
``define-with-docs`` forms inside Scheme chunks are annotations.
"""

from __future__ import annotations

import bisect
import re
from typing import Callable

from .model import (
    Annotation,
    Block,
    Chunk,
    ChunkBlock,
    CodeSpan,
    Diagnostic,
    Document,
    ExampleCase,
    Heading,
    Link,
    Narrative,
    Severity,
    SourceSpan,
    Stability,
    StepSpec,
)
from .tokens import is_scheme
from .sexpr import (
    Datum,
    DatumSyntaxError,
    Keyword,
    List,
    Quoted,
    Reader,
    Symbol,
    Text,
    print_datum,
)

FENCE_OPEN_RE = re.compile(r"```(?!`)(.*)")
FENCE_CLOSE_RE = re.compile(r"```[ \t]*")
HEADING_RE = re.compile(r"(#{1,6})[ \t]+(.*?)(?:[ \t]+#+)?[ \t]*")
LINK_RE = re.compile(r"\[\[([A-Za-z0-9_?!+*/<>=-]+)\]\]")
CODE_SPAN_RE = re.compile(r"`([^`\n]+)`")
INFO_ITEM_RE = re.compile(r'\s+([^\s="]+)(?:=("(?:[^"\\]|\\.)*"|[^\s"]+))?')
HELPER_RE = re.compile(r"Helper Function:\s*`([^`]+)`", re.IGNORECASE)
ZERO_TITLES = ("zero-step logic",)
SUCC_TITLES = ("succ-step logic", "successor-step logic")

ANNOTATION_KEYWORDS = ("pattern", "complexity", "stability", "examples", "depends")
ARROW = Symbol("=>")


class ParseError(ValueError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.message = message


class AnnotationError(ValueError):
    pass


class LineIndex:
    """Maps character offsets to line numbers and UTF-8 byte offsets."""

    def __init__(self, text: str):
        self.text = text
        self.starts = [0]
        for i, c in enumerate(text):
            if c == "\n":
                self.starts.append(i + 1)
        self.ascii = text.isascii()
        if not self.ascii:
            self.byte_starts = []
            total = 0
            prev = 0
            for s in self.starts:
                total += len(text[prev:s].encode("utf-8"))
                self.byte_starts.append(total)
                prev = s

    def line(self, offset: int) -> int:
        return bisect.bisect_right(self.starts, offset)

    def byte(self, offset: int) -> int:
        if self.ascii:
            return offset
        ln = bisect.bisect_right(self.starts, offset) - 1
        start = self.starts[ln]
        return self.byte_starts[ln] + len(self.text[start:offset].encode("utf-8"))

    def span(self, path: str, start: int, end: int) -> SourceSpan:
        return SourceSpan(path, self.byte(start), self.byte(end), self.line(start))


def slugify(title: str) -> str:
    slug = re.sub(r"[^a-z0-9 _-]", "", title.strip().lower())
    return re.sub(r" +", "-", slug.strip()) or "section"


class AnchorAllocator:
    def __init__(self) -> None:
        self.seen: dict[str, int] = {}
        self.used: set[str] = set()

    def allocate(self, base: str) -> str:
        anchor = base
        n = self.seen.get(base, 0)
        while anchor in self.used:
            n += 1
            anchor = f"{base}-{n}"
        self.seen[base] = n
        self.used.add(anchor)
        return anchor


def parse_info_string(info: str) -> tuple[str, dict[str, str]]:
    """Split ``lang key=value ...`` into the language and an ordered key map.

    Flags without a value map to the empty string.  Double-quoted values may
    contain whitespace and backslash escapes.
    """
    info = info.rstrip()
    if not info.strip():
        return "", {}
    m = re.match(r"[^\s=\"]+", info)
    if m is None:
        raise ValueError(f"malformed info string {info!r}")
    lang = m.group(0)
    pos = m.end()
    attrs: dict[str, str] = {}
    while pos < len(info):
        item = INFO_ITEM_RE.match(info, pos)
        if item is None:
            raise ValueError(f"malformed info string near {info[pos:]!r}")
        key, value = item.group(1), item.group(2)
        if key in attrs:
            raise ValueError(f"duplicate key {key!r} in info string")
        if value is None:
            value = ""
        elif value.startswith('"'):
            value = re.sub(r"\\(.)", r"\1", value[1:-1])
        attrs[key] = value
        pos = item.end()
    return lang, attrs


def format_info_string(language: str, attrs: dict[str, str]) -> str:
    parts = [language]
    for key, value in attrs.items():
        if value == "" and key == "doc":
            parts.append(key)
        elif re.search(r'[\s"\\]', value) or value == "":
            parts.append(f'{key}="' + value.replace("\\", "\\\\").replace('"', '\\"') + '"')
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)


def _chunk_fields(attrs: dict[str, str]) -> tuple[str | None, str | None, bool, dict[str, str]]:
    attrs = dict(attrs)
    name = attrs.pop("chunk", None)
    file_target = attrs.pop("file", None)
    doc = attrs.pop("doc", None)
    if name is not None and (not name or re.search(r"[<>\s]", name)):
        raise ValueError(f"invalid chunk name {name!r}")
    if file_target is not None and not file_target:
        raise ValueError("empty file= value")
    if doc not in (None, "", "true", "false"):
        raise ValueError(f"doc takes no value or true/false, got {doc!r}")
    if "tangle" in attrs and attrs["tangle"] not in ("true", "false"):
        raise ValueError(f"tangle must be true or false, got {attrs['tangle']!r}")
    return name, file_target, doc in ("", "true"), attrs


def _split_lines(text: str) -> list[tuple[int, str]]:
    """(offset, line-with-newline) pairs."""
    out = []
    pos = 0
    while pos < len(text):
        nl = text.find("\n", pos)
        end = len(text) if nl < 0 else nl + 1
        out.append((pos, text[pos:end]))
        pos = end
    return out


def _strip_nl(line: str) -> str:
    return line[:-1] if line.endswith("\n") else line


def parse_document(path: str, text: str) -> Document:
    """Parse ILP Markdown ``text``.  ``\\r\\n`` line endings are normalized."""
    text = text.replace("\r\n", "\n")
    index = LineIndex(text)
    anchors = AnchorAllocator()
    blocks: list[Block] = []
    lines = _split_lines(text)
    narrative_start: int | None = None

    def flush(end: int) -> None:
        nonlocal narrative_start
        if narrative_start is not None and end > narrative_start:
            blocks.append(_narrative(path, text, narrative_start, end, index, anchors))
        narrative_start = None

    i = 0
    while i < len(lines):
        offset, line = lines[i]
        m = FENCE_OPEN_RE.fullmatch(_strip_nl(line))
        if m is None:
            if narrative_start is None:
                narrative_start = offset
            i += 1
            continue
        flush(offset)
        lineno = i + 1
        j = i + 1
        while j < len(lines) and not FENCE_CLOSE_RE.fullmatch(_strip_nl(lines[j][1])):
            j += 1
        if j >= len(lines):
            raise ParseError(path, lineno, "unterminated code fence")
        try:
            language, attrs = parse_info_string(m.group(1))
            name, file_target, is_doc, rest = _chunk_fields(attrs)
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        end = lines[j][0] + len(lines[j][1])
        body = tuple(_strip_nl(ln) for _, ln in lines[i + 1 : j])
        chunk = Chunk(
            name=name,
            language=language,
            file_target=file_target,
            attributes=rest,
            body=body,
            is_doc=is_doc,
            span=index.span(path, offset, end),
            info=m.group(1),
        )
        blocks.append(ChunkBlock(text[offset:end], offset, chunk, offset + len(line)))
        i = j + 1
    flush(len(text))

    diagnostics: list[Diagnostic] = []
    annotations = _collect_annotations(path, blocks, index, diagnostics)
    step_specs = _collect_step_specs(path, text, blocks, index, diagnostics)
    return Document(
        path=path,
        blocks=tuple(blocks),
        raw_text=text,
        annotations=tuple(annotations),
        step_specs=tuple(step_specs),
        diagnostics=tuple(diagnostics),
    )


def _narrative(path, text, start, end, index, anchors) -> Narrative:
    raw = text[start:end]
    headings = []
    for offset, line in _split_lines(raw):
        m = HEADING_RE.fullmatch(_strip_nl(line))
        if m:
            title = m.group(2)
            abs_off = start + offset
            anchor = anchors.allocate(slugify(title))
            headings.append(Heading(len(m.group(1)), title, anchor, index.line(abs_off), abs_off))
    links = tuple(
        Link(m.group(1), index.span(path, start + m.start(), start + m.end()), start + m.start())
        for m in LINK_RE.finditer(raw)
    )
    spans = tuple(
        CodeSpan(m.group(1), index.span(path, start + m.start(1), start + m.end(1)), start + m.start(1))
        for m in CODE_SPAN_RE.finditer(raw)
    )
    return Narrative(raw, start, tuple(headings), links, spans)


def _collect_annotations(path, blocks, index, diagnostics) -> list[Annotation]:
    found = []
    for block in blocks:
        if not isinstance(block, ChunkBlock):
            continue
        chunk = block.chunk
        if not is_scheme(chunk.language):
            continue
        source = "\n".join(chunk.body)
        if "define-with-docs" not in source:
            continue
        base = block.body_offset
        reader = Reader(source)
        try:
            forms = list(reader.read_spans())
        except DatumSyntaxError as exc:
            off = base + exc.offset
            diagnostics.append(
                Diagnostic(path, index.line(off), Severity.ERROR,
                           f"cannot read annotation chunk: {exc}", index.byte(off))
            )
            continue
        for datum, start, end in forms:
            if not (isinstance(datum, List) and datum.items and datum.items[0] == Symbol("define-with-docs")):
                continue

            def locate(d, _r=reader):
                s, e = _r.span_of(d)
                return index.span(path, base + s, base + e)

            span = index.span(path, base + start, base + end)
            try:
                ann = parse_annotation(datum, span=span, locate=locate,
                                       source=source[start:end])
            except AnnotationError as exc:
                diagnostics.append(
                    Diagnostic(path, span.line_start, Severity.ERROR, str(exc), span.byte_start)
                )
                continue
            for key in ann.extra:
                diagnostics.append(
                    Diagnostic(path, span.line_start, Severity.WARNING,
                               f"unknown keyword #:{key} in annotation {ann.name}", span.byte_start)
                )
            found.append(ann)
    return found


def _text_value(key: str, value: Datum) -> str:
    if isinstance(value, Text):
        return value.value
    if isinstance(value, Symbol):
        return value.name
    raise AnnotationError(f"#:{key} expects a string, got {print_datum(value)}")


def _unquote(d: Datum) -> Datum:
    return d.datum if isinstance(d, Quoted) and d.prefix == "'" else d


def _triples(items: tuple) -> list[tuple[Datum, Datum]] | None:
    if items and len(items) % 3 == 0 and all(items[k + 1] == ARROW for k in range(0, len(items), 3)):
        return [(items[k], items[k + 2]) for k in range(0, len(items), 3)]
    if items and all(isinstance(x, List) and len(x.items) == 3 and x.items[1] == ARROW for x in items):
        return [(x.items[0], x.items[2]) for x in items]
    return None


def parse_annotation(
    datum: Datum,
    span: SourceSpan | None = None,
    locate: Callable[[Datum], SourceSpan] | None = None,
    source: str = "",
) -> Annotation:
    """Build an :class:`Annotation` from a ``(define-with-docs name ...)`` form.

    Both example layouts are accepted: a quoted list of ``expr => expected``
    triples, or bare ``'expr => expected`` triples directly after the keyword.
    """
    if not (isinstance(datum, List) and datum.items and datum.items[0] == Symbol("define-with-docs")):
        raise AnnotationError("not a define-with-docs form")
    if span is None:
        span = SourceSpan("", 0, 0, 1)
    if locate is None:
        locate = lambda _d: span  # noqa: E731
    items = datum.items
    if len(items) < 2 or not isinstance(items[1], Symbol):
        raise AnnotationError("define-with-docs is missing a name")
    name = items[1].name
    fields: dict[str, object] = {}
    extra: dict[str, Datum] = {}
    examples: list[ExampleCase] = []
    depends: list[str] = []
    depends_spans: list[SourceSpan] = []
    body: Datum | None = None
    i = 2
    while i < len(items):
        item = items[i]
        if not isinstance(item, Keyword):
            if body is not None:
                raise AnnotationError(f"{name}: unexpected datum {print_datum(body)}")
            body = item
            i += 1
            continue
        key = item.name
        if key in fields or key in extra:
            raise AnnotationError(f"{name}: duplicate keyword #:{key}")
        if i + 1 >= len(items):
            raise AnnotationError(f"{name}: #:{key} has no value")
        value = items[i + 1]
        i += 2
        if key == "examples":
            fields[key] = True
            if i + 1 < len(items) and items[i] == ARROW:
                # bare form: 'expr => expected ['expr => expected ...]
                k = i - 1
                while k + 2 < len(items) and items[k + 1] == ARROW:
                    inp, exp = items[k], items[k + 2]
                    examples.append(ExampleCase(_unquote(inp), exp, locate(inp)))
                    k += 3
                i = k
            elif isinstance(value, Quoted) and isinstance(value.datum, List):
                pairs = _triples(value.datum.items)
                if pairs is None:
                    raise AnnotationError(f"{name}: #:examples is not a list of `expr => expected` triples")
                examples.extend(ExampleCase(a, b, locate(a)) for a, b in pairs)
            else:
                raise AnnotationError(f"{name}: #:examples has an unsupported shape")
        elif key == "depends":
            fields[key] = True
            inner = _unquote(value)
            targets = inner.items if isinstance(inner, List) else (inner,)
            for t in targets:
                if not isinstance(t, Symbol):
                    raise AnnotationError(f"{name}: #:depends entries must be names")
                depends.append(t.name)
                depends_spans.append(locate(t))
        elif key in ("pattern", "complexity"):
            fields[key] = _text_value(key, value)
        elif key == "stability":
            text = _text_value(key, value)
            try:
                fields[key] = Stability(text)
            except ValueError:
                raise AnnotationError(f"{name}: unknown stability {text!r}") from None
        else:
            extra[key] = value
    return Annotation(
        name=name,
        pattern=fields.get("pattern", ""),
        complexity=fields.get("complexity", ""),
        stability=fields.get("stability", Stability.UNSPECIFIED),
        examples=tuple(examples),
        depends=tuple(depends),
        body=body,
        span=span,
        extra=extra,
        source=source,
        depends_spans=tuple(depends_spans),
    )


def _clean_title(title: str) -> str:
    title = title.strip()
    if len(title) > 1 and title.startswith("`") and title.endswith("`"):
        title = title[1:-1]
    return title


def narrative_between(blocks, start: int, end: int) -> str:
    parts = []
    for b in blocks:
        if isinstance(b, Narrative) and b.end > start and b.start < end:
            parts.append(b.raw[max(start, b.start) - b.start : min(end, b.end) - b.start])
    return "".join(parts)


def _collect_step_specs(path, text, blocks, index, diagnostics) -> list[StepSpec]:
    headings = [h for b in blocks if isinstance(b, Narrative) for h in b.headings]
    specs = []
    for k, h in enumerate(headings):
        if h.level != 2:
            continue
        section_end = len(text)
        subs = []
        for later in headings[k + 1 :]:
            if later.level <= 2:
                section_end = later.offset
                break
            subs.append(later)
        zero = succ = None
        helpers: list[str] = []
        helper_spans = []
        for n, sub in enumerate(subs):
            if sub.level != 3:
                continue
            sub_end = subs[n + 1].offset if n + 1 < len(subs) else section_end
            line_end = text.find("\n", sub.offset)
            body_start = sub_end if line_end < 0 else min(line_end + 1, sub_end)
            content = narrative_between(blocks, body_start, sub_end).strip()
            title = sub.title.strip().lower()
            helper = HELPER_RE.fullmatch(sub.title.strip())
            if title in ZERO_TITLES:
                zero = content
            elif title in SUCC_TITLES:
                succ = content
            elif helper:
                helpers.append(helper.group(1))
                helper_spans.append(index.span(path, sub.offset, body_start))
        if zero is None and succ is None:
            continue
        api = _clean_title(h.title)
        span = index.span(path, h.offset, section_end)
        if zero is None or succ is None or not zero or not succ:
            missing = "zero-step" if not zero else "succ-step"
            diagnostics.append(
                Diagnostic(path, h.line, Severity.WARNING,
                           f"step spec {api} has no {missing} logic", span.byte_start)
            )
        specs.append(
            StepSpec(
                api_name=api,
                zero_step=zero or "",
                succ_step=succ or "",
                helper_refs=tuple(helpers),
                span=span,
                anchor=h.anchor,
                helper_spans=tuple(helper_spans),
                source=narrative_between(blocks, h.offset, section_end).strip("\n"),
            )
        )
    return specs


def serialize(doc: Document) -> str:
    return doc.serialize()
