"""In-memory representation of ILP documents.

Everything here is immutable once built by :mod:`ilp_forge.parser`.  A
:class:`Project` is the ordered "document set" most operations consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Union

from .sexpr import Datum


@dataclass(frozen=True)
class SourceSpan:
    document_path: str
    byte_start: int
    byte_end: int
    line_start: int

    def __post_init__(self) -> None:
        if not 0 <= self.byte_start <= self.byte_end:
            raise ValueError(f"bad span {self.byte_start}..{self.byte_end}")
        if self.line_start < 1:
            raise ValueError("line_start is 1-based")

    def contains(self, other: SourceSpan) -> bool:
        return (
            self.document_path == other.document_path
            and self.byte_start <= other.byte_start
            and other.byte_end <= self.byte_end
        )


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    severity: Severity
    message: str
    byte_offset: int = 0

    def format(self) -> str:
        return f"{self.path}:{self.line}: {self.severity.value}: {self.message}"

    def sort_key(self):
        return (self.path, self.byte_offset, self.line, self.severity.value, self.message)

    def as_json(self) -> dict:
        return {
            "type": "diagnostic",
            "path": self.path,
            "line": self.line,
            "severity": self.severity.value,
            "message": self.message,
        }


@dataclass(frozen=True)
class Heading:
    level: int
    title: str
    anchor: str
    line: int
    offset: int  # character offset of the heading line in the document


@dataclass(frozen=True)
class Link:
    """A ``[[name]]`` cross-reference found in narrative text."""

    name: str
    span: SourceSpan
    offset: int


@dataclass(frozen=True)
class CodeSpan:
    """Inline backtick code in narrative; ``offset`` points at the content."""

    text: str
    span: SourceSpan
    offset: int


@dataclass(frozen=True)
class Narrative:
    raw: str
    start: int
    headings: tuple[Heading, ...] = ()
    links: tuple[Link, ...] = ()
    code_spans: tuple[CodeSpan, ...] = ()

    @property
    def end(self) -> int:
        return self.start + len(self.raw)


@dataclass(frozen=True)
class Chunk:
    name: str | None
    language: str
    file_target: str | None
    attributes: dict[str, str]
    body: tuple[str, ...]
    is_doc: bool
    span: SourceSpan
    info: str = ""

    @property
    def tangleable(self) -> bool:
        if self.is_doc:
            return self.attributes.get("tangle") == "true"
        return self.attributes.get("tangle") != "false"

    def same_content(self, other: Chunk) -> bool:
        """Field equality ignoring where the chunk lives."""
        return (
            self.name == other.name
            and self.language == other.language
            and self.file_target == other.file_target
            and self.attributes == other.attributes
            and self.body == other.body
            and self.is_doc == other.is_doc
        )


@dataclass(frozen=True)
class ChunkBlock:
    raw: str
    start: int
    chunk: Chunk
    body_offset: int  # character offset of the first body line

    @property
    def end(self) -> int:
        return self.start + len(self.raw)


Block = Union[Narrative, ChunkBlock]


class Stability(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class ExampleCase:
    input_expr: Datum
    expected: Datum
    span: SourceSpan


@dataclass(frozen=True)
class Annotation:
    name: str
    pattern: str
    complexity: str
    stability: Stability
    examples: tuple[ExampleCase, ...]
    depends: tuple[str, ...]
    body: Datum | None
    span: SourceSpan
    extra: dict[str, Datum] = field(default_factory=dict)
    source: str = ""
    depends_spans: tuple[SourceSpan, ...] = ()


@dataclass(frozen=True)
class StepSpec:
    api_name: str
    zero_step: str
    succ_step: str
    helper_refs: tuple[str, ...]
    span: SourceSpan
    anchor: str = ""
    helper_spans: tuple[SourceSpan, ...] = ()
    source: str = ""


@dataclass(frozen=True)
class Document:
    path: str
    blocks: tuple[Block, ...]
    raw_text: str
    annotations: tuple[Annotation, ...] = ()
    step_specs: tuple[StepSpec, ...] = ()
    diagnostics: tuple[Diagnostic, ...] = ()

    def serialize(self) -> str:
        return "".join(b.raw for b in self.blocks)

    @property
    def chunks(self) -> list[Chunk]:
        return [b.chunk for b in self.blocks if isinstance(b, ChunkBlock)]

    @property
    def headings(self) -> list[Heading]:
        return [h for b in self.blocks if isinstance(b, Narrative) for h in b.headings]

    @property
    def links(self) -> list[Link]:
        return [ln for b in self.blocks if isinstance(b, Narrative) for ln in b.links]

    def line_of(self, offset: int) -> int:
        return self.raw_text.count("\n", 0, offset) + 1


@dataclass(frozen=True)
class Project:
    """Ordered document set plus the directory it was loaded from."""

    documents: tuple[Document, ...]
    root: Path | None = None

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    @property
    def chunks(self) -> list[Chunk]:
        return [c for d in self.documents for c in d.chunks]

    @property
    def annotations(self) -> list[Annotation]:
        return [a for d in self.documents for a in d.annotations]

    @property
    def step_specs(self) -> list[StepSpec]:
        return [s for d in self.documents for s in d.step_specs]

    def document(self, path: str) -> Document:
        for d in self.documents:
            if d.path == path:
                return d
        raise KeyError(path)

    def replace(self, doc: Document) -> Project:
        docs = tuple(doc if d.path == doc.path else d for d in self.documents)
        return Project(docs, self.root)

    def annotation(self, name: str) -> Annotation | None:
        for a in self.annotations:
            if a.name == name:
                return a
        return None

    def defined_names(self) -> set[str]:
        names = {c.name for c in self.chunks if c.name}
        names.update(a.name for a in self.annotations)
        names.update(s.api_name for s in self.step_specs)
        return names


def as_documents(docs: Union[Document, Project, Iterable[Document]]) -> list[Document]:
    if isinstance(docs, Document):
        return [docs]
    if isinstance(docs, Project):
        return list(docs.documents)
    return list(docs)


def chunk_table(docs: Union[Document, Project, Iterable[Document]]) -> dict[str, list[Chunk]]:
    """Named chunks grouped by name, continuations kept in document order."""
    table: dict[str, list[Chunk]] = {}
    for doc in as_documents(docs):
        for chunk in doc.chunks:
            if chunk.name is not None:
                table.setdefault(chunk.name, []).append(chunk)
    return table


def anonymous_ids(docs: Union[Document, Project, Iterable[Document]]) -> dict[SourceSpan, str]:
    """``anon-<n>`` ids for unnamed targeted chunks, numbered from 1."""
    ids: dict[SourceSpan, str] = {}
    for doc in as_documents(docs):
        for chunk in doc.chunks:
            if chunk.name is None and chunk.file_target is not None:
                ids[chunk.span] = f"anon-{len(ids) + 1}"
    return ids
