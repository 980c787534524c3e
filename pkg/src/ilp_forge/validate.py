"""Project-wide checks.  Problems come back as diagnostics, never exceptions."""

from __future__ import annotations

import re
from collections import Counter
from pathlib import PurePosixPath
from typing import Iterable

from .model import ChunkBlock, Diagnostic, Document, Narrative, Project, Severity, chunk_table
from .parser import LineIndex
from .tokens import REF_LINE_RE

INLINE_REF_RE = re.compile(r"<<([^<>\n]+)>>")


def path_escapes(target: str) -> bool:
    p = PurePosixPath(target.replace("\\", "/"))
    return p.is_absolute() or ".." in p.parts or (len(target) > 1 and target[1] == ":")


def validate(project: Project | Iterable[Document]) -> list[Diagnostic]:
    from .graph import CycleError, EdgeKind, build_graph, topological_order

    docs = list(project.documents) if isinstance(project, Project) else list(project)
    table = chunk_table(docs)
    out: list[Diagnostic] = []

    def add(doc: Document, offset_byte: int, line: int, severity: Severity, msg: str) -> None:
        out.append(Diagnostic(doc.path, line, severity, msg, offset_byte))

    for doc in docs:
        out.extend(doc.diagnostics)

    counts = Counter(a.name for d in docs for a in d.annotations)
    names = set(table) | set(counts) | {s.api_name for d in docs for s in d.step_specs}

    for doc in docs:
        index = LineIndex(doc.raw_text)
        for a in doc.annotations:
            if counts[a.name] > 1:
                add(doc, a.span.byte_start, a.span.line_start, Severity.ERROR,
                    f"duplicate annotation {a.name}")
            for dep, span in zip(a.depends, a.depends_spans):
                if dep not in names:
                    add(doc, span.byte_start, span.line_start, Severity.ERROR,
                        f"unresolved #:depends reference {dep} in {a.name}")
        for block in doc.blocks:
            if isinstance(block, Narrative):
                for link in block.links:
                    if link.name not in names:
                        add(doc, link.span.byte_start, link.span.line_start, Severity.ERROR,
                            f"unresolved link [[{link.name}]]")
                continue
            assert isinstance(block, ChunkBlock)
            chunk = block.chunk
            span = chunk.span
            if chunk.name is None and chunk.file_target is None and not chunk.is_doc:
                add(doc, span.byte_start, span.line_start, Severity.ERROR,
                    "code chunk has neither chunk= nor file=")
            if chunk.file_target is not None and path_escapes(chunk.file_target):
                add(doc, span.byte_start, span.line_start, Severity.ERROR,
                    f"file target {chunk.file_target} escapes the project root")
            if chunk.is_doc and chunk.file_target is not None and "tangle" not in chunk.attributes:
                add(doc, span.byte_start, span.line_start, Severity.WARNING,
                    f"doc chunk targets {chunk.file_target} but has no tangle= attribute")
            body = "\n".join(chunk.body)
            for m in REF_LINE_RE.finditer(body):
                if m.group(2) not in table:
                    off = block.body_offset + m.start(2)
                    add(doc, index.byte(off), index.line(off), Severity.ERROR,
                        f"unresolved chunk reference <<{m.group(2)}>>")
            whole = {m.start(2) for m in REF_LINE_RE.finditer(body)}
            for m in INLINE_REF_RE.finditer(body):
                if m.group(1) in table and m.start(1) not in whole:
                    off = block.body_offset + m.start(1)
                    add(doc, index.byte(off), index.line(off), Severity.WARNING,
                        f"<<{m.group(1)}>> shares its line with other text and is not expanded")
        for spec in doc.step_specs:
            if spec.api_name not in table and spec.api_name not in counts:
                add(doc, spec.span.byte_start, spec.span.line_start, Severity.WARNING,
                    f"step spec {spec.api_name} has no matching annotation or chunk")
            for helper, hspan in zip(spec.helper_refs, spec.helper_spans):
                if helper not in names:
                    add(doc, hspan.byte_start, hspan.line_start, Severity.WARNING,
                        f"helper {helper} of {spec.api_name} is not defined")

    if not any(d.severity is Severity.ERROR for d in out):
        graph = build_graph(docs)
        try:
            topological_order(graph, {EdgeKind.INCLUSION})
        except CycleError as exc:
            first = exc.cycle[0]
            where = next((c for c in table.get(first, [])), None)
            if where is not None:
                doc = next(d for d in docs if d.path == where.span.document_path)
                add(doc, where.span.byte_start, where.span.line_start, Severity.ERROR,
                    f"inclusion {exc}")
            else:
                out.append(Diagnostic(docs[0].path, 1, Severity.ERROR, f"inclusion {exc}"))

    return sorted(set(out), key=Diagnostic.sort_key)


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)
