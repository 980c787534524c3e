"""Weaving: documents rendered for readers, with a generated index."""

from __future__ import annotations

import html
import re
from collections import Counter
from dataclasses import dataclass

from .graph import EdgeKind, build_graph
from .model import ChunkBlock, Document, Narrative, Project, anonymous_ids
from .parser import AnchorAllocator, CODE_SPAN_RE, HEADING_RE, LINK_RE, slugify

FORMATS = ("md", "html")


@dataclass(frozen=True)
class IndexEntry:
    name: str
    kind: str  # annotation, chunk, step-spec
    pattern: str
    complexity: str
    stability: str
    defined_at: str
    referenced_at: tuple[str, ...]


@dataclass(frozen=True)
class WovenDoc:
    body: str
    index_entries: tuple[IndexEntry, ...]
    format: str = "md"


class _Anchors:
    """Every anchor of the woven output, allocated once in document order."""

    def __init__(self, project: Project):
        alloc = AnchorAllocator()
        self.headings: dict[tuple[str, int], str] = {}
        self.chunks: dict[tuple[str, int], str] = {}
        self.defs: dict[str, str] = {}
        self.first_chunk: dict[str, str] = {}
        self.file_chunk: dict[str, str] = {}
        anon = anonymous_ids(project)
        for doc in project.documents:
            for block in doc.blocks:
                if isinstance(block, Narrative):
                    for h in block.headings:
                        self.headings[(doc.path, h.offset)] = alloc.allocate(slugify(h.title))
                    continue
                chunk = block.chunk
                inside = [a for a in doc.annotations if chunk.span.contains(a.span)]
                for a in inside:
                    if a.name not in self.defs:
                        self.defs[a.name] = alloc.allocate("def-" + slugify(a.name))
                label = chunk.name or anon.get(chunk.span)
                if label is None:
                    continue
                anchor = alloc.allocate("chunk-" + slugify(label))
                self.chunks[(doc.path, block.start)] = anchor
                if chunk.name:
                    self.first_chunk.setdefault(chunk.name, anchor)
                if chunk.file_target:
                    self.file_chunk.setdefault(chunk.file_target, anchor)
        self.specs: dict[str, str] = {}
        for doc in project.documents:
            for spec in doc.step_specs:
                for h in doc.headings:
                    if h.anchor == spec.anchor:
                        self.specs.setdefault(spec.api_name, self.headings[(doc.path, h.offset)])
                        break
        self.index = alloc.allocate("index")

    def site(self, node: str) -> str | None:
        for table in (self.defs, self.first_chunk, self.specs, self.file_chunk):
            if node in table:
                return table[node]
        return None


def index_entries(project: Project, anchors: _Anchors | None = None) -> list[IndexEntry]:
    anchors = anchors or _Anchors(project)
    graph = build_graph(project)
    annotations = {}
    for a in project.annotations:
        annotations.setdefault(a.name, a)
    names = set(annotations) | {c.name for c in project.chunks if c.name} | {s.api_name for s in project.step_specs}
    refs: dict[str, list[str]] = {n: [] for n in names}
    for e in graph.edges:
        if e.kind is EdgeKind.INCLUSION or e.target not in refs:
            continue
        site = anchors.site(e.source)
        if site is not None:
            refs[e.target].append(site)
    for api, anchor in anchors.specs.items():
        if api in refs:
            refs[api].append(anchor)
    entries = []
    for name in sorted(names):
        a = annotations.get(name)
        if a is not None:
            kind = "annotation"
            meta = (a.pattern, a.complexity, a.stability.value)
        else:
            kind = "chunk" if name in anchors.first_chunk else "step-spec"
            meta = ("", "", "")
        entries.append(IndexEntry(name, kind, *meta, anchors.site(name) or anchors.index,
                                  tuple(refs[name])))
    return entries


def _rewrite_links(text: str, anchors: _Anchors, fmt: str) -> str:
    def link(m: re.Match) -> str:
        name = m.group(1)
        target = anchors.site(name)
        if target is None:
            return m.group(0)
        if fmt == "html":
            return f'<a href="#{target}">{html.escape(name)}</a>'
        return f"[{name}](#{target})"

    return LINK_RE.sub(link, text)


def _chunk_label(block: ChunkBlock, parts: dict, anon: dict) -> str | None:
    chunk = block.chunk
    label = chunk.name or anon.get(chunk.span)
    if label is None:
        return None
    bits = []
    if chunk.file_target:
        bits.append(f"file {chunk.file_target}")
    if chunk.name:
        k, n = parts[(block.chunk.span)]
        bits.append(f"part {k} of {n}")
    return label + (" (" + ", ".join(bits) + ")" if bits else "")


def _parts(project: Project) -> dict:
    totals = Counter(c.name for c in project.chunks if c.name)
    seen: Counter = Counter()
    out = {}
    for c in project.chunks:
        if c.name:
            seen[c.name] += 1
            out[c.span] = (seen[c.name], totals[c.name])
    return out


def _def_anchors(doc: Document, block: ChunkBlock, anchors: _Anchors) -> list[str]:
    out = []
    for a in doc.annotations:
        if block.chunk.span.contains(a.span) and anchors.defs.get(a.name) not in out:
            out.append(anchors.defs[a.name])
    return out


def _md_ref_list(refs: tuple[str, ...]) -> str:
    counts = Counter(refs)
    items = []
    for anchor in dict.fromkeys(refs):
        suffix = f" x{counts[anchor]}" if counts[anchor] > 1 else ""
        items.append(f"[{anchor}](#{anchor}){suffix}")
    return ", ".join(items)


def _lines(text: str) -> list[str]:
    return [ln + "\n" for ln in text.split("\n")[:-1]] + ([text.rsplit("\n", 1)[-1]] if not text.endswith("\n") else [])


def _cell(text: str) -> str:
    return text.replace("|", "\\|")


def _weave_md(project: Project, anchors: _Anchors, entries: list[IndexEntry]) -> str:
    parts, anon = _parts(project), anonymous_ids(project)
    out: list[str] = []
    for doc in project.documents:
        for block in doc.blocks:
            if isinstance(block, Narrative):
                lines = _lines(block.raw)
                pos = block.start
                for line in lines:
                    if HEADING_RE.fullmatch(line.rstrip("\n")):
                        out.append(f'<a id="{anchors.headings[(doc.path, pos)]}"></a>\n')
                    out.append(_rewrite_links(line, anchors, "md"))
                    pos += len(line)
                if out and not out[-1].endswith("\n"):
                    out.append("\n")
                continue
            ids = _def_anchors(doc, block, anchors)
            if (doc.path, block.start) in anchors.chunks:
                ids.append(anchors.chunks[(doc.path, block.start)])
            label = _chunk_label(block, parts, anon)
            if ids or label:
                tags = "".join(f'<a id="{a}"></a>' for a in ids)
                out.append(tags + (f"**{label}**" if label else "") + "\n\n")
            out.append("```" + block.chunk.language + "\n")
            out.extend(line + "\n" for line in block.chunk.body)
            out.append("```\n")
    if entries:
        if out and out[-1] != "\n":
            out.append("\n")
        out.append(f'<a id="{anchors.index}"></a>\n## Index\n\n')
        out.append("| name | kind | pattern | complexity | stability | defined at | referenced at |\n")
        out.append("|---|---|---|---|---|---|---|\n")
        for e in entries:
            row = [f"[{_cell(e.name)}](#{e.defined_at})", e.kind, _cell(e.pattern), _cell(e.complexity),
                   e.stability, f"[{e.defined_at}](#{e.defined_at})", _md_ref_list(e.referenced_at)]
            out.append("| " + " | ".join(row) + " |\n")
    return "".join(out)


def _inline_html(text: str, anchors: _Anchors) -> str:
    pieces, pos = [], 0
    for m in CODE_SPAN_RE.finditer(text):
        pieces.append(_rewrite_links(html.escape(text[pos : m.start()], quote=False), anchors, "html"))
        pieces.append(f"<code>{html.escape(m.group(1), quote=False)}</code>")
        pos = m.end()
    pieces.append(_rewrite_links(html.escape(text[pos:], quote=False), anchors, "html"))
    return "".join(pieces)


def _weave_html(project: Project, anchors: _Anchors, entries: list[IndexEntry]) -> str:
    parts, anon = _parts(project), anonymous_ids(project)
    out: list[str] = []
    for doc in project.documents:
        for block in doc.blocks:
            if isinstance(block, Narrative):
                pos = block.start
                para: list[str] = []

                def flush() -> None:
                    if para:
                        out.append("<p>" + _inline_html(" ".join(para), anchors) + "</p>\n")
                        para.clear()

                for line in _lines(block.raw):
                    text = line.rstrip("\n")
                    m = HEADING_RE.fullmatch(text)
                    if m:
                        flush()
                        level = len(m.group(1))
                        anchor = anchors.headings[(doc.path, pos)]
                        out.append(f'<h{level} id="{anchor}">{_inline_html(m.group(2), anchors)}</h{level}>\n')
                    elif text.strip():
                        para.append(text.strip())
                    else:
                        flush()
                    pos += len(line)
                flush()
                continue
            ids = _def_anchors(doc, block, anchors)
            if (doc.path, block.start) in anchors.chunks:
                ids.append(anchors.chunks[(doc.path, block.start)])
            label = _chunk_label(block, parts, anon)
            if ids or label:
                tags = "".join(f'<a id="{a}"></a>' for a in ids)
                strong = f"<strong>{html.escape(label)}</strong>" if label else ""
                out.append(f'<p class="chunk-label">{tags}{strong}</p>\n')
            lang = html.escape(block.chunk.language)
            code = html.escape("".join(line + "\n" for line in block.chunk.body), quote=False)
            out.append(f'<pre><code class="language-{lang}">{code}</code></pre>\n')
    if entries:
        out.append(f'<h2 id="{anchors.index}">Index</h2>\n<table>\n')
        out.append("<tr><th>name</th><th>kind</th><th>pattern</th><th>complexity</th>"
                   "<th>stability</th><th>defined at</th><th>referenced at</th></tr>\n")
        for e in entries:
            counts = Counter(e.referenced_at)
            refs = ", ".join(
                f'<a href="#{a}">{a}</a>' + (f" x{counts[a]}" if counts[a] > 1 else "")
                for a in dict.fromkeys(e.referenced_at)
            )
            cells = [f'<a href="#{e.defined_at}">{html.escape(e.name)}</a>', e.kind,
                     html.escape(e.pattern), html.escape(e.complexity), e.stability,
                     f'<a href="#{e.defined_at}">{e.defined_at}</a>', refs]
            out.append("<tr>" + "".join(f"<td>{c}</td>" for c in cells) + "</tr>\n")
        out.append("</table>\n")
    if not out:
        return ""
    return ("<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>ILP document</title></head>\n"
            "<body>\n" + "".join(out) + "</body>\n</html>\n")


def weave(project: Project, fmt: str = "md") -> WovenDoc:
    """Render ``project`` as Markdown or static HTML with an Index section."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown weave format {fmt!r}")
    anchors = _Anchors(project)
    entries = index_entries(project, anchors)
    render = _weave_html if fmt == "html" else _weave_md
    return WovenDoc(render(project, anchors, entries), tuple(entries), fmt)
