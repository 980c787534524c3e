"""Typed dependency graph over chunks, annotations and file targets.

Edge direction is *dependent -> dependency*: ``add -> extended-+`` means
``add`` needs ``extended-+``.  Only inclusion edges (``<<name>>``) must stay
acyclic; declared and textual edges may describe mutual recursion.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .model import ChunkBlock, Document, Narrative, Project, SourceSpan
from .parser import LineIndex
from .tokens import REF_LINE_RE, narrative_words, occurrences


class EdgeKind(str, Enum):
    INCLUSION = "inclusion"
    DECLARED = "declared"
    TEXTUAL = "textual"


ALL_KINDS = frozenset(EdgeKind)
HARD_KINDS = frozenset({EdgeKind.INCLUSION, EdgeKind.DECLARED})


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    kind: EdgeKind
    span: SourceSpan


class CycleError(Exception):
    def __init__(self, cycle: list[str], kinds: Iterable[EdgeKind] = ()):
        self.cycle = list(cycle)
        kinds = sorted(k.value for k in kinds)
        label = f" over {'/'.join(kinds)} edges" if kinds else ""
        super().__init__(f"cycle{label}: " + " -> ".join(self.cycle + self.cycle[:1]))


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class DependencyGraph:
    nodes: tuple[str, ...]  # document order of first definition
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_rank", {n: i for i, n in enumerate(self.nodes)})

    def rank(self, node: str) -> tuple[int, str]:
        return (self._rank.get(node, len(self.nodes)), node)

    def adjacency(self, kinds: Iterable[EdgeKind] = ALL_KINDS) -> dict[str, list[str]]:
        kinds = frozenset(kinds)
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for e in self.edges:
            if e.kind in kinds:
                adj[e.source].add(e.target)
        return {n: sorted(vs, key=self.rank) for n, vs in adj.items()}

    def edges_of(self, kinds: Iterable[EdgeKind]) -> list[Edge]:
        kinds = frozenset(kinds)
        return [e for e in self.edges if e.kind in kinds]


def _section_bounds(doc: Document) -> list[tuple[int, int]]:
    heads = [h.offset for h in doc.headings]
    bounds = []
    starts = [0] + heads
    ends = heads + [len(doc.raw_text)]
    for s, e in zip(starts, ends):
        bounds.append((s, e))
    return bounds


def narrative_owner(doc: Document, index: LineIndex, offset: int, names: set[str]) -> str | None:
    """Node a narrative reference at ``offset`` speaks for.

    The enclosing step spec wins; otherwise the first annotation or named
    chunk defined in the same (innermost) section.
    """
    byte = index.byte(offset)
    for spec in doc.step_specs:
        if spec.span.byte_start <= byte < spec.span.byte_end:
            return spec.api_name
    for start, end in _section_bounds(doc):
        if start <= offset < end:
            lo, hi = index.byte(start), index.byte(end)
            defs = [(a.span.byte_start, a.name) for a in doc.annotations]
            defs += [(c.span.byte_start, c.name) for c in doc.chunks if c.name]
            for b, name in sorted(defs):
                if lo <= b < hi and name in names:
                    return name
            return None
    return None


def build_graph(project: Project | Iterable[Document]) -> DependencyGraph:
    docs = list(project.documents) if isinstance(project, Project) else list(project)
    defs: list[tuple[int, int, str]] = []
    for di, doc in enumerate(docs):
        for c in doc.chunks:
            if c.name:
                defs.append((di, c.span.byte_start, c.name))
            if c.file_target:
                defs.append((di, c.span.byte_start, c.file_target))
        for a in doc.annotations:
            defs.append((di, a.span.byte_start, a.name))
        for s in doc.step_specs:
            defs.append((di, s.span.byte_start, s.api_name))
    nodes: list[str] = []
    seen: set[str] = set()
    for _, _, name in sorted(defs):
        if name not in seen:
            seen.add(name)
            nodes.append(name)

    chunk_names = {c.name for d in docs for c in d.chunks if c.name}
    known = chunk_names | {a.name for d in docs for a in d.annotations}
    edges: set[Edge] = set()

    for doc in docs:
        index = LineIndex(doc.raw_text)
        for block in doc.blocks:
            if isinstance(block, Narrative):
                for link in block.links:
                    owner = narrative_owner(doc, index, link.offset, known | seen)
                    if owner and link.name in seen and owner != link.name:
                        edges.add(Edge(owner, link.name, EdgeKind.TEXTUAL, link.span))
                for cs in block.code_spans:
                    owner = narrative_owner(doc, index, cs.offset, known | seen)
                    if owner is None:
                        continue
                    for o in narrative_words(cs.text):
                        if o.name in known and o.name != owner:
                            s = cs.offset + o.start
                            edges.add(Edge(owner, o.name, EdgeKind.TEXTUAL,
                                           index.span(doc.path, s, cs.offset + o.end)))
                continue
            chunk = block.chunk
            owner = chunk.name or chunk.file_target
            body = "\n".join(chunk.body)
            base = block.body_offset
            if chunk.name and chunk.file_target and chunk.tangleable:
                edges.add(Edge(chunk.file_target, chunk.name, EdgeKind.INCLUSION, chunk.span))
            for m in REF_LINE_RE.finditer(body):
                ref = m.group(2)
                if owner and ref in chunk_names:
                    edges.add(Edge(owner, ref, EdgeKind.INCLUSION,
                                   index.span(doc.path, base + m.start(), base + m.end())))
            inside = [a for a in doc.annotations if chunk.span.contains(a.span)]
            for o in occurrences(body, chunk.language):
                if o.context == "ref" or o.name not in known:
                    continue
                start = index.byte(base + o.start)
                src = owner
                for a in inside:
                    if a.span.byte_start <= start < a.span.byte_end:
                        src = a.name
                        break
                if src and src != o.name:
                    edges.add(Edge(src, o.name, EdgeKind.TEXTUAL,
                                   index.span(doc.path, base + o.start, base + o.end)))
        for a in doc.annotations:
            for dep, span in zip(a.depends, a.depends_spans):
                if dep in seen and dep != a.name:
                    edges.add(Edge(a.name, dep, EdgeKind.DECLARED, span))
        for s in doc.step_specs:
            for helper, span in zip(s.helper_refs, s.helper_spans):
                if helper in seen and helper != s.api_name:
                    edges.add(Edge(s.api_name, helper, EdgeKind.DECLARED, span))

    doc_rank = {d.path: i for i, d in enumerate(docs)}
    ordered = sorted(
        edges,
        key=lambda e: (doc_rank.get(e.span.document_path, 0), e.span.byte_start,
                       e.span.byte_end, e.kind.value, e.source, e.target),
    )
    return DependencyGraph(tuple(nodes), tuple(ordered))


def find_cycle(graph: DependencyGraph, kinds: Iterable[EdgeKind], among: Iterable[str] | None = None) -> list[str] | None:
    adj = graph.adjacency(kinds)
    allowed = set(adj) if among is None else set(among)
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(u: str) -> list[str] | None:
        color[u] = 1
        stack.append(u)
        for v in adj[u]:
            if v not in allowed:
                continue
            if color.get(v) == 1:
                return stack[stack.index(v):]
            if v not in color:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        color[u] = 2
        return None

    for n in sorted(allowed, key=graph.rank):
        if n not in color:
            found = visit(n)
            if found:
                return found
    return None


def topological_order(graph: DependencyGraph, edge_kinds: Iterable[EdgeKind] = HARD_KINDS) -> list[str]:
    """All nodes, each dependency before its dependents.

    Ties go to document order, then name.  Raises :class:`CycleError` when
    the selected edges contain a cycle.
    """
    kinds = frozenset(edge_kinds)
    adj = graph.adjacency(kinds)
    pending = {n: len(deps) for n, deps in adj.items()}
    dependents: dict[str, list[str]] = defaultdict(list)
    for u, deps in adj.items():
        for v in deps:
            dependents[v].append(u)
    ready = [graph.rank(n) for n, k in pending.items() if k == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        _, n = heapq.heappop(ready)
        out.append(n)
        for u in dependents[n]:
            pending[u] -= 1
            if pending[u] == 0:
                heapq.heappush(ready, graph.rank(u))
    if len(out) < len(adj):
        rest = set(adj) - set(out)
        raise CycleError(find_cycle(graph, kinds, rest) or sorted(rest, key=graph.rank), kinds)
    return out


def reachable_layers(
    graph: DependencyGraph,
    target: str,
    edge_kinds: Iterable[EdgeKind] = ALL_KINDS,
    max_depth: int | None = None,
) -> list[list[str]]:
    if target not in graph.nodes:
        raise UnknownNodeError(target)
    adj = graph.adjacency(edge_kinds)
    visited = {target}
    frontier = [target]
    layers = []
    depth = 0
    while frontier and (max_depth is None or depth < max_depth):
        nxt = {v for u in frontier for v in adj[u] if v not in visited}
        if not nxt:
            break
        layer = sorted(nxt, key=graph.rank)
        visited.update(layer)
        layers.append(layer)
        frontier = layer
        depth += 1
    return layers


def reachable(
    graph: DependencyGraph,
    target: str,
    edge_kinds: Iterable[EdgeKind] = ALL_KINDS,
    max_depth: int | None = None,
) -> list[str]:
    """Nodes reachable from ``target`` in breadth-first layers, target excluded."""
    return [n for layer in reachable_layers(graph, target, edge_kinds, max_depth) for n in layer]


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: DependencyGraph, edge_kinds: Iterable[EdgeKind] = ALL_KINDS) -> str:
    kinds = frozenset(edge_kinds)
    lines = ["digraph ilp {"]
    lines += [f"  {_quote(n)};" for n in graph.nodes]
    seen = set()
    for e in graph.edges:
        key = (e.source, e.target, e.kind)
        if e.kind in kinds and key not in seen:
            seen.add(key)
            lines.append(f"  {_quote(e.source)} -> {_quote(e.target)} [kind={_quote(e.kind.value)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
