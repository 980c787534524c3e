"""Budgeted prompt context: the descriptions a model should read, in order.

Segments are admitted by priority (target first, then its step spec, hard
dependencies, soft dependencies, and finally the surrounding narrative) and
rendered dependencies-first so every description precedes its users.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .graph import HARD_KINDS, CycleError, DependencyGraph, EdgeKind, build_graph, reachable, topological_order
from .model import Narrative, Project, SourceSpan
from .parser import narrative_between

ROLES = ("target-annotation", "step-spec", "hard-dep", "soft-dep", "narrative")
RENDER_ORDER = ("hard-dep", "soft-dep", "target-annotation", "step-spec", "narrative")
BUILTIN_TEMPLATES = ("stepwise", "fully-based")
PLACEHOLDERS = frozenset({"target", "language", "segments"})
SOFT_DEPTH = 8


class UnknownTargetError(KeyError):
    def __str__(self) -> str:
        return f"unknown target {self.args[0]}"


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    role: str
    name: str
    text: str
    cost: int


@dataclass(frozen=True)
class ContextBundle:
    target: str
    segments: tuple[Segment, ...]
    budget: int

    @property
    def rendered(self) -> str:
        return "\n\n".join(s.text for s in self.segments)

    @property
    def cost(self) -> int:
        return sum(s.cost for s in self.segments)


def cost_of(text: str) -> int:
    """Token estimate: one token per four characters, rounded up."""
    return math.ceil(len(text) / 4)


def _segment(role: str, name: str, text: str) -> Segment:
    return Segment(role, name, text, cost_of(text))


def describe(project: Project, name: str) -> str | None:
    """The descriptive text for ``name``: its annotation, step spec, or chunk."""
    ann = project.annotation(name)
    if ann is not None:
        return ann.source
    for spec in project.step_specs:
        if spec.api_name == name:
            return spec.source
    bodies = ["\n".join(c.body) for c in project.chunks if c.name == name]
    return "\n\n".join(bodies) if bodies else None


def _definition_span(project: Project, name: str) -> SourceSpan | None:
    ann = project.annotation(name)
    if ann is not None:
        return ann.span
    for c in project.chunks:
        if c.name == name:
            return c.span
    return None


def _enclosing_section(project: Project, span: SourceSpan) -> tuple[str, int] | None:
    """Narrative text of the innermost heading section around ``span``."""
    doc = project.document(span.document_path)
    text = doc.raw_text
    offset = len(text.encode("utf-8")[: span.byte_start].decode("utf-8", "ignore"))
    heads = doc.headings
    inner = None
    for k, h in enumerate(heads):
        if h.offset > offset:
            break
        inner = k
    if inner is None:
        return None
    h = heads[inner]
    end = len(text)
    for later in heads[inner + 1 :]:
        if later.level <= h.level:
            end = later.offset
            break
    body = narrative_between([b for b in doc.blocks if isinstance(b, Narrative)], h.offset, end)
    return body.strip("\n"), h.offset


def pack_context(project: Project, graph: DependencyGraph | None, target: str, budget: int) -> ContextBundle:
    """Gather whole segments for ``target`` until ``budget`` is spent."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    graph = graph or build_graph(project)
    target_text = describe(project, target)
    defined = {c.name for c in project.chunks if c.name} | {a.name for a in project.annotations}
    if target not in graph.nodes or (target not in defined and target_text is None):
        raise UnknownTargetError(target)

    candidates: list[Segment] = []
    if target_text is not None:
        ann = project.annotation(target)
        if ann is not None or not any(s.api_name == target for s in project.step_specs):
            candidates.append(_segment("target-annotation", target, target_text))
    spec = next((s for s in project.step_specs if s.api_name == target), None)
    if spec is not None and spec.source:
        candidates.append(_segment("step-spec", target, spec.source))

    hard = reachable(graph, target, HARD_KINDS)
    try:
        order = {n: i for i, n in enumerate(topological_order(graph, HARD_KINDS))}
    except CycleError:
        order = {n: i for i, n in enumerate(graph.nodes)}
    seen = {target}
    for name in sorted(hard, key=lambda n: (order.get(n, len(order)), graph.rank(n))):
        text = describe(project, name)
        if text is not None:
            candidates.append(_segment("hard-dep", name, text))
        seen.add(name)
    for name in reachable(graph, target, {EdgeKind.TEXTUAL}, SOFT_DEPTH):
        if name in seen:
            continue
        seen.add(name)
        text = describe(project, name)
        if text is not None:
            candidates.append(_segment("soft-dep", name, text))

    where = _definition_span(project, target)
    if where is not None:
        section = _enclosing_section(project, where)
        if section is not None and section[0].partition("\n")[2].strip():
            doc = project.document(where.document_path)
            head_byte = len(doc.raw_text[: section[1]].encode("utf-8"))
            in_spec = (spec is not None and spec.span.document_path == doc.path
                       and spec.span.byte_start <= head_byte < spec.span.byte_end)
            if not in_spec:
                candidates.append(_segment("narrative", target, section[0]))

    admitted: list[Segment] = []
    spent = 0
    for seg in candidates:  # first fit: a segment too large is skipped, later ones still tried
        if spent + seg.cost <= budget:
            admitted.append(seg)
            spent += seg.cost
    rank = {role: i for i, role in enumerate(RENDER_ORDER)}
    ordered = sorted(enumerate(admitted), key=lambda p: (rank[p[1].role], p[0]))
    return ContextBundle(target, tuple(s for _, s in ordered), budget)


def load_template(name: str, templates_dir: Path | str | None = None) -> str:
    if templates_dir is not None:
        candidate = Path(templates_dir) / f"{name}.txt"
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
    if name in BUILTIN_TEMPLATES:
        return resources.files("ilp_forge").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    path = Path(name)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    raise TemplateError(f"unknown template {name}")


def check_template(text: str) -> None:
    try:
        fields = list(string.Formatter().parse(text))
    except ValueError as exc:
        raise TemplateError(f"malformed template: {exc}") from None
    for _, field_name, spec, conversion in fields:
        if field_name is None:
            continue
        if field_name not in PLACEHOLDERS or spec or conversion:
            raise TemplateError(f"unknown placeholder {{{field_name}}} in template")


def render_prompt(bundle: ContextBundle, template: str = "stepwise", language: str = "python",
                  templates_dir: Path | str | None = None) -> str:
    """Fill a template (built-in name, file in ``templates_dir``, or path)."""
    text = load_template(template, templates_dir)
    check_template(text)
    return text.format(target=bundle.target, language=language, segments=bundle.rendered)
