"""Tangling chunks into files, drift detection, and marker-driven detangle."""

from __future__ import annotations

import difflib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .graph import CycleError
from .model import (
    Chunk,
    ChunkBlock,
    Diagnostic,
    Document,
    Project,
    Severity,
    SourceSpan,
    anonymous_ids,
    chunk_table,
)
from .parser import parse_document
from .tokens import REF_LINE_RE, comment_leader
from .validate import path_escapes

log = logging.getLogger(__name__)

MARKER_RE = re.compile(r"^[ \t]*(\S+) ILP:(BEGIN|END) (\S+)(?: (\S+):(\d+))?[ \t]*$")
_REF_RE = re.compile(r"([ \t]*)<<([^<>\n]+)>>[ \t]*")


class TangleError(Exception):
    pass


class UnresolvedReferenceError(TangleError, KeyError):
    def __str__(self) -> str:
        return f"unresolved chunk reference <<{self.args[0]}>>"


class DetangleError(Exception):
    pass


@dataclass(frozen=True)
class ProvenanceEntry:
    chunk_id: str
    span: SourceSpan
    document_path: str


@dataclass
class TangleOutput:
    files: dict[str, str]
    # (path, (first_line, last_line)) -> origin, lines 1-based inclusive
    provenance: dict[tuple[str, tuple[int, int]], ProvenanceEntry]
    written: list[str] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)


@dataclass(frozen=True)
class DriftReport:
    path: str
    status: str  # in-sync, modified, missing, extra
    first_diff_line: int | None = None


def _expand(table, chunk: Chunk, stack: tuple[str, ...]) -> list[tuple[str, Chunk]]:
    out: list[tuple[str, Chunk]] = []
    for line in chunk.body:
        m = _REF_RE.fullmatch(line)
        if m is None:
            out.append((line, chunk))
            continue
        indent, ref = m.group(1), m.group(2)
        if ref not in table:
            raise UnresolvedReferenceError(ref)
        if ref in stack:
            raise CycleError(list(stack[stack.index(ref):]))
        for inner in table[ref]:
            out.extend((indent + text, origin) for text, origin in _expand(table, inner, stack + (ref,)))
    return out


def expand_chunk(table: dict[str, list[Chunk]], name: str) -> list[str]:
    """All chunks called ``name`` concatenated, with ``<<ref>>`` lines expanded.

    Each line produced by an inclusion carries the reference line's
    indentation as a prefix.
    """
    if name not in table:
        raise UnresolvedReferenceError(name)
    return [text for c in table[name] for text, _ in _expand(table, c, (name,))]


@dataclass
class _Contribution:
    chunk: Chunk
    lines: list[tuple[str, Chunk]]
    # (body index, is_reference, first expected line, end)
    groups: list[tuple[int, bool, int, int]]
    trailing: int  # trailing blank body lines that were trimmed


def _contribution(table, chunk: Chunk) -> _Contribution:
    stack = (chunk.name,) if chunk.name else ()
    lines: list[tuple[str, Chunk]] = []
    groups = []
    for b, line in enumerate(chunk.body):
        m = _REF_RE.fullmatch(line)
        start = len(lines)
        if m is None:
            lines.append((line, chunk))
        else:
            indent, ref = m.group(1), m.group(2)
            if ref not in table:
                raise UnresolvedReferenceError(ref)
            if ref in stack:
                raise CycleError(list(stack[stack.index(ref):]))
            for inner in table[ref]:
                lines.extend((indent + t, o) for t, o in _expand(table, inner, stack + (ref,)))
        groups.append((b, m is not None, start, len(lines)))
    trailing = 0
    while lines and lines[-1][0] == "" and lines[-1][1] is chunk:
        lines.pop()
        trailing += 1
    groups = [(b, r, min(s, len(lines)), min(e, len(lines))) for b, r, s, e in groups]
    return _Contribution(chunk, lines, groups, trailing)


def _chunk_id(chunk: Chunk, anon: dict[SourceSpan, str]) -> str:
    return chunk.name or anon[chunk.span]


def file_chunks(project: Project) -> dict[str, list[Chunk]]:
    files: dict[str, list[Chunk]] = {}
    for chunk in project.chunks:
        if chunk.file_target is not None and chunk.tangleable:
            files.setdefault(_normalize(chunk.file_target), []).append(chunk)
    return files


def _normalize(target: str) -> str:
    if path_escapes(target):
        raise TangleError(f"file target {target} escapes the output root")
    parts = [p for p in target.replace("\\", "/").split("/") if p not in ("", ".")]
    return "/".join(parts)


def begin_marker(leader: str, cid: str, chunk: Chunk) -> str:
    return f"{leader} ILP:BEGIN {cid} {chunk.span.document_path}:{chunk.span.line_start}"


def end_marker(leader: str, cid: str) -> str:
    return f"{leader} ILP:END {cid}"


def _render(project: Project, markers: bool) -> tuple[TangleOutput, dict[str, list[_Contribution]]]:
    table = chunk_table(project)
    anon = anonymous_ids(project)
    files: dict[str, str] = {}
    provenance: dict[tuple[str, tuple[int, int]], ProvenanceEntry] = {}
    contributions: dict[str, list[_Contribution]] = {}
    warnings: list[Diagnostic] = []
    warned: set[str] = set()
    for path, chunks in file_chunks(project).items():
        lines: list[str] = []
        origins: list[Chunk] = []
        contributions[path] = []
        for chunk in chunks:
            contrib = _contribution(table, chunk)
            contributions[path].append(contrib)
            cid = _chunk_id(chunk, anon)
            if markers:
                leader, known = comment_leader(chunk.language)
                if not known and chunk.language not in warned:
                    warned.add(chunk.language)
                    warnings.append(Diagnostic(
                        chunk.span.document_path, chunk.span.line_start, Severity.WARNING,
                        f"unknown language {chunk.language!r}; using {leader!r} for markers",
                        chunk.span.byte_start))
                lines.append(begin_marker(leader, cid, chunk))
                origins.append(chunk)
            for text, origin in contrib.lines:
                lines.append(text)
                origins.append(origin)
            if markers:
                lines.append(end_marker(leader, cid))
                origins.append(chunk)
        files[path] = "\n".join(lines) + "\n" if lines else ""
        start = 0
        for i in range(1, len(origins) + 1):
            if i == len(origins) or origins[i] is not origins[start]:
                o = origins[start]
                provenance[(path, (start + 1, i))] = ProvenanceEntry(
                    _chunk_id(o, anon) if (o.name or o.file_target) else "doc", o.span,
                    o.span.document_path)
                start = i
    return TangleOutput(files, provenance, [], warnings), contributions


def _target_path(out_root: Path, rel: str) -> Path:
    root = out_root.resolve()
    dest = (root / rel).resolve()
    if root != dest and root not in dest.parents:
        raise TangleError(f"{rel} escapes the output root")
    return dest


def tangle_project(project: Project, out_root: Path | str | None = None, markers: bool = False,
                   write: bool = True) -> TangleOutput:
    """Assemble every file target; write changed files under ``out_root``."""
    output, _ = _render(project, markers)
    if write and out_root is not None:
        out_root = Path(out_root)
        for rel, text in output.files.items():
            dest = _target_path(out_root, rel)
            data = text.encode("utf-8")
            if dest.is_file() and dest.read_bytes() == data:
                continue
            try:
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_bytes(data)
            except OSError as exc:
                raise TangleError(f"cannot write {rel}: {exc}") from exc
            output.written.append(rel)
            log.info("wrote %s", rel)
    return output


def strip_markers(text: str) -> str:
    return "".join(ln for ln in text.splitlines(keepends=True) if not MARKER_RE.match(ln.rstrip("\n")))


def _first_diff(a: str, b: str) -> int:
    la, lb = a.split("\n"), b.split("\n")
    for i, (x, y) in enumerate(zip(la, lb)):
        if x != y:
            return i + 1
    return min(len(la), len(lb))


def check_drift(project: Project, out_root: Path | str) -> list[DriftReport]:
    """Compare on-disk files with a fresh in-memory tangle, byte for byte."""
    out_root = Path(out_root)
    plain, _ = _render(project, markers=False)
    marked, _ = _render(project, markers=True)
    reports = []
    for rel in plain.files:
        dest = _target_path(out_root, rel)
        if not dest.exists():
            reports.append(DriftReport(rel, "missing"))
            continue
        try:
            disk = dest.read_bytes().decode("utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise TangleError(f"cannot read {rel}: {exc}") from exc
        expected = marked.files[rel] if MARKER_RE.search(disk) or " ILP:BEGIN " in disk else plain.files[rel]
        if disk == expected:
            reports.append(DriftReport(rel, "in-sync"))
        else:
            reports.append(DriftReport(rel, "modified", _first_diff(expected, disk)))
    if out_root.is_dir():
        docs = set()
        if project.root is not None:
            docs = {(Path(project.root) / d.path).resolve() for d in project.documents}
        for p in sorted(out_root.rglob("*")):
            rel = p.relative_to(out_root).as_posix()
            if not p.is_file() or rel in plain.files or p.resolve() in docs:
                continue
            if any(part.startswith(".") for part in p.relative_to(out_root).parts) or rel == "ilp.json":
                continue
            reports.append(DriftReport(rel, "extra"))
    return sorted(reports, key=lambda r: r.path)


def _parse_regions(rel: str, text: str) -> list[tuple[str, str, int, list[str], int]]:
    """(chunk id, doc path, doc line, interior lines, file line) per marked region."""
    regions = []
    current = None
    for n, line in enumerate(text.split("\n"), start=1):
        m = MARKER_RE.match(line)
        if m is None:
            if current is not None:
                current[3].append(line)
            elif line.strip():
                raise DetangleError(f"{rel}:{n}: text outside marked regions")
            continue
        kind, cid = m.group(2), m.group(3)
        if kind == "BEGIN":
            if current is not None:
                raise DetangleError(f"{rel}:{n}: nested ILP:BEGIN inside {current[0]}")
            if m.group(4) is None:
                raise DetangleError(f"{rel}:{n}: ILP:BEGIN without document location")
            current = (cid, m.group(4), int(m.group(5)), [], n)
        else:
            if current is None:
                raise DetangleError(f"{rel}:{n}: ILP:END without ILP:BEGIN")
            if current[0] != cid:
                raise DetangleError(f"{rel}:{n}: ILP:END {cid} closes {current[0]}")
            regions.append(current)
            current = None
    if current is not None:
        raise DetangleError(f"{rel}:{current[4]}: unclosed ILP:BEGIN {current[0]}")
    return regions


def _rebuild_body(contrib: _Contribution, actual: list[str], where: str) -> list[str]:
    expected = [t for t, _ in contrib.lines]
    owner = [None] * len(expected)  # index into groups
    for gi, (_, _, s, e) in enumerate(contrib.groups):
        for p in range(s, e):
            owner[p] = gi
    deleted: set[int] = set()
    inserts: dict[int, list[str]] = {}
    matcher = difflib.SequenceMatcher(a=expected, b=actual, autojunk=False)
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            continue
        if tag in ("replace", "delete"):
            for gi in {owner[p] for p in range(i1, i2)}:
                _, is_ref, s, e = contrib.groups[gi]
                if is_ref and not (i1 <= s and e <= i2):
                    raise DetangleError(f"{where}: edit inside an expanded <<...>> inclusion; "
                                        "edit the included chunk instead")
            deleted.update(range(i1, i2))
        if tag in ("replace", "insert"):
            if tag == "insert" and 0 < i1 < len(expected) and owner[i1 - 1] == owner[i1] \
                    and contrib.groups[owner[i1]][1]:
                raise DetangleError(f"{where}: insertion inside an expanded <<...>> inclusion")
            inserts.setdefault(i1, []).extend(actual[j1:j2])
    body = contrib.chunk.body
    new_body: list[str] = []
    emitted: set[int] = set()

    def flush(pos: int) -> None:
        if pos in inserts and pos not in emitted:
            emitted.add(pos)
            new_body.extend(inserts[pos])

    trimmed = len(body) - contrib.trailing
    for b, is_ref, s, e in contrib.groups:
        if b >= trimmed:
            break
        flush(s)
        if is_ref:
            if not (e > s and all(p in deleted for p in range(s, e))):
                new_body.append(body[b])
        elif s not in deleted:
            new_body.append(body[b])
    flush(len(expected))
    return new_body + [""] * contrib.trailing


def detangle_report(project: Project, out_root: Path | str) -> tuple[Project, list[str]]:
    """Propagate edits in marked tangled files back into chunk bodies.

    Returns the updated project and the ids of the chunks that changed.
    Nothing is modified unless every file detangles cleanly.
    """
    out_root = Path(out_root)
    _, contributions = _render(project, markers=True)
    anon = anonymous_ids(project)
    edits: dict[str, list[tuple[ChunkBlock, list[str]]]] = {}
    changed: list[str] = []
    blocks = {b.chunk.span: b for d in project.documents for b in d.blocks if isinstance(b, ChunkBlock)}
    for rel, contribs in contributions.items():
        dest = _target_path(out_root, rel)
        try:
            text = dest.read_bytes().decode("utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise DetangleError(f"cannot read {rel}: {exc}") from exc
        regions = _parse_regions(rel, text)
        by_key = {(c.chunk.span.document_path, c.chunk.span.line_start): c for c in contribs}
        seen = set()
        for cid, doc_path, line, interior, fline in regions:
            contrib = by_key.get((doc_path, line))
            if contrib is None or _chunk_id(contrib.chunk, anon) != cid:
                raise DetangleError(f"{rel}:{fline}: marker {cid} {doc_path}:{line} matches no chunk")
            if (doc_path, line) in seen:
                raise DetangleError(f"{rel}:{fline}: chunk {cid} appears twice")
            seen.add((doc_path, line))
            if interior == [t for t, _ in contrib.lines]:
                continue
            body = _rebuild_body(contrib, interior, f"{rel}:{fline}")
            if tuple(body) != contrib.chunk.body:
                edits.setdefault(doc_path, []).append((blocks[contrib.chunk.span], body))
                changed.append(cid)
        if len(seen) != len(contribs):
            raise DetangleError(f"{rel}: marked regions are missing; re-tangle with markers")
    for doc_path, doc_edits in edits.items():
        doc = project.document(doc_path)
        project = project.replace(rewrite_chunks(doc, doc_edits))
    return project, changed


def detangle(project: Project, out_root: Path | str) -> Project:
    return detangle_report(project, out_root)[0]


def rewrite_chunks(doc: Document, edits: list[tuple[ChunkBlock, list[str]]]) -> Document:
    """Replace chunk bodies, leaving every other byte of the document alone."""
    text = doc.raw_text
    parts, pos = [], 0
    for block, body in sorted(edits, key=lambda e: e[0].start):
        opener = text[block.start : block.body_offset]
        closer_start = block.body_offset + sum(len(ln) + 1 for ln in block.chunk.body)
        closer = text[closer_start : block.end]
        parts += [text[pos : block.start], opener, "".join(ln + "\n" for ln in body), closer]
        pos = block.end
    parts.append(text[pos:])
    return parse_document(doc.path, "".join(parts))
