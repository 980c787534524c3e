"""Consistent identifier renaming across code, annotations and narrative.

A rename touches symbol tokens in chunk bodies (comments included),
``chunk=`` values, ``<<ref>>`` lines, inline code spans, ``[[links]]`` and
headings whose whole title is the name.  Text literals and plain prose are
left alone, so applying the inverse mapping restores every byte.
"""

from __future__ import annotations

import random
import re
import string
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import ChunkBlock, Document, Narrative, Project
from .parser import CODE_SPAN_RE, HEADING_RE, INFO_ITEM_RE, LINK_RE, parse_document
from .tokens import is_scheme, occurrences, rename, rename_words, splice

MAX_ATTEMPTS = 1000
_SEED_RE = re.compile(r"#\s*seed:\s*(-?\d+)\s*$")


class RenameError(ValueError):
    pass


@dataclass(frozen=True)
class RenameMapping:
    pairs: tuple[tuple[str, str], ...]
    seed: int = 0

    def __post_init__(self) -> None:
        olds = [a for a, _ in self.pairs]
        news = [b for _, b in self.pairs]
        if len(set(olds)) != len(olds) or len(set(news)) != len(news):
            raise RenameError("rename mapping must be one-to-one")

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)

    def inverse(self) -> RenameMapping:
        return RenameMapping(tuple((b, a) for a, b in self.pairs), self.seed)

    def to_text(self) -> str:
        return f"# seed: {self.seed}\n" + "".join(f"{a}\t{b}\n" for a, b in self.pairs)

    @classmethod
    def from_text(cls, text: str) -> RenameMapping:
        seed = 0
        pairs = []
        for n, line in enumerate(text.splitlines(), start=1):
            m = _SEED_RE.match(line)
            if m:
                seed = int(m.group(1))
                continue
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise RenameError(f"line {n}: expected original<TAB>replacement")
            pairs.append((parts[0], parts[1]))
        return cls(tuple(pairs), seed)


def _rename_info(info: str, mapping: Mapping[str, str]) -> str:
    edits = []
    for m in INFO_ITEM_RE.finditer(info):
        if m.group(1) != "chunk" or m.group(2) is None:
            continue
        value = m.group(2)
        quoted = value.startswith('"')
        raw = value[1:-1] if quoted else value
        if raw in mapping:
            new = f'"{mapping[raw]}"' if quoted else mapping[raw]
            edits.append((m.start(2), m.end(2), new))
    return splice(info, edits)


def _rename_narrative(text: str, mapping: Mapping[str, str]) -> str:
    edits = []
    for m in CODE_SPAN_RE.finditer(text):
        new = rename_words(m.group(1), mapping)
        if new != m.group(1):
            edits.append((m.start(1), m.end(1), new))
    for m in LINK_RE.finditer(text):
        if m.group(1) in mapping:
            edits.append((m.start(1), m.end(1), mapping[m.group(1)]))
    pos = 0
    for line in text.split("\n"):
        h = HEADING_RE.fullmatch(line)
        if h and h.group(2).strip() in mapping:
            start = pos + h.start(2)
            edits.append((start, pos + h.end(2), mapping[h.group(2).strip()]))
        pos += len(line) + 1
    return splice(text, edits)


def rename_document(doc: Document, mapping: Mapping[str, str]) -> Document:
    if not mapping:
        return doc
    parts = []
    for block in doc.blocks:
        if isinstance(block, Narrative):
            parts.append(_rename_narrative(block.raw, mapping))
            continue
        chunk = block.chunk
        head = block.raw[: block.body_offset - block.start]
        body_len = sum(len(ln) + 1 for ln in chunk.body)
        body = block.raw[len(head) : len(head) + body_len]
        tail = block.raw[len(head) + body_len :]
        info_at = head.index("```") + 3
        info_end = info_at + len(chunk.info)
        head = head[:info_at] + _rename_info(chunk.info, mapping) + head[info_end:]
        parts.append(head + rename(body, dict(mapping), chunk.language) + tail)
    return parse_document(doc.path, "".join(parts))


def apply_renames(project: Project, mapping: RenameMapping | Mapping[str, str]) -> Project:
    pairs = mapping.as_dict() if isinstance(mapping, RenameMapping) else dict(mapping)
    return Project(tuple(rename_document(d, pairs) for d in project.documents), project.root)


def code_names(project: Project) -> set[str]:
    """Every name that occurs as a code token in some chunk."""
    names = set()
    for c in project.chunks:
        names.update(o.name for o in occurrences("\n".join(c.body), c.language) if o.context != "comment")
    return names


def _needs_identifier(project: Project, name: str) -> bool:
    """True when ``name`` occurs in a chunk whose language cannot take a hyphen."""
    for c in project.chunks:
        if is_scheme(c.language):
            continue
        if any(o.name == name for o in occurrences("\n".join(c.body), c.language)):
            return True
    return False


def _pseudo_name(rng: random.Random, hyphen: bool) -> str:
    length = rng.randint(6, 10)
    letters = [rng.choice(string.ascii_lowercase) for _ in range(length)]
    if hyphen and rng.random() < 0.5:
        letters[rng.randint(2, length - 3)] = "-"
    return "".join(letters)


def obfuscate(project: Project, names: Iterable[str], seed: int) -> tuple[Project, RenameMapping]:
    """Rename each of ``names`` to a fresh pseudo-name chosen from ``seed``."""
    names = list(dict.fromkeys(names))
    if not names:
        return project, RenameMapping((), seed)
    known = project.defined_names() | code_names(project)
    missing = [n for n in names if n not in known]
    if missing:
        raise RenameError("not defined in project: " + ", ".join(missing))
    texts = [d.raw_text for d in project.documents]
    rng = random.Random(seed)
    taken: set[str] = set()
    pairs = []
    for name in names:
        hyphen = not _needs_identifier(project, name)
        for _ in range(MAX_ATTEMPTS):
            new = _pseudo_name(rng, hyphen)
            if new not in taken and new not in known and not any(new in t for t in texts):
                break
        else:
            raise RenameError(f"could not find a fresh name for {name} after {MAX_ATTEMPTS} attempts")
        taken.add(new)
        pairs.append((name, new))
    mapping = RenameMapping(tuple(pairs), seed)
    return apply_renames(project, mapping), mapping
