"""Identifier occurrences in code, per language family.

Both the textual-edge scan and the renamer go through :func:`occurrences`,
so whatever counts as a reference is exactly what gets renamed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .sexpr import tokenize

SCHEME_LANGUAGES = frozenset({"scheme", "goldfish", "scm", "lisp", "racket", "r7rs", "s7", "elisp"})

_LEADERS = {
    ";;": SCHEME_LANGUAGES | {"clojure", "commonlisp"},
    "#": {"python", "py", "sh", "bash", "zsh", "shell", "ruby", "perl", "r", "yaml", "toml",
          "make", "makefile", "cmake", "dockerfile", "julia", "nim", "elixir", "ini"},
    "//": {"c", "cpp", "c++", "java", "javascript", "js", "typescript", "ts", "go", "rust",
           "swift", "kotlin", "scala", "csharp", "cs", "dart", "zig", "php"},
    "--": {"sql", "lua", "haskell", "hs", "ada", "elm"},
    "%": {"tex", "latex", "matlab", "erlang", "prolog"},
}
LEADER_BY_LANGUAGE = {lang: leader for leader, langs in _LEADERS.items() for lang in langs}
DEFAULT_LEADER = "//"

# Characters that make up a name inside comments and narrative code spans.
WORD_RE = re.compile(r"[A-Za-z0-9_?!+*/<>=%&^~$-]+")
REF_LINE_RE = re.compile(r"^([ \t]*)<<([^<>\n]+)>>[ \t]*$", re.MULTILINE)
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def comment_leader(language: str) -> tuple[str, bool]:
    """Line-comment leader for ``language`` and whether the language is known."""
    lang = language.lower()
    if lang in LEADER_BY_LANGUAGE:
        return LEADER_BY_LANGUAGE[lang], True
    return DEFAULT_LEADER, False


def is_scheme(language: str) -> bool:
    return language.lower() in SCHEME_LANGUAGES


@dataclass(frozen=True)
class Occurrence:
    start: int
    end: int
    name: str
    context: str  # code, comment, ref


def _words(text: str, base: int, context: str) -> list[Occurrence]:
    return [Occurrence(base + m.start(), base + m.end(), m.group(0), context) for m in WORD_RE.finditer(text)]


def _ref_lines(text: str) -> tuple[list[Occurrence], list[tuple[int, int]]]:
    occ, skip = [], []
    for m in REF_LINE_RE.finditer(text):
        occ.append(Occurrence(m.start(2), m.end(2), m.group(2), "ref"))
        skip.append((m.start(), m.end()))
    return occ, skip


def _scheme(text: str) -> list[Occurrence]:
    out = []
    for tok in tokenize(text):
        if tok.kind == "atom":
            if tok.text.startswith("<<") and tok.text.endswith(">>") and len(tok.text) > 4:
                out.append(Occurrence(tok.start + 2, tok.end - 2, tok.text[2:-2], "ref"))
            else:
                out.append(Occurrence(tok.start, tok.end, tok.text, "code"))
        elif tok.kind == "comment":
            out.extend(_words(tok.text, tok.start, "comment"))
    return out


def _generic(text: str, leader: str) -> list[Occurrence]:
    refs, skip = _ref_lines(text)
    out = list(refs)
    i, n = 0, len(text)
    skip_iter = iter(skip)
    next_skip = next(skip_iter, None)
    while i < n:
        if next_skip and i >= next_skip[0]:
            i = max(i, next_skip[1])
            next_skip = next(skip_iter, None)
            continue
        c = text[i]
        if text.startswith(leader, i) or (leader == "//" and text.startswith("/*", i)):
            if text.startswith("/*", i):
                j = text.find("*/", i + 2)
                j = n if j < 0 else j + 2
            else:
                j = text.find("\n", i)
                j = n if j < 0 else j
            out.extend(_words(text[i:j], i, "comment"))
            i = j
        elif c in "\"'":
            triple = text[i : i + 3]
            if triple in ('"""', "'''"):
                j = text.find(triple, i + 3)
                i = n if j < 0 else j + 3
            else:
                j = i + 1
                while j < n and text[j] not in (c, "\n"):
                    j += 2 if text[j] == "\\" else 1
                i = j + 1
        else:
            m = IDENT_RE.match(text, i)
            if m:
                out.append(Occurrence(m.start(), m.end(), m.group(0), "code"))
                i = m.end()
            else:
                i += 1
    out.sort(key=lambda o: o.start)
    return out


def occurrences(text: str, language: str) -> list[Occurrence]:
    """Name-like tokens of ``text``; text literals are never included."""
    if is_scheme(language):
        return _scheme(text)
    return _generic(text, comment_leader(language)[0])


def narrative_words(text: str) -> list[Occurrence]:
    return _words(text, 0, "code")


def rename(text: str, mapping: dict[str, str], language: str) -> str:
    """Replace every occurrence whose name is a key of ``mapping``."""
    if not mapping:
        return text
    return splice(text, [(o.start, o.end, mapping[o.name])
                         for o in occurrences(text, language) if o.name in mapping])


def rename_words(text: str, mapping: dict[str, str]) -> str:
    return splice(text, [(o.start, o.end, mapping[o.name])
                         for o in narrative_words(text) if o.name in mapping])


def splice(text: str, edits: list[tuple[int, int, str]]) -> str:
    parts, pos = [], 0
    for start, end, new in sorted(edits):
        parts.append(text[pos:start])
        parts.append(new)
        pos = end
    parts.append(text[pos:])
    return "".join(parts)
