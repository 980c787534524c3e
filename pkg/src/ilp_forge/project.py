"""Project configuration (``ilp.json``) and loading documents from disk."""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .model import Project
from .parser import parse_document

CONFIG_NAME = "ilp.json"
SCHEMA_VERSION = 1
KNOWN_KEYS = {"schema", "documents", "order", "out_root", "evaluator", "default_language",
              "templates", "jobs", "timeout"}


class ConfigError(ValueError):
    pass


@dataclass
class ProjectConfig:
    root: Path
    documents: list[str] = field(default_factory=lambda: ["*.md"])
    order: list[str] | None = None  # explicit order; None sorts paths lexicographically
    out_root: str = "build"
    evaluator: list[str] | None = None
    default_language: str = "python"
    templates: str | None = None
    jobs: int = 1
    timeout: float = 10.0

    @property
    def out_path(self) -> Path:
        return (self.root / self.out_root).resolve()

    @property
    def templates_path(self) -> Path | None:
        return self.root / self.templates if self.templates else None


def _evaluator(value) -> list[str] | None:
    if value is None:
        return None
    if isinstance(value, str):
        return shlex.split(value)
    if isinstance(value, list) and all(isinstance(v, str) for v in value) and value:
        return list(value)
    raise ConfigError("evaluator must be a command string or a list of strings")


def load_config(root: Path | str, config_path: Path | str | None = None) -> ProjectConfig:
    root = Path(root).resolve()
    path = Path(config_path) if config_path else root / CONFIG_NAME
    data: dict = {}
    if path.is_file():
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        if data.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"{path}: unsupported schema {data.get('schema')!r}; expected {SCHEMA_VERSION}")
        unknown = sorted(set(data) - KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    elif config_path:
        raise ConfigError(f"{path}: no such config file")
    cfg = ProjectConfig(root)
    docs = data.get("documents", cfg.documents)
    if isinstance(docs, str):
        docs = [docs]
    if not isinstance(docs, list) or not docs or not all(isinstance(d, str) for d in docs):
        raise ConfigError("documents must be a non-empty list of glob patterns")
    cfg.documents = docs
    order = data.get("order", "lexicographic")
    if order == "lexicographic":
        cfg.order = None
    elif isinstance(order, list) and all(isinstance(o, str) for o in order):
        cfg.order = order
    else:
        raise ConfigError('order must be "lexicographic" or a list of document paths')
    cfg.out_root = str(data.get("out_root", cfg.out_root))
    cfg.evaluator = _evaluator(data.get("evaluator"))
    cfg.default_language = str(data.get("default_language", cfg.default_language))
    cfg.templates = data.get("templates")
    try:
        cfg.jobs = max(1, int(data.get("jobs", cfg.jobs)))
        cfg.timeout = float(data.get("timeout", cfg.timeout))
    except (TypeError, ValueError):
        raise ConfigError("jobs and timeout must be numbers") from None
    out = cfg.out_path
    if not (out == root or root in out.parents or out.parent == root.parent):
        raise ConfigError(f"out_root {cfg.out_root} must be inside or beside the project root")
    return cfg


def document_paths(cfg: ProjectConfig) -> list[str]:
    """Document paths relative to the root, in configured order."""
    found: set[str] = set()
    out_dir = cfg.out_path
    for pattern in cfg.documents:
        for p in cfg.root.glob(pattern):
            if p.is_file() and out_dir not in p.resolve().parents:
                found.add(p.relative_to(cfg.root).as_posix())
    if not found:
        raise ConfigError(f"no documents match {', '.join(cfg.documents)} under {cfg.root}")
    if cfg.order is None:
        return sorted(found)
    missing = [o for o in cfg.order if o not in found]
    if missing:
        raise ConfigError(f"order lists unknown documents: {', '.join(missing)}")
    rest = sorted(found - set(cfg.order))
    return list(cfg.order) + rest


def load_project(cfg: ProjectConfig) -> Project:
    docs = []
    for rel in document_paths(cfg):
        try:
            data = (cfg.root / rel).read_bytes().decode("utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read {rel}: {exc}") from None
        docs.append(parse_document(rel, data))
    return Project(tuple(docs), cfg.root)


def save_documents(project: Project, original: Project | None = None, root: Path | None = None) -> list[str]:
    """Write documents whose text changed; returns the paths written."""
    root = Path(root or project.root or ".")
    before = {d.path: d.raw_text for d in original.documents} if original else {}
    written = []
    for doc in project.documents:
        if before.get(doc.path) == doc.raw_text:
            continue
        dest = root / doc.path
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(doc.raw_text.encode("utf-8"))
        written.append(doc.path)
    return written
