"""Completion providers and the generate/merge loop.

Providers share one method, ``complete(prompt) -> str``.  The HTTP
provider speaks the common chat-completion JSON shape; the stubs make the
whole loop reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

from .context import ContextBundle, render_prompt
from .model import ChunkBlock, Diagnostic, Project, Severity
from .parser import format_info_string, parse_document

log = logging.getLogger(__name__)

ENV_ENDPOINT = "ILP_LLM_ENDPOINT"
ENV_API_KEY = "ILP_LLM_API_KEY"
ENV_MODEL = "ILP_LLM_MODEL"
HTTP_TIMEOUT = 30.0

_FENCE_RE = re.compile(r"^```[ \t]*([^\s`]*)[^\n]*\n(.*?)^```[ \t]*$", re.MULTILINE | re.DOTALL)
EXTENSIONS = {"python": "py", "py": "py", "scheme": "scm", "javascript": "js", "typescript": "ts",
              "rust": "rs", "go": "go", "c": "c", "cpp": "cpp", "java": "java", "ruby": "rb"}


class ProviderError(Exception):
    pass


class TransportError(ProviderError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ConfigurationError(ProviderError):
    pass


class EmptyResponseError(ProviderError):
    pass


class PlacementError(LookupError):
    pass


class CompletionProvider(Protocol):
    provider_id: str

    def complete(self, prompt: str) -> str: ...


class FixedResponseProvider:
    def __init__(self, response: str, provider_id: str = "fixed"):
        self.response = response
        self.provider_id = provider_id
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        return self.response


class ReplayProvider:
    """Answers from a file: a JSON list of responses, or one plain-text response."""

    def __init__(self, path: Path | str):
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        responses = None
        if path.suffix == ".json":
            data = json.loads(text)
            if not isinstance(data, list) or not all(isinstance(r, str) for r in data):
                raise ConfigurationError(f"{path}: expected a JSON list of strings")
            responses = data
        self.responses: list[str] = responses if responses is not None else [text]
        self.provider_id = f"replay:{path.name}"
        self.calls = 0

    def complete(self, prompt: str) -> str:
        if not self.responses:
            raise EmptyResponseError("replay file holds no responses")
        response = self.responses[min(self.calls, len(self.responses) - 1)]
        self.calls += 1
        return response


class HttpProvider:
    def __init__(self, endpoint: str, api_key: str | None, model: str, timeout: float = HTTP_TIMEOUT):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.provider_id = f"http:{model}"

    @classmethod
    def from_env(cls, env: dict | None = None) -> HttpProvider:
        env = os.environ if env is None else env
        endpoint = env.get(ENV_ENDPOINT)
        if not endpoint:
            raise ConfigurationError(f"{ENV_ENDPOINT} is not set")
        return cls(endpoint, env.get(ENV_API_KEY), env.get(ENV_MODEL, ""))

    def complete(self, prompt: str) -> str:
        payload = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(self.endpoint, json.dumps(payload).encode("utf-8"), headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = resp.read()
        except urllib.error.HTTPError as exc:
            raise TransportError(f"endpoint answered HTTP {exc.code}", exc.code) from None
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"cannot reach endpoint: {exc}") from None
        try:
            return json.loads(body)["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise TransportError("response is not a chat completion") from None


@dataclass(frozen=True)
class Provenance:
    provider_id: str
    timestamp: str
    prompt_digest: str


@dataclass(frozen=True)
class GeneratedChunk:
    target_name: str
    language: str
    body: tuple[str, ...]
    provenance: Provenance
    warnings: tuple[str, ...] = ()


def prompt_digest(prompt: str) -> str:
    return "sha256:" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def extract_code(response: str) -> tuple[str | None, str, bool]:
    """(fence language, code, fenced?) for the first fenced block, else the whole text."""
    m = _FENCE_RE.search(response)
    if m:
        return m.group(1) or None, m.group(2), True
    return None, response, False


def generate_for_target(provider: CompletionProvider, bundle: ContextBundle, template: str = "fully-based",
                        language: str = "python", templates_dir: Path | str | None = None) -> GeneratedChunk:
    prompt = render_prompt(bundle, template, language, templates_dir)
    response = provider.complete(prompt)
    if not response or not response.strip():
        raise EmptyResponseError(f"{provider.provider_id} returned an empty response")
    _, code, fenced = extract_code(response)
    warnings = () if fenced else ("response has no fenced code block; using the whole text",)
    lines = code.rstrip("\n").split("\n")
    lines = [ln.rstrip("\r") for ln in lines]
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise EmptyResponseError(f"{provider.provider_id} returned no code")
    for w in warnings:
        log.debug("%s", w)
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return GeneratedChunk(bundle.target, language, tuple(lines),
                          Provenance(provider.provider_id, stamp, prompt_digest(prompt)), warnings)


def default_file_target(target: str, language: str) -> str:
    ext = EXTENSIONS.get(language.lower(), language.lower() or "txt")
    return f"generated/{target.replace('-', '_')}.{ext}"


def merge_generated(project: Project, chunk: GeneratedChunk, placement: str) -> tuple[Project, list[Diagnostic]]:
    """Insert ``chunk`` as a new code block; every other byte stays as it was.

    ``placement`` is a heading anchor (insert at the end of that section) or
    an existing file target (insert after its last chunk, same file).
    """
    doc, offset, file_target = _locate(project, placement, chunk)
    diagnostics: list[Diagnostic] = []
    taken = {c.name for c in project.chunks if c.name}
    name = f"{chunk.target_name}-gen"
    if name in taken:
        n = 2
        while f"{name}-{n}" in taken:
            n += 1
        diagnostics.append(Diagnostic(doc.path, doc.line_of(offset), Severity.WARNING,
                                      f"chunk {name} exists; naming the new chunk {name}-{n}"))
        name = f"{name}-{n}"
    text = doc.raw_text
    attrs = {"file": file_target, "chunk": name}
    block = "```" + format_info_string(chunk.language, attrs) + "\n" + "".join(ln + "\n" for ln in chunk.body) + "```\n"
    before = text[:offset]
    lead = "" if before == "" or before.endswith("\n\n") else ("\n" if before.endswith("\n") else "\n\n")
    after = text[offset:]
    trail = "\n" if after and not after.startswith("\n") else ""
    new_doc = parse_document(doc.path, before + lead + block + trail + after)
    return project.replace(new_doc), diagnostics


def _locate(project: Project, placement: str, chunk: GeneratedChunk):
    for doc in project.documents:
        heads = doc.headings
        for k, h in enumerate(heads):
            if h.anchor != placement:
                continue
            end = len(doc.raw_text)
            for later in heads[k + 1 :]:
                if later.level <= h.level:
                    end = later.offset
                    break
            return doc, end, default_file_target(chunk.target_name, chunk.language)
    last = None
    for doc in project.documents:
        for block in doc.blocks:
            if isinstance(block, ChunkBlock) and block.chunk.file_target == placement:
                last = (doc, block.end)
    if last is not None:
        doc, end = last
        if end < len(doc.raw_text) and doc.raw_text[end] == "\n":
            end += 1
        return doc, end, placement
    raise PlacementError(f"placement {placement} matches no heading anchor or file target")


def provider_from(replay: str | None = None, fixed: str | None = None, env: dict | None = None) -> CompletionProvider:
    if replay:
        return ReplayProvider(replay)
    if fixed is not None:
        return FixedResponseProvider(fixed)
    return HttpProvider.from_env(env)

