"""Executable checks built from annotation examples.

Each example becomes a small program: the implementation chunks the
annotation depends on, then a probe that prints ``#t`` when the example
holds.  Programs run under an external evaluator, one fresh process per
test.
"""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .graph import ALL_KINDS, HARD_KINDS, CycleError, EdgeKind, build_graph, reachable, topological_order
from .model import Diagnostic, Project, Severity, SourceSpan, chunk_table
from .sexpr import print_datum
from .tangle import expand_chunk

log = logging.getLogger(__name__)

EXPECTED_STDOUT = "#t\n"
DEFAULT_TIMEOUT = 10.0
STATUSES = ("pass", "fail", "error", "skipped")


@dataclass(frozen=True)
class TestCase:
    annotation_name: str
    program: str
    expected_stdout: str
    origin: SourceSpan
    number: int = 1
    skip_reason: str | None = None

    __test__ = False  # keep pytest from collecting this class

    @property
    def id(self) -> str:
        return f"{self.annotation_name}#{self.number}"


@dataclass(frozen=True)
class TestResult:
    test: TestCase
    status: str
    stdout: str = ""
    stderr: str = ""
    returncode: int | None = None
    message: str = ""

    __test__ = False


@dataclass
class TestReport:
    results: list[TestResult] = field(default_factory=list)
    environment_error: str | None = None

    __test__ = False

    def count(self, status: str) -> int:
        return sum(r.status == status for r in self.results)

    @property
    def passed(self) -> int:
        return self.count("pass")

    @property
    def failed(self) -> int:
        return self.count("fail")

    @property
    def errors(self) -> int:
        return self.count("error")

    @property
    def skipped(self) -> int:
        return self.count("skipped")

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.errors == 0 and self.environment_error is None


def probe(input_expr, expected) -> str:
    return f"(display (equal? {print_datum(input_expr)} (quote {print_datum(expected)})))\n(newline)\n"


def _implementation(project: Project, graph, name: str, order: dict[str, int]) -> list[str]:
    """Names of the chunks a test program for ``name`` must define, in order."""
    table = chunk_table(project)
    wanted = [name] + reachable(graph, name, ALL_KINDS)
    chunks = [n for n in wanted if n in table and any(c.tangleable for c in table[n])]
    # chunks pulled in through <<...>> by another selected chunk come with it
    included = {e.target for e in graph.edges_of({EdgeKind.INCLUSION}) if e.source in chunks}
    chunks = [n for n in chunks if n not in included]
    return sorted(chunks, key=lambda n: (order.get(n, len(order)), graph.rank(n)))


def extract_tests(project: Project, targets: Iterable[str] | None = None) -> tuple[list[TestCase], list[Diagnostic]]:
    """One TestCase per example, plus diagnostics for examples that cannot run."""
    graph = build_graph(project)
    try:
        order = {n: i for i, n in enumerate(topological_order(graph, HARD_KINDS))}
    except CycleError:
        order = {n: i for i, n in enumerate(graph.nodes)}
    wanted = None if targets is None else set(targets)
    table = chunk_table(project)
    tests: list[TestCase] = []
    diagnostics: list[Diagnostic] = []
    for ann in project.annotations:
        if wanted is not None and ann.name not in wanted or not ann.examples:
            continue
        names = _implementation(project, graph, ann.name, order)
        skip = None
        definitions = ""
        if not names:
            skip = f"annotation {ann.name} has examples but no implementation chunk"
            diagnostics.append(Diagnostic(ann.span.document_path, ann.span.line_start,
                                          Severity.WARNING, skip, ann.span.byte_start))
        else:
            parts = []
            for n in names:
                own = {**table, n: [c for c in table[n] if c.tangleable]}
                lines = expand_chunk(own, n)
                parts.append("\n".join(lines).rstrip("\n") + "\n")
            definitions = "\n".join(parts) + "\n"
        for k, ex in enumerate(ann.examples, start=1):
            program = "" if skip else definitions + probe(ex.input_expr, ex.expected)
            tests.append(TestCase(ann.name, program, EXPECTED_STDOUT, ex.span, k, skip))
    return tests, diagnostics


def evaluator_available(command: Sequence[str]) -> bool:
    if not command:
        return False
    exe = command[0]
    if os.sep in exe or (os.altsep and os.altsep in exe):
        return os.path.isfile(exe) and os.access(exe, os.X_OK)
    return shutil.which(exe) is not None


def _run_one(test: TestCase, command: Sequence[str], timeout: float) -> TestResult:
    if test.skip_reason:
        return TestResult(test, "skipped", message=test.skip_reason)
    try:
        proc = subprocess.run(list(command), input=test.program.encode("utf-8"),
                              capture_output=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        return TestResult(test, "error", message=f"timed out after {timeout:g}s")
    except OSError as exc:
        return TestResult(test, "error", message=f"cannot start evaluator: {exc}")
    out = proc.stdout.decode("utf-8", "replace")
    err = proc.stderr.decode("utf-8", "replace")
    if proc.returncode != 0:
        return TestResult(test, "error", out, err, proc.returncode,
                          f"evaluator exited with status {proc.returncode}")
    status = "pass" if out.strip() == test.expected_stdout.strip() else "fail"
    return TestResult(test, status, out, err, 0)


def run_tests(tests: Sequence[TestCase], evaluator_command: Sequence[str],
              timeout: float = DEFAULT_TIMEOUT, jobs: int = 1) -> TestReport:
    """Run every test in its own evaluator process; results keep input order."""
    if not evaluator_available(evaluator_command):
        shown = " ".join(evaluator_command) or "(none)"
        msg = f"evaluator not found: {shown}"
        return TestReport([TestResult(t, "error", message=msg) for t in tests], msg)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda t: _run_one(t, evaluator_command, timeout), tests))
    for r in results:
        log.debug("%s: %s", r.test.id, r.status)
    return TestReport(results)
