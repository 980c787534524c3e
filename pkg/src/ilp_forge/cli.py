"""``ilp-forge`` command line.

Exit status: 0 success, 1 validation or test failure, 2 usage error,
3 environment error (missing evaluator or endpoint).
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from . import __version__
from .context import TemplateError, UnknownTargetError, pack_context, render_prompt
from .doctests import extract_tests, run_tests
from .graph import ALL_KINDS, CycleError, EdgeKind, build_graph, to_dot
from .llm import (ConfigurationError, PlacementError, ProviderError, generate_for_target,
                  merge_generated, provider_from)
from .model import Diagnostic, Project, Severity
from .obfuscate import RenameError, RenameMapping, apply_renames, obfuscate
from .parser import ParseError
from .project import ConfigError, ProjectConfig, load_config, load_project, save_documents
from .tangle import DetangleError, TangleError, check_drift, detangle_report, tangle_project
from .validate import has_errors, validate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ENV = 0, 1, 2, 3

log = logging.getLogger("ilp_forge")


class Output:
    """Routes diagnostics and results to text or JSON lines."""

    def __init__(self, as_json: bool, stdout=None, stderr=None):
        self.as_json = as_json
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr

    def diagnostic(self, d: Diagnostic) -> None:
        if self.as_json:
            self._json(d.as_json())
        else:
            print(d.format(), file=self.stderr)

    def error(self, message: str, path: str = "ilp-forge", line: int = 0) -> None:
        self.diagnostic(Diagnostic(path, line, Severity.ERROR, message))

    def result(self, text: str, **fields) -> None:
        if self.as_json:
            self._json({"type": "result", **fields})
        else:
            print(text, file=self.stdout)

    def _json(self, obj: dict) -> None:
        print(json.dumps(obj, sort_keys=True), file=self.stdout)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ilp-forge", description="Interoperable literate programming toolchain.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-C", "--project", default=".", help="project root (default: current directory)")
    p.add_argument("--config", help="config file (default: ilp.json in the project root)")
    p.add_argument("--json", action="store_true", help="emit one JSON object per diagnostic or result line")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("tangle", help="write code files from chunks")
    s.add_argument("--out", help="output root (default: out_root from config)")
    s.add_argument("--markers", action="store_true", help="wrap chunks in ILP:BEGIN/END comments")

    s = sub.add_parser("weave", help="render documentation with an index")
    s.add_argument("--format", choices=("md", "html"), default="md")
    s.add_argument("--out", help="output file (default: standard output)")

    s = sub.add_parser("check", help="validate documents and report drift")
    s.add_argument("--drift", action="store_true", help="also compare tangled files on disk")

    s = sub.add_parser("doctest", help="run #:examples under an external evaluator")
    s.add_argument("targets", nargs="*", metavar="TARGET")
    s.add_argument("--evaluator", help="evaluator command line (program on stdin)")
    s.add_argument("--jobs", type=int, help="parallel evaluator processes")
    s.add_argument("--timeout", type=float, help="seconds per test")

    s = sub.add_parser("context", help="print the prompt for a target")
    s.add_argument("target")
    s.add_argument("--budget", type=int, default=4000)
    s.add_argument("--template", default="stepwise")
    s.add_argument("--language")

    s = sub.add_parser("obfuscate", help="rename identifiers consistently")
    s.add_argument("--names", help="file with one name per line, or name<TAB>replacement")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--map-out", help="write the mapping here (default: standard output)")
    s.add_argument("--out", help="write renamed documents under this directory instead of in place")
    s.add_argument("--inverse", metavar="MAP", help="undo a mapping file written by --map-out")

    s = sub.add_parser("graph", help="print the dependency graph")
    s.add_argument("--dot", action="store_true", help="Graphviz DOT output")
    s.add_argument("--kinds", default="inclusion,declared,textual", help="comma-separated edge kinds")

    s = sub.add_parser("generate", help="ask a model for code and merge it into the document")
    s.add_argument("target")
    s.add_argument("--place", help="heading anchor or file target (default: the target's step spec)")
    s.add_argument("--language")
    s.add_argument("--template", default="fully-based")
    s.add_argument("--budget", type=int, default=4000)
    s.add_argument("--replay", help="answer from this file instead of the network")

    s = sub.add_parser("detangle", help="copy edits in marked tangled files back into documents")
    s.add_argument("--root", help="tangled tree (default: out_root from config)")
    return p


def _load(args, out: Output) -> tuple[ProjectConfig, Project]:
    cfg = load_config(args.project, args.config)
    return cfg, load_project(cfg)


def _report(out: Output, diags: list[Diagnostic]) -> bool:
    for d in diags:
        out.diagnostic(d)
    return has_errors(diags)


def cmd_check(args, out: Output) -> int:
    cfg, project = _load(args, out)
    failed = _report(out, validate(project))
    if args.drift and not failed:
        for r in check_drift(project, cfg.out_path):
            if r.status != "in-sync":
                where = f" at line {r.first_diff_line}" if r.first_diff_line else ""
                out.diagnostic(Diagnostic(r.path, r.first_diff_line or 0, Severity.ERROR, f"{r.status}{where}"))
                failed = True
    return EXIT_FAIL if failed else EXIT_OK


def cmd_tangle(args, out: Output) -> int:
    cfg, project = _load(args, out)
    if _report(out, validate(project)):
        return EXIT_FAIL
    root = Path(args.out) if args.out else cfg.out_path
    result = tangle_project(project, root, markers=args.markers)
    _report(out, result.warnings)
    for rel in result.written:
        out.result(f"wrote {rel}", action="wrote", path=rel)
    return EXIT_OK


def cmd_weave(args, out: Output) -> int:
    from .weave import weave

    _, project = _load(args, out)
    if _report(out, validate(project)):
        return EXIT_FAIL
    woven = weave(project, args.format)
    if args.out:
        Path(args.out).write_bytes(woven.body.encode("utf-8"))
        out.result(f"wrote {args.out}", action="wrote", path=args.out)
    elif out.as_json:
        out.result("", body=woven.body)
    else:
        out.stdout.write(woven.body)
    return EXIT_OK


def cmd_doctest(args, out: Output) -> int:
    cfg, project = _load(args, out)
    if _report(out, validate(project)):
        return EXIT_FAIL
    command = shlex.split(args.evaluator) if args.evaluator else cfg.evaluator
    tests, diags = extract_tests(project, args.targets or None)
    _report(out, diags)
    if not command:
        out.error("no evaluator configured; pass --evaluator or set evaluator in ilp.json")
        return EXIT_ENV
    report = run_tests(tests, command, args.timeout or cfg.timeout, args.jobs or cfg.jobs)
    if report.environment_error:
        out.error(report.environment_error)
        return EXIT_ENV
    for r in report.results:
        detail = f" ({r.message})" if r.message else ""
        out.result(f"{r.status.upper()} {r.test.id}{detail}", test=r.test.id, status=r.status,
                   stdout=r.stdout, message=r.message)
    out.result(f"{report.passed} passed, {report.failed} failed, {report.errors} errors, "
               f"{report.skipped} skipped", summary=True, passed=report.passed, failed=report.failed,
               errors=report.errors, skipped=report.skipped)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_context(args, out: Output) -> int:
    cfg, project = _load(args, out)
    if _report(out, validate(project)):
        return EXIT_FAIL
    bundle = pack_context(project, build_graph(project), args.target, args.budget)
    prompt = render_prompt(bundle, args.template, args.language or cfg.default_language, cfg.templates_path)
    if out.as_json:
        out.result("", target=bundle.target, prompt=prompt,
                   segments=[{"role": s.role, "name": s.name, "cost": s.cost} for s in bundle.segments])
    else:
        out.stdout.write(prompt)
    return EXIT_OK


def _read_names(path: str) -> tuple[list[str], dict[str, str]]:
    names, explicit = [], {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        name, _, replacement = line.partition("\t")
        names.append(name.strip())
        if replacement.strip():
            explicit[name.strip()] = replacement.strip()
    return names, explicit


def cmd_obfuscate(args, out: Output) -> int:
    cfg, project = _load(args, out)
    if args.inverse:
        mapping = RenameMapping.from_text(Path(args.inverse).read_text(encoding="utf-8")).inverse()
        renamed = apply_renames(project, mapping)
    else:
        if not args.names:
            out.error("obfuscate needs --names FILE or --inverse MAP")
            return EXIT_USAGE
        names, explicit = _read_names(args.names)
        if explicit:
            if len(explicit) != len(names):
                out.error("either give a replacement for every name or for none")
                return EXIT_USAGE
            mapping = RenameMapping(tuple(explicit.items()), args.seed)
            renamed = apply_renames(project, mapping)
        else:
            renamed, mapping = obfuscate(project, names, args.seed)
        text = mapping.to_text()
        if args.map_out:
            Path(args.map_out).write_text(text, encoding="utf-8")
        else:
            out.result(text.rstrip("\n"), mapping=[list(p) for p in mapping.pairs], seed=mapping.seed)
    target_root = Path(args.out) if args.out else cfg.root
    written = save_documents(renamed, None if args.out else project, target_root)
    for rel in written:
        log.info("wrote %s", rel)
    return EXIT_OK


def cmd_graph(args, out: Output) -> int:
    _, project = _load(args, out)
    if _report(out, validate(project)):
        return EXIT_FAIL
    try:
        kinds = {EdgeKind(k.strip()) for k in args.kinds.split(",") if k.strip()}
    except ValueError:
        out.error(f"unknown edge kind in {args.kinds}")
        return EXIT_USAGE
    graph = build_graph(project)
    if args.dot:
        out.stdout.write(to_dot(graph, kinds or ALL_KINDS))
        return EXIT_OK
    for e in graph.edges_of(kinds or ALL_KINDS):
        out.result(f"{e.source} -> {e.target} [{e.kind.value}] {e.span.document_path}:{e.span.line_start}",
                   source=e.source, target=e.target, kind=e.kind.value,
                   path=e.span.document_path, line=e.span.line_start)
    return EXIT_OK


def cmd_generate(args, out: Output) -> int:
    cfg, project = _load(args, out)
    if _report(out, validate(project)):
        return EXIT_FAIL
    language = args.language or cfg.default_language
    place = args.place
    if place is None:
        spec = next((s for s in project.step_specs if s.api_name == args.target), None)
        if spec is None:
            out.error(f"{args.target} has no step spec; pass --place")
            return EXIT_USAGE
        place = spec.anchor
    try:
        provider = provider_from(replay=args.replay)
    except ConfigurationError as exc:
        out.error(str(exc))
        return EXIT_ENV
    bundle = pack_context(project, build_graph(project), args.target, args.budget)
    generated = generate_for_target(provider, bundle, args.template, language, cfg.templates_path)
    for w in generated.warnings:
        out.diagnostic(Diagnostic(args.replay or provider.provider_id, 0, Severity.WARNING, w))
    updated, diags = merge_generated(project, generated, place)
    _report(out, diags)
    if _report(out, validate(updated)):
        return EXIT_FAIL
    save_documents(updated, project, cfg.root)
    new = next(c for c in updated.chunks if c not in project.chunks and c.name and c.name.startswith(args.target))
    p = generated.provenance
    out.result(f"merged {new.name} into {new.span.document_path}:{new.span.line_start} "
               f"({p.provider_id}, {p.prompt_digest})", chunk=new.name, path=new.span.document_path,
               line=new.span.line_start, provider=p.provider_id, timestamp=p.timestamp, digest=p.prompt_digest)
    return EXIT_OK


def cmd_detangle(args, out: Output) -> int:
    cfg, project = _load(args, out)
    if _report(out, validate(project)):
        return EXIT_FAIL
    root = Path(args.root) if args.root else cfg.out_path
    updated, changed = detangle_report(project, root)
    save_documents(updated, project, cfg.root)
    for cid in changed:
        out.result(f"updated {cid}", action="updated", chunk=cid)
    return EXIT_OK


COMMANDS = {
    "tangle": cmd_tangle, "weave": cmd_weave, "check": cmd_check, "doctest": cmd_doctest,
    "context": cmd_context, "obfuscate": cmd_obfuscate, "graph": cmd_graph,
    "generate": cmd_generate, "detangle": cmd_detangle,
}


def main(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=stderr or sys.stderr)
    out = Output(args.json, stdout, stderr)
    try:
        return COMMANDS[args.command](args, out)
    except ParseError as exc:
        out.diagnostic(Diagnostic(exc.path, exc.line, Severity.ERROR, exc.message))
        return EXIT_FAIL
    except (ConfigError, TemplateError, RenameError, PlacementError) as exc:
        out.error(str(exc))
        return EXIT_USAGE
    except UnknownTargetError as exc:
        out.error(str(exc))
        return EXIT_USAGE
    except (CycleError, TangleError, DetangleError) as exc:
        out.error(str(exc))
        return EXIT_FAIL
    except ProviderError as exc:
        out.error(str(exc))
        return EXIT_ENV
    except OSError as exc:
        out.error(str(exc))
        return EXIT_ENV


def run(argv: list[str] | None = None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
