import pytest

from conftest import PROJECT_FIXTURES, load_fixture, project_of

from ilp_forge.graph import CycleError
from ilp_forge.model import chunk_table
from ilp_forge.tangle import (DetangleError, TangleError, UnresolvedReferenceError, check_drift, detangle,
                              detangle_report, expand_chunk, strip_markers, tangle_project)


def table_of(text):
    return chunk_table(project_of(("t.md", text)))


def test_expand_without_references_is_identity():
    assert expand_chunk(table_of("```text chunk=a\nx\n  y\n```\n"), "a") == ["x", "  y"]


def test_indentation_propagates():
    text = "```text chunk=outer\n  <<inner>>\n```\n\n```text chunk=inner\na\nb\n```\n"
    assert expand_chunk(table_of(text), "outer") == ["  a", "  b"]


def test_continuations_concatenate():
    text = "```text chunk=sum-core\nx\n```\n\n```text chunk=sum-core\ny\n```\n"
    assert expand_chunk(table_of(text), "sum-core") == ["x", "y"]


def test_unresolved_reference():
    with pytest.raises(UnresolvedReferenceError):
        expand_chunk(table_of("```text chunk=a\n<<b>>\n```\n"), "a")


def test_cycle_path():
    text = "```text chunk=a\n<<b>>\n```\n\n```text chunk=b\n  <<c>>\n```\n\n```text chunk=c\n<<a>>\n```\n"
    with pytest.raises(CycleError) as info:
        expand_chunk(table_of(text), "a")
    assert info.value.cycle == ["a", "b", "c"]


def test_skeleton_nested_indentation():
    files = tangle_project(load_fixture("skeleton_filter"), write=False).files
    assert files == {"filter.scm": (
        "(define (filter lst fn)\n"
        "  (define inner-filter\n"
        "    (lambda (result lst)\n"
        "      (if (null? lst)\n"
        "          result\n"
        "          (inner-filter (if (fn (car lst)) (cons (car lst) result) result)\n"
        "                        (cdr lst))\n"
        "          )\n"
        "      ))\n"
        "  (reverse (inner-filter '() lst)))\n"
    )}


def test_multi_file_document_two_files():
    files = tangle_project(load_fixture("multi_file"), write=False).files
    assert sorted(files) == ["lp.py", "packages/lp_in_packages.py"]
    assert files["packages/lp_in_packages.py"] == (
        'def greeting(name):\n    return "hello, " + name\n'
        'def farewell(name):\n    return "goodbye, " + name\n'
    )


def test_only_doc_chunks_gives_no_files():
    project = project_of(("d.md", "```scheme doc\n(define-with-docs f)\n```\n"))
    assert tangle_project(project, write=False).files == {}


def test_doc_chunk_with_tangle_true_is_emitted():
    project = project_of(("d.md", "```scheme doc file=d.scm tangle=true\n(x)\n```\n"))
    assert tangle_project(project, write=False).files == {"d.scm": "(x)\n"}


def test_path_escape_refused(tmp_path):
    project = project_of(("d.md", "```scheme file=../x.scm\n(x)\n```\n"))
    with pytest.raises(TangleError):
        tangle_project(project, tmp_path)


def test_one_trailing_newline():
    project = project_of(("d.md", "```text file=a.txt\nx\n\n\n```\n"))
    assert tangle_project(project, write=False).files == {"a.txt": "x\n"}


@pytest.mark.parametrize("name", PROJECT_FIXTURES)
def test_markers_strip_to_plain_output(name):
    project = load_fixture(name)
    plain = tangle_project(project, write=False).files
    marked = tangle_project(project, markers=True, write=False).files
    assert {p: strip_markers(t) for p, t in marked.items()} == plain


@pytest.mark.parametrize("name", PROJECT_FIXTURES)
def test_provenance_covers_every_line(name):
    out = tangle_project(load_fixture(name), markers=True, write=False)
    for path, text in out.files.items():
        covered = sorted(span for (p, span) in out.provenance if p == path)
        lines = text.count("\n")
        expected_start = 1
        for first, last in covered:
            assert first == expected_start
            expected_start = last + 1
        assert expected_start - 1 == lines


def test_marker_format():
    text = tangle_project(load_fixture("pipeline"), markers=True, write=False).files["transform.scm"]
    lines = text.split("\n")
    assert lines[0].startswith(";; ILP:BEGIN stage-two pipeline.md:")
    assert lines[-2] == ";; ILP:END stage-two"


def test_write_idempotent(tmp_path):
    project = load_fixture("pipeline")
    first = tangle_project(project, tmp_path)
    assert sorted(first.written) == ["processing.scm", "transform.scm"]
    assert tangle_project(project, tmp_path).written == []


def test_drift_states(tmp_path):
    project = load_fixture("pipeline")
    tangle_project(project, tmp_path)
    assert [(r.path, r.status) for r in check_drift(project, tmp_path)] == [
        ("processing.scm", "in-sync"), ("transform.scm", "in-sync")]
    (tmp_path / "transform.scm").unlink()
    lines = (tmp_path / "processing.scm").read_text().count("\n")
    with open(tmp_path / "processing.scm", "a") as fh:
        fh.write("(extra)\n")
    (tmp_path / "notes.txt").write_text("stray\n")
    reports = {r.path: r for r in check_drift(project, tmp_path)}
    assert reports["transform.scm"].status == "missing"
    assert reports["processing.scm"].status == "modified"
    assert reports["processing.scm"].first_diff_line == lines + 1
    assert reports["notes.txt"].status == "extra"


def test_drift_accepts_marked_output(tmp_path):
    project = load_fixture("take_right")
    tangle_project(project, tmp_path, markers=True)
    assert {r.status for r in check_drift(project, tmp_path)} == {"in-sync"}


def test_detangle_no_edits_is_identity(tmp_path):
    project = load_fixture("skeleton_filter")
    tangle_project(project, tmp_path, markers=True)
    again = detangle(project, tmp_path)
    assert [d.raw_text for d in again] == [d.raw_text for d in project]


def test_detangle_edit_round_trip(tmp_path):
    project = load_fixture("take_right")
    tangle_project(project, tmp_path, markers=True)
    path = tmp_path / "lists" / "take-right.scm"
    text = path.read_text()
    assert "((<= i 0) '())" in text
    path.write_text(text.replace("((<= i 0) '())", "((<= i 0) (list))"))
    updated, changed = detangle_report(project, tmp_path)
    assert changed == ["take-right"]
    before, after = project.documents[0].raw_text, updated.documents[0].raw_text
    assert after == before.replace("((<= i 0) '())", "((<= i 0) (list))")
    assert tangle_project(updated, tmp_path, markers=True).written == []


def test_detangle_inserted_and_deleted_lines(tmp_path):
    project = load_fixture("multi_file")
    tangle_project(project, tmp_path, markers=True)
    path = tmp_path / "lp.py"
    text = path.read_text()
    path.write_text(text.replace("\nprint(", "\nimport sys\nprint(").replace("from packages", "#from packages"))
    updated = detangle(project, tmp_path)
    [main] = [c for c in updated.chunks if c.name == "lp-main"]
    assert main.body == ("#from packages.lp_in_packages import greeting", "", "import sys",
                         'print(greeting("literate programming"))')
    before = tangle_project(project, markers=True, write=False).files
    after = tangle_project(updated, markers=True, write=False).files
    assert after["lp.py"] == path.read_text()
    # later chunks moved down one line, so only their marker locations change
    other = "packages/lp_in_packages.py"
    assert strip_markers(after[other]) == strip_markers(before[other])
    assert after[other] != before[other]


def test_detangle_refuses_edit_inside_inclusion(tmp_path):
    project = load_fixture("skeleton_filter")
    tangle_project(project, tmp_path, markers=True)
    path = tmp_path / "filter.scm"
    path.write_text(path.read_text().replace("(cdr lst))", "(cddr lst))"))
    with pytest.raises(DetangleError, match="inclusion"):
        detangle(project, tmp_path)


def test_detangle_refuses_missing_end(tmp_path):
    project = load_fixture("pipeline")
    tangle_project(project, tmp_path, markers=True)
    path = tmp_path / "transform.scm"
    path.write_text("\n".join(ln for ln in path.read_text().split("\n") if "ILP:END" not in ln))
    with pytest.raises(DetangleError, match="unclosed"):
        detangle(project, tmp_path)


def test_detangle_refuses_unmarked_files(tmp_path):
    project = load_fixture("pipeline")
    tangle_project(project, tmp_path)
    with pytest.raises(DetangleError):
        detangle(project, tmp_path)
