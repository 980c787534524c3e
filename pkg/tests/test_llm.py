import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from conftest import FIXTURES, load_fixture

from ilp_forge.context import pack_context
from ilp_forge.llm import (ConfigurationError, EmptyResponseError, FixedResponseProvider, HttpProvider,
                           PlacementError, ReplayProvider, TransportError, default_file_target, extract_code,
                           generate_for_target, merge_generated, prompt_digest)
from ilp_forge.tangle import tangle_project
from ilp_forge.validate import validate

FENCED = "Here you go:\n\n```python\ndef take_right(flist, i):\n    return flist[-i:] if i > 0 else []\n```\nDone."


@pytest.fixture
def bundle():
    return pack_context(load_fixture("take_right"), None, "take-right", 4000)


def test_fenced_response(bundle):
    provider = FixedResponseProvider(FENCED)
    chunk = generate_for_target(provider, bundle)
    assert chunk.language == "python" and chunk.warnings == ()
    assert chunk.body == ("def take_right(flist, i):", "    return flist[-i:] if i > 0 else []")
    assert chunk.provenance.provider_id == "fixed"
    assert chunk.provenance.prompt_digest == prompt_digest(provider.prompts[0])


def test_unfenced_response_warns(bundle):
    chunk = generate_for_target(FixedResponseProvider("x = 1\n"), bundle)
    assert chunk.body == ("x = 1",) and len(chunk.warnings) == 1


@pytest.mark.parametrize("response", ["", "   \n", "```python\n\n```\n"])
def test_empty_response(bundle, response):
    with pytest.raises(EmptyResponseError):
        generate_for_target(FixedResponseProvider(response), bundle)


def test_replay_chatgpt(bundle):
    chunk = generate_for_target(ReplayProvider(FIXTURES / "replay" / "chatgpt4.txt"), bundle)
    assert "def drop(lst, n):" in chunk.body
    assert "def take_right(flist, i):" in chunk.body
    assert chunk.provenance.provider_id == "replay:chatgpt4.txt"


def test_replay_json_list(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps(["one", "two"]))
    provider = ReplayProvider(path)
    assert [provider.complete("p") for _ in range(3)] == ["one", "two", "two"]
    path.write_text(json.dumps({"not": "a list"}))
    with pytest.raises(ConfigurationError):
        ReplayProvider(path)


def test_digest_stable(bundle):
    a = generate_for_target(FixedResponseProvider(FENCED), bundle)
    b = generate_for_target(FixedResponseProvider(FENCED), bundle)
    assert a.provenance.prompt_digest == b.provenance.prompt_digest
    assert a.provenance.prompt_digest.startswith("sha256:")


def test_extract_code():
    assert extract_code("```scheme\n(x)\n```") == ("scheme", "(x)\n", True)
    assert extract_code("plain") == (None, "plain", False)


def test_default_file_target():
    assert default_file_target("take-right", "python") == "generated/take_right.py"
    assert default_file_target("take-right", "scheme") == "generated/take_right.scm"


class _Handler(BaseHTTPRequestHandler):
    status = 200
    seen: list = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        type(self).seen.append((self.headers.get("Authorization"), json.loads(body)))
        reply = json.dumps({"choices": [{"message": {"content": FENCED}}]}).encode()
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(reply)))
        self.end_headers()
        self.wfile.write(reply)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.seen = []
    _Handler.status = 200
    httpd = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/v1/chat/completions"
    httpd.shutdown()
    httpd.server_close()


def test_http_provider_wire_shape(server, bundle):
    provider = HttpProvider.from_env({"ILP_LLM_ENDPOINT": server, "ILP_LLM_API_KEY": "k3y", "ILP_LLM_MODEL": "m"})
    chunk = generate_for_target(provider, bundle)
    assert chunk.body[0] == "def take_right(flist, i):"
    auth, payload = _Handler.seen[0]
    assert auth == "Bearer k3y"
    assert payload["model"] == "m"
    assert payload["messages"][0]["role"] == "user"
    assert "take-right" in payload["messages"][0]["content"]


def test_http_provider_error_status(server):
    _Handler.status = 503
    with pytest.raises(TransportError) as info:
        HttpProvider(server, None, "m").complete("p")
    assert info.value.status == 503


def test_http_provider_unreachable():
    with pytest.raises(TransportError):
        HttpProvider("http://127.0.0.1:9/none", None, "m", timeout=2).complete("p")


def test_http_provider_needs_endpoint():
    with pytest.raises(ConfigurationError):
        HttpProvider.from_env({})


def test_merge_after_step_spec_section(bundle):
    project = load_fixture("take_right")
    chunk = generate_for_target(FixedResponseProvider(FENCED), bundle)
    anchor = project.step_specs[0].anchor
    merged, diagnostics = merge_generated(project, chunk, anchor)
    assert diagnostics == []
    assert validate(merged) == []
    [new] = [c for c in merged.chunks if c.name == "take-right-gen"]
    assert new.file_target == "generated/take_right.py" and new.body == chunk.body
    files = tangle_project(merged, write=False).files
    assert files["generated/take_right.py"] == "\n".join(chunk.body) + "\n"
    # every original byte survives, in order, around one insertion
    before, after = project.documents[0].raw_text, merged.documents[0].raw_text
    k = next(i for i, (x, y) in enumerate(zip(before, after)) if x != y)
    inserted = len(after) - len(before)
    assert after[:k] + after[k + inserted:] == before


def test_merge_into_file_target(bundle):
    project = load_fixture("take_right")
    chunk = generate_for_target(FixedResponseProvider("```scheme\n(define (extra) 1)\n```"), bundle, language="scheme")
    merged, _ = merge_generated(project, chunk, "lists/take-right.scm")
    text = tangle_project(merged, write=False).files["lists/take-right.scm"]
    assert text.rstrip("\n").endswith("(define (extra) 1)")


def test_merge_twice_suffixes(bundle):
    project = load_fixture("take_right")
    chunk = generate_for_target(FixedResponseProvider(FENCED), bundle)
    anchor = project.step_specs[0].anchor
    once, _ = merge_generated(project, chunk, anchor)
    twice, diagnostics = merge_generated(once, chunk, anchor)
    assert "take-right-gen-2" in {c.name for c in twice.chunks}
    assert [d.severity.value for d in diagnostics] == ["warning"]


def test_merge_missing_anchor(bundle):
    project = load_fixture("take_right")
    chunk = generate_for_target(FixedResponseProvider(FENCED), bundle)
    with pytest.raises(PlacementError):
        merge_generated(project, chunk, "no-such-anchor")
