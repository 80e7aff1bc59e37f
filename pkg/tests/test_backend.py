import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobsynth.backend import (
    BackendKind,
    GenerationParams,
    MockBackend,
    MockScript,
    PromptTemplate,
    RemoteBackend,
    extract_json_block,
    load_template,
    load_templates,
    make_backend,
    render,
)
from mobsynth.backend.templates import TEMPLATE_NAMES, placeholders_in
from mobsynth.errors import BackendUnavailable, ConfigError, ExtractionError, ProtocolError, TemplateError

from helpers import GOLDEN, lecturer

PARAMS = GenerationParams()


# --------------------------------------------------------------------------- templates


def test_default_temperature_is_one():
    assert GenerationParams().temperature == 1.0


def test_render_without_placeholders_is_identity():
    t = PromptTemplate("plain", "system text", "user text")
    assert render(t, {}) == ("system text", "user text")


@pytest.mark.parametrize("name", ["narrative", "parse_plan", "rethink", "mode_choice"])
@pytest.mark.parametrize("part", ["system", "user"])
def test_builtin_templates_match_golden_files(name, part):
    t = load_template(name)
    text = t.system_text if part == "system" else t.user_text
    golden = (GOLDEN / f"{name}.{part}.txt").read_bytes()
    assert text.encode("utf-8") == golden


def test_narrative_prompt_embeds_profile_and_examples():
    profile = lecturer()
    system, user = render(load_template("narrative"), {"character_profile": profile.describe()})
    assert profile.describe() in user
    assert "Example for a Programmer with a car" in user
    assert "first-person daily log" in system
    assert "- Owns a car: yes" in user


def test_mode_choice_prompt_binds_distance_and_options():
    bindings = {
        "character_profile": lecturer().describe(),
        "destination_poi_name": "Campus cafeteria",
        "destination_poi_type": "restaurant",
        "activity_type": "eating",
        "distance": "300",
        "formatted_time": "12:00",
        "available_options": "Walking, Cycling",
    }
    _, user = render(load_template("mode_choice"), bindings)
    assert "Approximately 300 meters" in user
    assert "one of them: Walking, Cycling" in user
    # escaped braces of the example answers survive as single braces
    assert '{\n    "reasoning"' in user


def test_render_missing_binding_names_placeholder():
    with pytest.raises(TemplateError) as exc:
        render(load_template("mode_choice"), {"distance": "1"})
    assert exc.value.placeholder in load_template("mode_choice").placeholders


def test_render_ignores_unknown_bindings_with_warning(caplog):
    t = PromptTemplate("t", "hi {name}", "")
    with caplog.at_level("WARNING"):
        assert render(t, {"name": "x", "stray": "y"})[0] == "hi x"
    assert "stray" in caplog.text


@given(st.dictionaries(st.sampled_from(["a", "b", "c"]), st.text(alphabet="xyz {}", max_size=8), min_size=3))
def test_render_leaves_no_placeholders(bindings):
    t = PromptTemplate("t", "{a} and {b}", "{c}{{literal}}")
    system, user = render(t, bindings)
    assert system == f"{bindings['a']} and {bindings['b']}"
    assert user.endswith("{literal}")


def test_all_builtin_placeholders_are_bindable():
    expected = {
        "narrative": {"character_profile"},
        "parse_plan": {"activity_categories", "narrative", "example_json"},
        "rethink": {"character_profile", "formatted_time", "memory_context", "activity_categories"},
        "mode_choice": {
            "character_profile",
            "destination_poi_name",
            "destination_poi_type",
            "activity_type",
            "distance",
            "formatted_time",
            "available_options",
        },
    }
    templates = load_templates()
    assert set(templates) == set(TEMPLATE_NAMES)
    for name, names in expected.items():
        assert templates[name].placeholders == names


def test_override_directory_replaces_single_file(tmp_path):
    (tmp_path / "narrative.user.txt").write_text("Profile:\n{character_profile}")
    t = load_template("narrative", tmp_path)
    assert t.user_text == "Profile:\n{character_profile}"
    assert t.system_text == load_template("narrative").system_text


def test_bad_placeholder_syntax_rejected():
    with pytest.raises(ConfigError):
        placeholders_in("{0}")


# --------------------------------------------------------------------------- mock


def test_mock_default_only():
    backend = MockBackend(MockScript(default="hello"))
    assert backend.complete("s", "anything", PARAMS) == "hello"


def test_mock_first_rule_wins_and_template_matching():
    script = MockScript.from_json(
        {
            "rules": [
                {"match": "Purpose of trip", "response": '{"choice": "Walking"}'},
                {"match": "trip", "response": "second"},
                {"template": "rethink", "response": '{"action": "follow"}'},
            ],
            "default": "fallback",
        }
    )
    backend = MockBackend(script)
    assert backend.complete("", "Purpose of trip (your intention): eating", PARAMS) == '{"choice": "Walking"}'
    assert backend.complete("", "a trip", PARAMS) == "second"
    assert backend.complete("", "x", PARAMS, template="rethink") == '{"action": "follow"}'
    assert backend.complete("", "x", PARAMS, template="narrative") == "fallback"


def test_mock_is_pure():
    backend = MockBackend(MockScript.from_json([{"match": "a", "response": "1"}, {"default": True, "response": "d"}]))
    outs = {backend.complete("s", "abc", PARAMS) for _ in range(20)}
    assert outs == {"1"}
    assert backend.complete("s", "zzz", PARAMS) == "d"


def test_mock_error_rule_raises_unavailable():
    backend = MockBackend(MockScript.from_json([{"match": "x", "error": "down"}]))
    with pytest.raises(BackendUnavailable):
        backend.complete("", "x", PARAMS)


def test_mock_script_file_loading(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps([{"match": "hi", "response": "there"}]))
    backend = make_backend(BackendKind("mock", script_path=str(path)))
    assert backend.complete("", "hi", PARAMS) == "there"
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        MockScript.load(tmp_path / "bad.json")


def test_backend_kind_validation():
    with pytest.raises(ConfigError):
        BackendKind("remote", endpoint_url="", model_name="m")
    with pytest.raises(ConfigError):
        BackendKind("carrier-pigeon")


# --------------------------------------------------------------------------- remote


def chat_body(text: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


class _StubHandler(BaseHTTPRequestHandler):
    requests: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        type(self).requests.append((self.path, dict(self.headers), json.loads(self.rfile.read(length))))
        body = json.dumps(chat_body("fixed reply")).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    _StubHandler.requests = []
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions", _StubHandler.requests
    server.shutdown()
    server.server_close()


def test_remote_against_stub_server(stub_server, monkeypatch):
    url, requests = stub_server
    monkeypatch.setenv("TEST_LLM_KEY", "secret")
    backend = RemoteBackend(url, "test-model", api_key_env="TEST_LLM_KEY")
    out = backend.complete("sys", "usr", GenerationParams(temperature=0.7))
    backend.close()
    assert out == "fixed reply"
    assert len(requests) == 1
    path, headers, payload = requests[0]
    assert path == "/v1/chat/completions"
    assert headers["Authorization"] == "Bearer secret"
    assert payload["model"] == "test-model"
    assert payload["temperature"] == 0.7
    assert payload["messages"] == [{"role": "system", "content": "sys"}, {"role": "user", "content": "usr"}]


def scripted_transport(responses):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        item = responses[min(len(calls) - 1, len(responses) - 1)]
        if isinstance(item, Exception):
            raise item
        return item

    return httpx.MockTransport(handler), calls


def test_remote_retries_5xx_with_exponential_backoff():
    transport, calls = scripted_transport(
        [httpx.Response(503), httpx.Response(502), httpx.Response(200, json=chat_body("ok"))]
    )
    sleeps = []
    backend = RemoteBackend("http://x/chat", "m", transport=transport, sleep=sleeps.append)
    assert backend.complete("s", "u", GenerationParams(max_retries=3)) == "ok"
    assert len(calls) == 3
    assert sleeps == [1.0, 2.0]


def test_remote_exhausted_retries_raise_unavailable():
    transport, calls = scripted_transport([httpx.ConnectError("refused")])
    sleeps = []
    backend = RemoteBackend("http://x/chat", "m", transport=transport, sleep=sleeps.append)
    with pytest.raises(BackendUnavailable):
        backend.complete("s", "u", GenerationParams(max_retries=4))
    assert len(calls) == 4
    assert sleeps == [1.0, 2.0, 4.0]


def test_remote_unparseable_payload_carries_raw_body():
    transport, _ = scripted_transport([httpx.Response(200, text="<html>oops</html>")])
    backend = RemoteBackend("http://x/chat", "m", transport=transport, sleep=lambda s: None)
    with pytest.raises(ProtocolError) as exc:
        backend.complete("s", "u", PARAMS)
    assert exc.value.raw_body == "<html>oops</html>"


def test_remote_4xx_is_not_retried():
    transport, calls = scripted_transport([httpx.Response(401, text="denied")])
    backend = RemoteBackend("http://x/chat", "m", transport=transport, sleep=lambda s: None)
    with pytest.raises(ProtocolError):
        backend.complete("s", "u", PARAMS)
    assert len(calls) == 1


def test_remote_in_flight_cap():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}
    gate = threading.Event()

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        gate.wait(0.05)
        with lock:
            state["now"] -= 1
        return httpx.Response(200, json=chat_body("x"))

    backend = RemoteBackend("http://x/chat", "m", max_in_flight=2, transport=httpx.MockTransport(handler))
    threads = [threading.Thread(target=backend.complete, args=("s", "u", PARAMS)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert 1 <= state["peak"] <= 2


# --------------------------------------------------------------------------- json extraction


def test_extract_identity():
    text = '{"a": 1, "b": [1, 2, {"c": "}"}]}'
    assert extract_json_block(text) == text


WRAPPINGS = [
    "```json\n{obj}\n```\nThat is all.",
    "```\n{obj}\n```",
    "Sure, here you go: {obj} -- done",
    "{obj}",
    "\n\n   {obj}\n",
    "Answer:\n```JSON\n{obj}\n```\nNotes follow {{ not json",
    "prefix } stray {obj}",
    "```python\nprint('hi')\n```\n{obj}",
    "text {unclosed and then {obj}",
    "```json\r\n{obj}\r\n```",
]


@pytest.mark.parametrize("wrapping", WRAPPINGS)
def test_extract_from_wrappings(wrapping):
    obj = '{"plan": [{"activity": "sleep", "start_time": "00:00", "description": "say \\"{hi}\\""}]}'
    out = extract_json_block(wrapping.replace("{obj}", obj).replace("{{", "{"))
    assert json.loads(out) == json.loads(obj)


@pytest.mark.parametrize("text", ["no braces here", "", "{ never closed", '"{" inside a string only'])
def test_extract_failure_has_excerpt(text):
    with pytest.raises(ExtractionError) as exc:
        extract_json_block(text)
    assert len(exc.value.excerpt) <= 120


json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=10),
    lambda children: st.lists(children, max_size=3) | st.dictionaries(st.text(max_size=5), children, max_size=3),
    max_leaves=10,
)


@given(st.dictionaries(st.text(max_size=6), json_values, max_size=4), st.text(alphabet="ab {}`\n", max_size=20))
def test_extract_is_idempotent(obj, noise):
    text = noise + json.dumps(obj)
    try:
        first = extract_json_block(text)
    except ExtractionError:
        return
    assert extract_json_block(first) == first


@given(st.dictionaries(st.text(max_size=6), json_values, max_size=4), st.text(alphabet="ab \n.", max_size=20))
def test_extract_recovers_object_after_brace_free_prose(obj, prose):
    assert json.loads(extract_json_block(prose + json.dumps(obj) + prose)) == obj
