import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajevo.mutation import (
    Feedback,
    Layer,
    LlmProvider,
    LlmSettings,
    MutationRequest,
    ProviderError,
    StubProvider,
    check_layer_constraint,
    make_provider,
)
from trajevo.solvers import (
    GuidanceConfig,
    ScheduleConfig,
    SolverConfig,
    TspMechanism,
    config_from_json,
    config_to_json,
    ils_config,
    seed_config,
    tsplib_specialist_config,
)

FEEDBACK = Feedback(terminal_log_residual=-2.0, decay_rate=0.5, runtime=1.0)


def request(layer, parent=None, seed=0):
    return MutationRequest(layer=layer, parent=parent or seed_config("tsp"), feedback=FEEDBACK, seed=seed)


# ---------------------------------------------------------------------------
# stub provider
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("layer", list(Layer))
@pytest.mark.parametrize("task", ["tsp", "cvrp", "bpp"])
def test_stub_layer_constraints_across_seeds(layer, task):
    parent = seed_config(task)
    parent_obj = config_to_json(parent)
    for seed in range(40):
        resp = StubProvider().propose(MutationRequest(layer, parent, FEEDBACK, seed))
        cand_obj = config_to_json(resp.candidate)
        if layer.edits_mechanism:
            assert cand_obj["schedule"] == parent_obj["schedule"]
        else:
            assert cand_obj["mechanism"] == parent_obj["mechanism"]
        resp.candidate.validate()


def test_stub_compress_time_limit_factors():
    parent = tsplib_specialist_config()  # time_limit 4.0
    seen = set()
    for seed in range(30):
        resp = StubProvider().propose(request(Layer.COMPRESS, parent, seed))
        assert resp.candidate.schedule.time_limit_s in (pytest.approx(3.2), pytest.approx(3.6))
        seen.add(round(resp.candidate.schedule.time_limit_s, 2))
        obj = config_to_json(resp.candidate)
        assert obj["mechanism"] == config_to_json(parent)["mechanism"]
    assert seen == {3.2, 3.6}


def test_stub_consolidate_idempotent():
    parent = seed_config("tsp")
    resp = StubProvider().propose(request(Layer.CONSOLIDATE, parent, 7))
    assert resp.candidate == parent  # already canonical
    messy = SolverConfig(
        "gls",
        TspMechanism(knn_k=100, guidance=GuidanceConfig(True, 20, 0.3, 0.2, 0.0)),
        parent.schedule,
    )
    once = StubProvider().propose(request(Layer.CONSOLIDATE, messy, 7)).candidate
    twice = StubProvider().propose(request(Layer.CONSOLIDATE, once, 8)).candidate
    assert once == twice
    assert once.mechanism.knn_k == 64
    assert not once.mechanism.guidance.enabled  # weight 0.2 rounds to 0


def test_stub_determinism():
    a = StubProvider().propose(request(Layer.DISCOVER, seed=123))
    b = StubProvider().propose(request(Layer.DISCOVER, seed=123))
    assert a.candidate == b.candidate
    c = StubProvider().propose(request(Layer.DISCOVER, seed=124))
    assert a.candidate != c.candidate or a.candidate == c.candidate  # defined either way


@given(st.integers(0, 10_000))
@settings(max_examples=80)
def test_stub_enhance_never_raises_time_limit(seed):
    parent = ils_config(time_limit_s=2.5)
    resp = StubProvider().propose(request(Layer.ENHANCE, parent, seed))
    assert resp.candidate.schedule.time_limit_s <= parent.schedule.time_limit_s


def test_check_layer_constraint_rejects_violations():
    parent = seed_config("tsp")
    tampered_sched = SolverConfig(
        parent.backbone, parent.mechanism,
        ScheduleConfig(time_limit_s=parent.schedule.time_limit_s * 2),
    )
    with pytest.raises(ValueError):
        check_layer_constraint(Layer.DISCOVER, parent, tampered_sched)
    tampered_mech = SolverConfig(
        parent.backbone, TspMechanism(knn_k=32), parent.schedule
    )
    with pytest.raises(ValueError):
        check_layer_constraint(Layer.COMPRESS, parent, tampered_mech)
    raised_cap = SolverConfig(
        parent.backbone, parent.mechanism,
        ScheduleConfig(time_limit_s=parent.schedule.time_limit_s + 1),
    )
    with pytest.raises(ValueError):
        check_layer_constraint(Layer.ENHANCE, parent, raised_cap)


# ---------------------------------------------------------------------------
# LLM provider over a real local HTTP server
# ---------------------------------------------------------------------------


class _Endpoint(BaseHTTPRequestHandler):
    behavior = "valid"
    requests_seen = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).requests_seen.append(body)
        if type(self).behavior == "valid":
            parent = json.loads(body["messages"][1]["content"])["parent_config"]
            parent["schedule"]["time_limit_s"] *= 0.9
            reply = {"choices": [{"message": {"content": json.dumps(parent)}}]}
            payload = json.dumps(reply).encode()
            self.send_response(200)
        elif type(self).behavior == "garbage":
            payload = json.dumps({"choices": [{"message": {"content": "not json {"}}]}).encode()
            self.send_response(200)
        else:
            payload = b"{}"
            self.send_response(500)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def endpoint(monkeypatch):
    monkeypatch.setenv("TRAJEVO_API_KEY", "test-key")
    server = HTTPServer(("127.0.0.1", 0), _Endpoint)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Endpoint.requests_seen = []
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_llm_provider_valid_reply(endpoint, tmp_path):
    _Endpoint.behavior = "valid"
    audit = tmp_path / "audit.jsonl"
    provider = LlmProvider(LlmSettings(base_url=endpoint, model="m", audit_path=str(audit)))
    parent = seed_config("tsp")
    resp = provider.propose(MutationRequest(Layer.COMPRESS, parent, FEEDBACK, 0))
    assert resp.candidate.schedule.time_limit_s == pytest.approx(9.0)
    assert resp.provenance.startswith("llm:")
    sent = _Endpoint.requests_seen[0]
    assert sent["model"] == "m"
    assert sent["temperature"] == 0.7
    assert "parent_config" in sent["messages"][1]["content"]
    lines = [json.loads(l) for l in audit.read_text().splitlines()]
    assert lines and lines[0]["status"] == 200


def test_llm_provider_invalid_reply_falls_back_to_stub(endpoint):
    _Endpoint.behavior = "garbage"
    provider = LlmProvider(LlmSettings(base_url=endpoint, model="m", max_retries=2))
    parent = seed_config("tsp")
    resp = provider.propose(MutationRequest(Layer.COMPRESS, parent, FEEDBACK, 3))
    assert resp.provenance.startswith("stub-fallback")
    check_layer_constraint(Layer.COMPRESS, parent, resp.candidate)
    assert len(_Endpoint.requests_seen) == 2  # retried, then fell back


def test_llm_provider_unreachable_raises(monkeypatch):
    monkeypatch.setenv("TRAJEVO_API_KEY", "k")
    provider = LlmProvider(LlmSettings(base_url="http://127.0.0.1:1", model="m", timeout_s=0.5))
    with pytest.raises(ProviderError):
        provider.propose(request(Layer.DISCOVER))


def test_llm_provider_missing_key(monkeypatch):
    monkeypatch.delenv("TRAJEVO_API_KEY", raising=False)
    provider = LlmProvider(LlmSettings(base_url="http://127.0.0.1:1", model="m"))
    with pytest.raises(ProviderError):
        provider.propose(request(Layer.DISCOVER))


def test_make_provider():
    assert make_provider("stub").name == "stub"
    with pytest.raises(ValueError):
        make_provider("llm")
    with pytest.raises(ValueError):
        make_provider("quantum")
