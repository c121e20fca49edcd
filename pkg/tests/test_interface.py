from __future__ import annotations

import json
import threading

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from chatpipe.cli import main
from chatpipe.server import create_app
from chatpipe.sessions import SessionStore


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def client(engine):
    return TestClient(create_app(engine))


# -- cli: index ---------------------------------------------------------------

def test_cli_index_rerun_byte_identical(runner, fixtures_dir, tmp_path):
    out = tmp_path / "corpus.idx"
    args = ["index", "--corpus", str(fixtures_dir / "corpus.jsonl"), "--out", str(out)]
    assert runner.invoke(main, args).exit_code == 0
    first = out.read_bytes()
    assert runner.invoke(main, args).exit_code == 0
    assert out.read_bytes() == first


def test_cli_index_missing_file_message(runner, tmp_path):
    result = runner.invoke(
        main, ["index", "--corpus", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")]
    )
    assert result.exit_code != 0
    assert "nope.jsonl" in result.output


def test_cli_index_duplicate_id_named(runner, tmp_path):
    corpus = tmp_path / "dup.jsonl"
    corpus.write_text(
        '{"id": "twin", "url": "", "text": "a b"}\n{"id": "twin", "url": "", "text": "c d"}\n',
        encoding="utf-8",
    )
    result = runner.invoke(main, ["index", "--corpus", str(corpus), "--out", str(tmp_path / "o")])
    assert result.exit_code != 0
    assert "twin" in result.output


# -- cli: chat ----------------------------------------------------------------

def test_cli_chat_scripted_stdin(runner, config_path, script):
    result = runner.invoke(main, ["chat", "--config", str(config_path)], input="\n".join(script) + "\n")
    assert result.exit_code == 0
    responses = [l for l in result.output.splitlines() if l.startswith("bot> ")]
    assert len(responses) == len(script)


def test_cli_chat_reset_restarts_numbering(runner, config_path):
    result = runner.invoke(
        main,
        ["chat", "--config", str(config_path)],
        input="Who sang Skyfall?\n/trace\n/reset\nWho sang Skyfall?\n",
    )
    assert result.exit_code == 0
    assert "session reset" in result.output
    traced = [l for l in result.output.splitlines() if "turn=" in l]
    assert traced and "turn=1" in traced[-1]


def test_cli_chat_trace_toggle(runner, config_path):
    result = runner.invoke(
        main, ["chat", "--config", str(config_path)], input="/trace\nWho sang Skyfall?\n"
    )
    assert result.exit_code == 0
    assert "route=factual" in result.output and "score=" in result.output


# -- cli: train-router / validate-data ----------------------------------------

def test_cli_train_router(runner, fixtures_dir, tmp_path):
    out = tmp_path / "model.bin"
    result = runner.invoke(
        main,
        ["train-router", "--data", str(fixtures_dir / "router_train.jsonl"),
         "--out", str(out), "--epochs", "30", "--lr", "1.0", "--seed", "0"],
    )
    assert result.exit_code == 0, result.output
    assert out.exists()
    assert "training F1" in result.output


def test_cli_train_router_from_dialogs(runner, fixtures_dir, tmp_path):
    out = tmp_path / "model.bin"
    result = runner.invoke(
        main,
        ["train-router", "--data", str(fixtures_dir / "dialogs.jsonl"),
         "--out", str(out), "--from-dialog-dataset"],
    )
    assert result.exit_code == 0, result.output


def test_cli_validate_data_pass_and_fail(runner, fixtures_dir):
    ok = runner.invoke(
        main,
        ["validate-data", str(fixtures_dir / "dialogs.jsonl"), "--profile", "internal-media"],
    )
    assert ok.exit_code == 0 and "valid" in ok.output
    bad = runner.invoke(
        main,
        ["validate-data", str(fixtures_dir / "dialogs_nine_turns.jsonl"), "--profile", "internal-media"],
    )
    assert bad.exit_code == 1
    assert "turn-count" in bad.output


# -- cli: eval ----------------------------------------------------------------

def test_cli_eval_report_matches_direct_metrics(runner, config_path, fixtures_dir, tmp_path, golden_workdir):
    outdir = tmp_path / "report"
    result = runner.invoke(
        main,
        ["eval", "--config", str(config_path), "--dataset", str(fixtures_dir / "dialogs.jsonl"),
         "--out", str(outdir), "--logprob-source", "uniform"],
    )
    assert result.exit_code == 0, result.output
    payload = json.loads((outdir / "report.json").read_text())
    got = payload["metrics"]

    # independent recomputation: run the same engine directly over the dataset
    from make_goldens import build_golden_engine
    from chatpipe import metrics as m
    from chatpipe.data import load_dialog_dataset

    engine = build_golden_engine(golden_workdir)
    records = load_dialog_dataset(fixtures_dir / "dialogs.jsonl")
    url_of = {p.id: p.url for p in engine.index.passages}
    rouges, f1s, ems, judgments = [], [], [], []
    groups: dict[str, list] = {}
    for rec in records:
        groups.setdefault(rec.conversation_id, []).append(rec)
    for conv, turns in groups.items():
        for rec in sorted(turns, key=lambda r: r.turn_no):
            res = engine.chat(f"check-{conv}", rec.question)
            rouges.append(m.rouge(res.trace.rewritten_text, rec.rewrite))
            if rec.answer and res.trace.span is not None:
                f1s.append(m.token_f1(res.trace.span["text"], rec.answer))
                ems.append(m.exact_match(res.trace.span["text"], rec.answer))
            if rec.answer_url and res.trace.retrieval:
                ranked = tuple(dict.fromkeys(url_of[p] for p, _ in res.trace.retrieval))
                judgments.append(m.RankJudgment(ranked=ranked, relevant=frozenset({rec.answer_url})))
    assert got["rouge1"] == pytest.approx(sum(r[0] for r in rouges) / len(rouges), abs=1e-9)
    assert got["rougeL"] == pytest.approx(sum(r[1] for r in rouges) / len(rouges), abs=1e-9)
    assert got["token_f1"] == pytest.approx(sum(f1s) / len(f1s), abs=1e-9)
    assert got["exact_match"] == pytest.approx(sum(ems) / len(ems), abs=1e-9)
    assert got["recall@10"] == pytest.approx(m.recall_at_k(judgments, 10), abs=1e-9)
    assert got["mrr"] == pytest.approx(m.mrr(judgments), abs=1e-9)
    assert "perplexity" in got
    assert (outdir / "report.tsv").exists()
    assert (outdir / "metrics.png").exists()


def test_cli_eval_ppl_warning_without_backend(runner, config_path, fixtures_dir, tmp_path):
    outdir = tmp_path / "report"
    result = runner.invoke(
        main,
        ["eval", "--config", str(config_path), "--dataset", str(fixtures_dir / "dialogs.jsonl"),
         "--out", str(outdir)],
    )
    assert result.exit_code == 0, result.output
    payload = json.loads((outdir / "report.json").read_text())
    assert "perplexity" in payload["skipped"]
    assert "perplexity" not in payload["metrics"]


def test_cli_eval_empty_dataset_fails(runner, config_path, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    outdir = tmp_path / "r"
    result = runner.invoke(
        main, ["eval", "--config", str(config_path), "--dataset", str(empty), "--out", str(outdir)]
    )
    assert result.exit_code != 0


# -- http service ---------------------------------------------------------------

def test_http_chat_creates_session(client):
    resp = client.post("/v1/chat", json={"session_id": "fresh", "utterance": "hi there"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["turn_no"] == 1
    assert body["response"]
    assert body["route"] in ("factual", "subjective")
    assert "trace" in body


def test_http_session_history(client):
    client.post("/v1/chat", json={"session_id": "h", "utterance": "Who sang Skyfall?"})
    client.post("/v1/chat", json={"session_id": "h", "utterance": "Do you like it?"})
    resp = client.get("/v1/session/h")
    assert resp.status_code == 200
    turns = resp.json()["turns"]
    assert len(turns) == 2
    assert turns[0]["turn_no"] == 1 and turns[1]["turn_no"] == 2
    assert turns[1]["trace"]["rewritten_text"].count("Skyfall") == 1


def test_http_unknown_session_404(client):
    assert client.get("/v1/session/ghost").status_code == 404


def test_http_delete_session(client):
    client.post("/v1/chat", json={"session_id": "gone", "utterance": "hi"})
    assert client.delete("/v1/session/gone").status_code == 200
    assert client.get("/v1/session/gone").status_code == 404


def test_http_malformed_body_400(client):
    resp = client.post("/v1/chat", json={"session_id": "x"})
    assert resp.status_code == 400
    assert "error" in resp.json()
    resp = client.post("/v1/chat", json={"session_id": "x", "utterance": ""})
    assert resp.status_code == 400


def test_http_health(client):
    resp = client.get("/v1/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["index_passages"] == 12


def test_http_equals_cli_for_scripted_session(runner, client, config_path, script):
    cli_result = runner.invoke(main, ["chat", "--config", str(config_path)], input="\n".join(script) + "\n")
    cli_responses = [l[len("bot> "):] for l in cli_result.output.splitlines() if l.startswith("bot> ")]
    http_responses = []
    for line in script:
        resp = client.post("/v1/chat", json={"session_id": "parity", "utterance": line})
        http_responses.append(resp.json()["response"])
    assert http_responses == cli_responses


def test_http_parallel_sessions_stay_disjoint(client, script):
    errors = []

    def worker(idx: int):
        sid = f"par-{idx}"
        try:
            for turn_no, line in enumerate(script[:4], 1):
                body = client.post("/v1/chat", json={"session_id": sid, "utterance": line}).json()
                assert body["turn_no"] == turn_no
            hist = client.get(f"/v1/session/{sid}").json()["turns"]
            assert [t["user"] for t in hist] == script[:4]
        except AssertionError as exc:  # pragma: no cover
            errors.append((idx, exc))

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors


def test_http_backpressure_429(engine):
    import dataclasses

    engine.config = dataclasses.replace(engine.config, max_concurrent_turns=1)
    app = create_app(engine)
    client = TestClient(app)
    gate_open = threading.Event()
    entered = threading.Event()
    original = engine.chat

    def slow_chat(session_id, text):
        entered.set()
        gate_open.wait(timeout=5)
        return original(session_id, text)

    engine.chat = slow_chat
    codes = {}

    def first():
        codes["first"] = client.post(
            "/v1/chat", json={"session_id": "slow", "utterance": "hello"}
        ).status_code

    t = threading.Thread(target=first)
    t.start()
    assert entered.wait(timeout=5)
    codes["second"] = client.post(
        "/v1/chat", json={"session_id": "other", "utterance": "hello"}
    ).status_code
    gate_open.set()
    t.join()
    assert codes["second"] == 429
    assert codes["first"] == 200


# -- session store ---------------------------------------------------------------

def test_session_ttl_eviction():
    now = [0.0]
    store = SessionStore(ttl_seconds=10, clock=lambda: now[0])
    store.run_turn("old", lambda s: (s, "r1"))
    now[0] = 5.0
    assert store.get("old") is not None
    now[0] = 16.0
    assert store.get("old") is None
    assert store.count() == 0


def test_session_turn_serialization():
    store = SessionStore()
    order = []

    def slow(tag):
        def fn(state):
            order.append(f"start-{tag}")
            import time as _t

            _t.sleep(0.05)
            order.append(f"end-{tag}")
            return state, tag

        return fn

    t1 = threading.Thread(target=lambda: store.run_turn("same", slow("a")))
    t2 = threading.Thread(target=lambda: store.run_turn("same", slow("b")))
    t1.start()
    t2.start()
    t1.join()
    t2.join()
    # under the per-session lock the two turns never interleave
    assert order in (
        ["start-a", "end-a", "start-b", "end-b"],
        ["start-b", "end-b", "start-a", "end-a"],
    )
