from __future__ import annotations

import httpx
import pytest

from chatpipe.backends import BackendError, HttpLmBackend, HttpStageBackend
from chatpipe.config import ConfigError, load_config


def _stage_backend(handler) -> HttpStageBackend:
    backend = HttpStageBackend(url="http://backend/rewrite")
    backend._client = httpx.Client(transport=httpx.MockTransport(handler))
    return backend


def test_stage_backend_round_trip():
    def handler(request: httpx.Request) -> httpx.Response:
        import json

        body = json.loads(request.content)
        assert body["query"] == "hello"
        assert body["context"] == [["u1", "r1"]]
        return httpx.Response(200, json={"candidates": [{"text": "hi back", "score": 0.9}]})

    backend = _stage_backend(handler)
    assert backend.call([("u1", "r1")], "hello") == [("hi back", 0.9)]


def test_stage_backend_http_error():
    backend = _stage_backend(lambda req: httpx.Response(500))
    with pytest.raises(BackendError):
        backend.call([], "q")


def test_stage_backend_empty_text_rejected():
    backend = _stage_backend(
        lambda req: httpx.Response(200, json={"candidates": [{"text": "  ", "score": 0}]})
    )
    with pytest.raises(BackendError):
        backend.call([], "q")


def test_lm_backend_round_trip():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(
            200, json={"vocabulary": ["a", "b", "</s>"], "probabilities": [0.5, 0.3, 0.2]}
        )

    backend = HttpLmBackend(url="http://backend/lm")
    backend._client = httpx.Client(transport=httpx.MockTransport(handler))
    probs = backend.next_distribution(["a"])
    assert probs == [0.5, 0.3, 0.2]
    assert list(backend.vocabulary) == ["a", "b", "</s>"]


def test_lm_backend_shape_mismatch():
    backend = HttpLmBackend(url="http://backend/lm")
    backend._client = httpx.Client(
        transport=httpx.MockTransport(
            lambda req: httpx.Response(200, json={"vocabulary": ["a"], "probabilities": [0.5, 0.5]})
        )
    )
    with pytest.raises(BackendError):
        backend.next_distribution([])


def _write_config(tmp_path, body: str):
    path = tmp_path / "config.yaml"
    path.write_text(body, encoding="utf-8")
    return path


def test_config_paths_resolve_relative(tmp_path, fixtures_dir):
    (tmp_path / "sub").mkdir()
    corpus = tmp_path / "sub" / "corpus.jsonl"
    corpus.write_text('{"id": "a", "url": "", "text": "x"}\n', encoding="utf-8")
    path = _write_config(tmp_path, "version: 1\nresources:\n  corpus: sub/corpus.jsonl\n")
    cfg = load_config(path, environ={})
    assert cfg.corpus == corpus.resolve()


def test_config_requires_version(tmp_path):
    path = _write_config(tmp_path, "resources: {}\n")
    with pytest.raises(ConfigError, match="version"):
        load_config(path, environ={})


def test_config_env_overrides(tmp_path):
    path = _write_config(tmp_path, "version: 1\nrouter:\n  threshold: 0.8\n")
    cfg = load_config(path, environ={"CHATPIPE_ROUTER__THRESHOLD": "0.65"})
    assert cfg.threshold == 0.65
    cfg = load_config(path, environ={"CHATPIPE_KNOWLEDGE__TOP_K": "4"})
    assert cfg.top_k == 4


def test_config_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/definitely/not/here.yaml", environ={})


def test_config_backend_sections(tmp_path):
    path = _write_config(
        tmp_path,
        "version: 1\n"
        "resolver:\n  backend: {url: 'http://r/', timeout: 2.5}\n"
        "generator:\n  backend: {url: 'http://g/', kind: lm}\n"
        "knowledge:\n  extractor_backend: {url: 'http://e/'}\n"
        "  paraphraser_backend: {url: 'http://p/'}\n",
    )
    cfg = load_config(path, environ={})
    assert cfg.rewriter_backend.url == "http://r/" and cfg.rewriter_backend.timeout == 2.5
    assert cfg.generator_backend.kind == "lm"
    assert cfg.extractor_backend.url == "http://e/"
    assert cfg.paraphraser_backend.url == "http://p/"
