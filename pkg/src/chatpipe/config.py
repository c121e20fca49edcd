"""Engine configuration: a versioned YAML tree with paths resolved
relative to the config file and ``CHATPIPE_`` environment overrides
(double underscore separates nesting, e.g. ``CHATPIPE_ROUTER__THRESHOLD``).
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import yaml

__all__ = ["ConfigError", "PipelineConfig", "load_config"]

ENV_PREFIX = "CHATPIPE_"
CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    url: str
    timeout: float = 5.0
    kind: str = "candidates"  # "candidates" or "lm" (per-step distributions)


@dataclass(frozen=True)
class PipelineConfig:
    # resource paths, already resolved to absolute
    corpus: Path | None = None
    index: Path | None = None
    gazetteer: Path | None = None
    blocklist: Path | None = None
    bank: Path | None = None
    router_model: Path | None = None
    # knobs
    threshold: float = 0.8
    k1: float = 1.2
    b: float = 0.75
    top_k: int = 10
    alpha: float = 0.5
    candidates: int = 3
    max_context: int = 3
    decay: float = 0.5
    fallback_text: str | None = None
    decode_mode: str = "beam"
    beam_width: int = 4
    sample_k: int = 10
    max_len: int = 32
    seed: int = 0
    # optional per-stage HTTP backends
    rewriter_backend: BackendConfig | None = None
    generator_backend: BackendConfig | None = None
    extractor_backend: BackendConfig | None = None
    paraphraser_backend: BackendConfig | None = None
    # service
    max_concurrent_turns: int = 64
    session_ttl_seconds: float = 1800.0
    session_log: Path | None = None


def _apply_env(tree: dict, environ: dict[str, str]) -> None:
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {key} conflicts with a scalar")
        node[path[-1]] = yaml.safe_load(raw)


def load_config(path, environ: dict[str, str] | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        tree = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}")
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: config must be a key/value tree")
    version = tree.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"{path}: unsupported config version {version!r} (expected {CONFIG_VERSION})")
    _apply_env(tree, environ if environ is not None else dict(os.environ))

    base = path.parent
    resources = tree.get("resources") or {}

    def respath(key: str) -> Path | None:
        value = resources.get(key)
        return (base / value).resolve() if value else None

    router = tree.get("router") or {}
    knowledge = tree.get("knowledge") or {}
    generator = tree.get("generator") or {}
    resolver = tree.get("resolver") or {}
    safety = tree.get("safety") or {}
    core = tree.get("core") or {}
    server = tree.get("server") or {}
    decode = generator.get("decode") or {}

    def backend(section: dict) -> BackendConfig | None:
        cfg = section.get("backend")
        if not cfg:
            return None
        if "url" not in cfg:
            raise ConfigError(f"{path}: backend config needs a url")
        return BackendConfig(
            url=str(cfg["url"]),
            timeout=float(cfg.get("timeout", 5.0)),
            kind=str(cfg.get("kind", "candidates")),
        )

    return PipelineConfig(
        corpus=respath("corpus"),
        index=respath("index"),
        gazetteer=respath("gazetteer"),
        blocklist=respath("blocklist"),
        bank=respath("bank"),
        router_model=respath("router_model"),
        threshold=float(router.get("threshold", 0.8)),
        k1=float(knowledge.get("k1", 1.2)),
        b=float(knowledge.get("b", 0.75)),
        top_k=int(knowledge.get("top_k", 10)),
        alpha=float(knowledge.get("alpha", 0.5)),
        candidates=int(generator.get("candidates", 3)),
        max_context=int(core.get("max_context", 3)),
        decay=float(resolver.get("decay", 0.5)),
        fallback_text=safety.get("fallback"),
        decode_mode=str(decode.get("mode", "beam")),
        beam_width=int(decode.get("beam_width", 4)),
        sample_k=int(decode.get("k", 10)),
        max_len=int(decode.get("max_len", 32)),
        seed=int(decode.get("seed", 0)),
        rewriter_backend=backend(resolver),
        generator_backend=backend(generator),
        extractor_backend=backend({"backend": knowledge.get("extractor_backend")}),
        paraphraser_backend=backend({"backend": knowledge.get("paraphraser_backend")}),
        max_concurrent_turns=int(server.get("max_concurrent_turns", 64)),
        session_ttl_seconds=float(server.get("session_ttl_seconds", 1800.0)),
        session_log=(base / server["session_log"]).resolve() if server.get("session_log") else None,
    )
