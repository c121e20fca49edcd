"""Turn orchestration: rewrite -> route -> answer or generate -> gate.

The engine owns every loaded resource (index, gazetteer, router model,
response bank, safety config) plus the session store, and is shared by
the CLI and the HTTP service so both fronts behave identically. Each
processed turn produces a full trace for debugging and regression tests.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace

from . import generator, knowledge, resolver, router, safety
from .backends import BackendError, HttpLmBackend, HttpStageBackend
from .config import PipelineConfig, load_config
from .core import (
    Candidate,
    ConversationState,
    Route,
    Turn,
    Utterance,
    append_turn,
    context_window,
)
from .sessions import SessionStore

__all__ = ["ChatResult", "Engine", "TurnTrace"]


@dataclass
class TurnTrace:
    """Everything observable about one processed turn.

    Only stages on the taken route populate their fields; latencies are
    wall-clock and excluded from golden comparisons.
    """

    user_text: str
    rewritten_text: str = ""
    substitutions: list = field(default_factory=list)
    rewrite_backend: str = "baseline"
    factual_score: float = 0.0
    route: str = ""
    retrieval: list = field(default_factory=list)  # [(passage id, bm25)]
    span: dict | None = None
    candidates: list = field(default_factory=list)  # [(text, gen_score)]
    verdicts: list = field(default_factory=list)
    response: str = ""
    fallback_used: bool = False
    no_answer_fallthrough: bool = False
    backend_fallbacks: list = field(default_factory=list)
    latencies_ms: dict = field(default_factory=dict)
    turn_no: int = 0

    def stable_dict(self) -> dict:
        """Deterministic fields only (drops latencies), for goldens and APIs."""
        return {
            "turn_no": self.turn_no,
            "user_text": self.user_text,
            "rewritten_text": self.rewritten_text,
            "substitutions": [list(s) for s in self.substitutions],
            "rewrite_backend": self.rewrite_backend,
            "factual_score": round(self.factual_score, 9),
            "route": self.route,
            "retrieval": [[pid, round(score, 9)] for pid, score in self.retrieval],
            "span": self.span,
            "candidates": [[text, round(score, 9)] for text, score in self.candidates],
            "verdicts": self.verdicts,
            "response": self.response,
            "fallback_used": self.fallback_used,
            "no_answer_fallthrough": self.no_answer_fallthrough,
            "backend_fallbacks": self.backend_fallbacks,
        }


@dataclass(frozen=True)
class ChatResult:
    response: str
    turn_no: int
    route: str
    rewritten_text: str
    trace: TurnTrace


class _Timer:
    def __init__(self, trace: TurnTrace):
        self.trace = trace

    def __call__(self, stage: str):
        return _Span(self.trace, stage)


class _Span:
    def __init__(self, trace: TurnTrace, stage: str):
        self.trace, self.stage = trace, stage

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.trace.latencies_ms[self.stage] = (time.perf_counter() - self.t0) * 1000.0
        return False


class Engine:
    """Loads every configured resource eagerly; raises on the first failure
    so the health endpoint never reports a half-started service."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.gazetteer = (
            resolver.load_gazetteer(config.gazetteer) if config.gazetteer else resolver.Gazetteer()
        )
        if config.index:
            self.index = knowledge.load_index(config.index)
        elif config.corpus:
            self.index = knowledge.build_index(
                knowledge.load_corpus(config.corpus), k1=config.k1, b=config.b
            )
        else:
            self.index = None
        self.bank = generator.ResponseBank.from_jsonl(config.bank) if config.bank else None
        blocklist = safety.load_blocklist(config.blocklist) if config.blocklist else frozenset()
        self.safety_config = safety.SafetyConfig(
            blocklist=blocklist,
            fallback_text=config.fallback_text or safety.DEFAULT_FALLBACK,
        )
        self.router_model = (
            router.load_model(config.router_model)
            if config.router_model
            else router.RouterModel.zeros()
        )
        self.router_config = router.RouterConfig(threshold=config.threshold)
        def stage_backend(cfg):
            return HttpStageBackend(url=cfg.url, timeout=cfg.timeout) if cfg else None

        self.rewriter_backend = stage_backend(config.rewriter_backend)
        self.extractor_backend = stage_backend(config.extractor_backend)
        self.paraphraser_backend = stage_backend(config.paraphraser_backend)
        self.generator_backend = None
        self.lm_backend = None
        if config.generator_backend:
            if config.generator_backend.kind == "lm":
                self.lm_backend = HttpLmBackend(
                    url=config.generator_backend.url, timeout=config.generator_backend.timeout
                )
            else:
                self.generator_backend = stage_backend(config.generator_backend)
        self.decode_config = generator.DecodeConfig(
            mode=generator.DecodeMode(config.decode_mode),
            beam_width=config.beam_width,
            k=config.sample_k,
            max_len=config.max_len,
            seed=config.seed,
        )
        self.sessions = SessionStore(
            max_context=config.max_context, ttl_seconds=config.session_ttl_seconds
        )
        self._log_lock = threading.Lock()
        if config.session_log and config.session_log.exists():
            self._replay_session_log(config.session_log)

    @classmethod
    def from_config_file(cls, path) -> "Engine":
        return cls(load_config(path))

    # -- session log ---------------------------------------------------------

    def _replay_session_log(self, path) -> None:
        """Rebuild session states from the append-only turn log.

        Replayed turns keep their logged responses verbatim; only the entity
        stack is recomputed so follow-up rewrites keep working after restart.
        """
        states: dict[str, ConversationState] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                sid = rec["session_id"]
                state = states.get(sid) or ConversationState(
                    session_id=sid, max_context=self.config.max_context
                )
                rewritten = Utterance.of(rec["rewritten"])
                turn = Turn(
                    user=Utterance.of(rec["user"]),
                    rewritten=rewritten,
                    route=Route(rec["route"]),
                    response=rec["response"],
                )
                entities = resolver.extract_entities(rewritten.text, self.gazetteer)
                states[sid] = append_turn(state, turn, new_entities=entities, gamma=self.config.decay)
        for sid, state in states.items():
            self.sessions.seed(sid, state)

    def _log_turn(self, session_id: str, turn: Turn, turn_no: int) -> None:
        if not self.config.session_log:
            return
        record = {
            "session_id": session_id,
            "turn_no": turn_no,
            "user": turn.user.text,
            "rewritten": turn.rewritten.text,
            "route": turn.route.value,
            "response": turn.response,
        }
        with self._log_lock:
            with open(self.config.session_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    # -- stages ------------------------------------------------------------

    def _rewrite(self, state: ConversationState, query: Utterance, trace: TurnTrace):
        if self.rewriter_backend is not None:
            try:
                ctx = context_window(state, self.config.max_context) if state.turns else []
                text = self.rewriter_backend.call(ctx, query.text)[0][0]
                result = resolver.RewriteResult(
                    rewritten=Utterance.of(text), substitutions=(), backend="external"
                )
            except BackendError:
                trace.backend_fallbacks.append("rewriter")
                result = resolver.rewrite(query, state, self.gazetteer)
        else:
            result = resolver.rewrite(query, state, self.gazetteer)
        trace.rewritten_text = result.rewritten.text
        trace.substitutions = [
            [list(span), surface, etype] for span, surface, etype in result.substitutions
        ]
        trace.rewrite_backend = result.backend
        return result

    def _extractor_fn(self, trace: TurnTrace):
        """Baseline extractor, or the external one with one-shot fallback."""
        if self.extractor_backend is None:
            return knowledge.extract_span
        backend = self.extractor_backend
        failed = {"flag": False}

        def extract(passage, query):
            if failed["flag"]:
                return knowledge.extract_span(passage, query)
            try:
                candidates = backend.call([(passage.text, "")], query.text)
                text, score = candidates[0]
                start = passage.text.find(text)
                if start < 0:
                    return knowledge.extract_span(passage, query)
                return (start, start + len(text)), min(max(score, 0.0), 1.0)
            except BackendError:
                failed["flag"] = True
                trace.backend_fallbacks.append("extractor")
                return knowledge.extract_span(passage, query)

        return extract

    def _paraphrase(self, span_text: str, rewritten: Utterance, trace: TurnTrace) -> str:
        if self.paraphraser_backend is not None:
            try:
                text = self.paraphraser_backend.call([(rewritten.text, span_text)], span_text)[0][0]
                return knowledge.cap_words(text.strip())
            except BackendError:
                trace.backend_fallbacks.append("paraphraser")
        return knowledge.paraphrase(span_text, rewritten)

    def _factual(self, rewritten: Utterance, trace: TurnTrace):
        if self.index is None:
            return None
        span, retrieved = knowledge.answer_factual(
            self.index,
            rewritten,
            k=self.config.top_k,
            alpha=self.config.alpha,
            extract_fn=self._extractor_fn(trace),
        )
        trace.retrieval = [(sp.passage_id, sp.bm25) for sp in retrieved]
        if span is None:
            return None
        trace.span = {
            "passage_id": span.passage_id,
            "start": span.start,
            "end": span.end,
            "text": span.text,
            "span_score": round(span.span_score, 9),
            "bm25_norm": round(span.bm25_norm, 9),
            "fused": round(span.fused, 9),
        }
        return span

    def _generate(self, state: ConversationState, rewritten: Utterance, trace: TurnTrace):
        n = self.config.candidates
        if self.generator_backend is not None:
            try:
                ctx = context_window(state, self.config.max_context) if state.turns else []
                pairs = self.generator_backend.call(ctx, rewritten.text)
                return [Candidate(text=t, gen_score=s) for t, s in pairs[:n]]
            except BackendError:
                trace.backend_fallbacks.append("generator")
        if self.lm_backend is not None:
            try:
                return generator.generate_candidates(
                    state, rewritten, n, backend=self.lm_backend, config=self.decode_config
                )
            except (BackendError, ValueError):
                trace.backend_fallbacks.append("generator")
        if self.bank is not None and len(self.bank) > 0:
            return generator.generate_candidates(state, rewritten, n, bank=self.bank)
        return []

    # -- turn lifecycle ----------------------------------------------------

    def process_turn(
        self, state: ConversationState, user_text: str
    ) -> tuple[ConversationState, str, Turn, TurnTrace]:
        user = Utterance.of(user_text)
        if not user.text.strip():
            raise ValueError("utterance is empty")
        trace = TurnTrace(user_text=user.text, turn_no=len(state.turns) + 1)
        timer = _Timer(trace)

        with timer("rewrite"):
            rewrite_result = self._rewrite(state, user, trace)
        rewritten = rewrite_result.rewritten

        with timer("route"):
            score = router.score_factual(self.router_model, rewritten.text)
            decided = router.route(score, self.router_config)
        trace.factual_score = score
        trace.route = decided.value

        span = None
        candidates: list[Candidate] = []
        if decided is Route.FACTUAL:
            with timer("answer"):
                span = self._factual(rewritten, trace)
            if span is None:
                trace.no_answer_fallthrough = True
            else:
                reply = self._paraphrase(span.text, rewritten, trace)
                candidates = [Candidate(text=reply, gen_score=span.fused)]
        if decided is Route.SUBJECTIVE or span is None:
            with timer("generate"):
                candidates = self._generate(state, rewritten, trace)

        with timer("gate"):
            response, verdicts = safety.gate(candidates, state, self.safety_config)
        trace.candidates = [(c.text, c.gen_score) for c in candidates]
        trace.verdicts = [v.kind.value for v in verdicts]
        trace.response = response
        trace.fallback_used = response == self.safety_config.fallback_text and not any(
            v.kind is safety.VerdictKind.PASS for v in verdicts
        )

        gated = tuple(
            replace(c, verdict=v) for c, v in zip(candidates, verdicts)
        )
        turn = Turn(
            user=user,
            rewritten=rewritten,
            route=decided,
            response=response,
            candidates=gated,
            fused=span,
        )
        entities = resolver.extract_entities(rewritten.text, self.gazetteer)
        new_state = append_turn(state, turn, new_entities=entities, gamma=self.config.decay)
        return new_state, response, turn, trace

    def chat(self, session_id: str, user_text: str) -> ChatResult:
        """Process one turn under the session's lock."""

        def fn(state: ConversationState):
            new_state, response, turn, trace = self.process_turn(state, user_text)
            self._log_turn(session_id, turn, len(new_state.turns))
            return new_state, ChatResult(
                response=response,
                turn_no=len(new_state.turns),
                route=trace.route,
                rewritten_text=trace.rewritten_text,
                trace=trace,
            )

        return self.sessions.run_turn(session_id, fn)

    def run_script(self, script: list[str], session_id: str | None = None) -> list[ChatResult]:
        """Process a scripted conversation in a fresh session."""
        if not script:
            raise ValueError("script is empty")
        sid = session_id or f"script-{uuid.uuid4().hex}"
        return [self.chat(sid, line) for line in script]
