"""HTTP front for the engine.

Endpoints:
  POST   /v1/chat          {"session_id", "utterance"} -> chat response
  GET    /v1/session/{id}  turn history with full traces
  DELETE /v1/session/{id}  drop a session
  GET    /v1/health        resource/readiness status

Malformed bodies return 400 with an error record; an unknown session id on
chat simply creates the session; turns beyond the concurrency limit get 429.
"""
from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .pipeline import Engine

__all__ = ["create_app"]


class ChatRequest(BaseModel):
    session_id: str = Field(min_length=1, max_length=128)
    utterance: str = Field(min_length=1, max_length=4000)


class _TurnLimiter:
    def __init__(self, limit: int):
        self._sem = threading.BoundedSemaphore(limit)

    def acquire(self) -> bool:
        return self._sem.acquire(blocking=False)

    def release(self) -> None:
        self._sem.release()


def create_app(engine: Engine, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="chatpipe", version="0.1.0")
    limiter = _TurnLimiter(engine.config.max_concurrent_turns)
    app.state.engine = engine
    app.state.ready = True

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "malformed request", "detail": exc.errors()},
        )

    @app.get("/v1/health")
    def health():
        if not app.state.ready:
            return JSONResponse(status_code=503, content={"status": "starting"})
        return {
            "status": "ok",
            "sessions": engine.sessions.count(),
            "index_passages": engine.index.N if engine.index else 0,
            "bank_pairs": len(engine.bank) if engine.bank else 0,
        }

    @app.post("/v1/chat")
    def chat(body: ChatRequest):
        if not body.utterance.strip():
            return JSONResponse(status_code=400, content={"error": "utterance is empty"})
        if not limiter.acquire():
            return JSONResponse(status_code=429, content={"error": "too many concurrent turns"})
        try:
            result = engine.chat(body.session_id, body.utterance)
        finally:
            limiter.release()
        return {
            "session_id": body.session_id,
            "turn_no": result.turn_no,
            "response": result.response,
            "route": result.route,
            "rewritten": result.rewritten_text,
            "trace": result.trace.stable_dict(),
        }

    @app.get("/v1/session/{session_id}")
    def get_session(session_id: str):
        state = engine.sessions.get(session_id)
        if state is None:
            return JSONResponse(status_code=404, content={"error": f"unknown session {session_id!r}"})
        results = engine.sessions.results(session_id) or []
        return {
            "session_id": session_id,
            "turns": [
                {
                    "turn_no": i + 1,
                    "user": turn.user.text,
                    "rewritten": turn.rewritten.text,
                    "route": turn.route.value,
                    "response": turn.response,
                    "trace": results[i].trace.stable_dict() if i < len(results) else None,
                }
                for i, turn in enumerate(state.turns)
            ],
        }

    @app.delete("/v1/session/{session_id}")
    def delete_session(session_id: str):
        engine.sessions.delete(session_id)
        return {"session_id": session_id, "deleted": True}

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
