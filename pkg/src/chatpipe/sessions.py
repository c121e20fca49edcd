"""In-memory session store with per-session turn serialization and idle
TTL eviction. Distinct sessions may proceed concurrently; a second turn
arriving for a session that already has one in flight waits on its lock.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .core import ConversationState

__all__ = ["SessionStore"]


@dataclass
class _Slot:
    state: ConversationState
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_used: float = 0.0
    results: list = field(default_factory=list)  # one entry per completed turn


class SessionStore:
    def __init__(self, max_context: int = 3, ttl_seconds: float = 1800.0, clock=time.monotonic):
        self._slots: dict[str, _Slot] = {}
        self._mutex = threading.Lock()
        self._max_context = max_context
        self._ttl = ttl_seconds
        self._clock = clock

    def _evict_expired(self, now: float) -> None:
        dead = [sid for sid, slot in self._slots.items() if now - slot.last_used > self._ttl]
        for sid in dead:
            del self._slots[sid]

    def _slot(self, session_id: str) -> _Slot:
        now = self._clock()
        with self._mutex:
            self._evict_expired(now)
            slot = self._slots.get(session_id)
            if slot is None:
                slot = _Slot(state=ConversationState(session_id=session_id, max_context=self._max_context))
                self._slots[session_id] = slot
            slot.last_used = now
            return slot

    def get(self, session_id: str) -> ConversationState | None:
        with self._mutex:
            self._evict_expired(self._clock())
            slot = self._slots.get(session_id)
            return slot.state if slot else None

    def seed(self, session_id: str, state: ConversationState) -> None:
        """Install a pre-built state (used when replaying a session log)."""
        slot = self._slot(session_id)
        with slot.lock:
            slot.state = state

    def results(self, session_id: str) -> list | None:
        with self._mutex:
            slot = self._slots.get(session_id)
            return list(slot.results) if slot else None

    def delete(self, session_id: str) -> bool:
        with self._mutex:
            return self._slots.pop(session_id, None) is not None

    def count(self) -> int:
        with self._mutex:
            return len(self._slots)

    def run_turn(self, session_id: str, fn):
        """Run ``fn(state) -> (state', result)`` under the session's lock.

        The result is appended to the session's per-turn result history.
        """
        slot = self._slot(session_id)
        with slot.lock:
            new_state, result = fn(slot.state)
            slot.state = new_state
            slot.results.append(result)
            slot.last_used = self._clock()
            return result
