"""Shared domain types, tokenization, and the per-session turn ledger.

Every stage of the pipeline reads and writes these types; the tokenizer
defined here is the single tokenizer used by the index, the resolver and
the metric suite so that scores computed in different modules agree.
"""
from __future__ import annotations

import enum
import re
import unicodedata
from dataclasses import dataclass, field, replace

__all__ = [
    "Candidate",
    "ConversationState",
    "Entity",
    "IncompleteTurnError",
    "Route",
    "Turn",
    "Utterance",
    "append_turn",
    "context_window",
    "decay_and_merge",
    "normalize_text",
    "tokenize",
]

# Word runs with optional internal apostrophes ("don't" is one token,
# a trailing apostrophe is punctuation and gets dropped).
_TOKEN_RE = re.compile(r"[^\W_]+(?:'[^\W_]+)*", re.UNICODE)


def normalize_text(text: str) -> str:
    """NFC-normalize and unify curly apostrophes so comparisons are stable."""
    return unicodedata.normalize("NFC", text).replace("’", "'")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation dropped except intra-token apostrophes."""
    return _TOKEN_RE.findall(normalize_text(text).lower())


class Route(enum.Enum):
    FACTUAL = "factual"
    SUBJECTIVE = "subjective"


class IncompleteTurnError(ValueError):
    """Raised when a turn without a response is appended to a session."""


@dataclass(frozen=True)
class Utterance:
    """A piece of user or bot text plus its derived tokens."""

    text: str
    tokens: tuple[str, ...] = field(default=())

    @classmethod
    def of(cls, text: str) -> "Utterance":
        text = normalize_text(text)
        return cls(text=text, tokens=tuple(tokenize(text)))


@dataclass(frozen=True)
class Entity:
    """A conversational entity tracked on the salience stack."""

    surface: str
    entity_type: str | None = None
    last_turn: int = 0
    salience: float = 1.0

    def key(self) -> tuple[str, str | None]:
        return (" ".join(tokenize(self.surface)), self.entity_type)


@dataclass(frozen=True)
class Candidate:
    """A proposed response; ``verdict`` is filled in by the safety gate."""

    text: str
    gen_score: float
    verdict: object | None = None  # safety.Verdict once gated


@dataclass(frozen=True)
class Turn:
    user: Utterance
    rewritten: Utterance
    route: Route
    response: str
    candidates: tuple[Candidate, ...] = ()
    fused: object | None = None  # knowledge.ScoredSpan on the factual route


@dataclass(frozen=True)
class ConversationState:
    """Immutable session snapshot: turn history plus the entity salience stack."""

    session_id: str
    turns: tuple[Turn, ...] = ()
    entities: tuple[Entity, ...] = ()
    max_context: int = 3


def _salience_order(e: Entity) -> tuple[float, int, str]:
    # Total, stable order: salience desc, then recency desc, then surface asc.
    return (-e.salience, -e.last_turn, e.surface.lower())


def decay_and_merge(
    entities: tuple[Entity, ...] | list[Entity],
    new: list[Entity],
    gamma: float = 0.5,
    turn_no: int | None = None,
) -> tuple[Entity, ...]:
    """Decay existing saliences by ``gamma`` and promote new mentions to 1.0.

    Re-mentioned entities (same normalized surface and type) are merged with
    the fresh mention winning; the result is sorted by the salience order.
    """
    merged: dict[tuple[str, str | None], Entity] = {}
    for e in entities:
        decayed = replace(e, salience=e.salience * gamma)
        merged[decayed.key()] = decayed
    for e in new:
        if turn_no is not None:
            e = replace(e, last_turn=turn_no)
        merged[e.key()] = replace(e, salience=1.0)
    return tuple(sorted(merged.values(), key=_salience_order))


def append_turn(
    state: ConversationState,
    turn: Turn,
    new_entities: list[Entity] | None = None,
    gamma: float = 0.5,
) -> ConversationState:
    """Append a completed turn, updating the entity stack for its mentions."""
    if not turn.response:
        raise IncompleteTurnError("turn has no response; refusing to append")
    turn_no = len(state.turns) + 1
    entities = decay_and_merge(state.entities, new_entities or [], gamma, turn_no=turn_no)
    return replace(state, turns=state.turns + (turn,), entities=entities)


def context_window(state: ConversationState, n: int) -> list[tuple[str, str]]:
    """Last ``min(n, len(turns))`` (user, response) pairs, oldest first."""
    if n < 1:
        raise ValueError("context window size must be >= 1")
    return [(t.user.text, t.response) for t in state.turns[-n:]]
