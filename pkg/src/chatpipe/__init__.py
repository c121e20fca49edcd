"""chatpipe: a modular conversational pipeline engine.

Stages: multi-turn query rewriting, factual/subjective routing, BM25
retrieval with span extraction and paraphrasing, similarity- or
model-backed response generation, and a safety gate — plus metrics,
dataset tooling, a CLI, and an HTTP chat service.
"""
from .core import (
    Candidate,
    ConversationState,
    Entity,
    Route,
    Turn,
    Utterance,
    append_turn,
    context_window,
    tokenize,
)
from .pipeline import ChatResult, Engine, TurnTrace

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "ChatResult",
    "ConversationState",
    "Engine",
    "Entity",
    "Route",
    "Turn",
    "TurnTrace",
    "Utterance",
    "append_turn",
    "context_window",
    "tokenize",
    "__version__",
]
