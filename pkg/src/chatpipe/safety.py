"""Last-stage response gate: blocklist toxicity matching plus a polarity
heuristic that flags candidates contradicting earlier bot responses.
Failing candidates are suppressed, never rewritten; when everything fails
the configured fallback is emitted.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

from .core import Candidate, ConversationState, tokenize
from .knowledge import STOPWORDS

__all__ = [
    "SafetyConfig",
    "Verdict",
    "VerdictKind",
    "check_inconsistent",
    "check_toxic",
    "gate",
    "load_blocklist",
]

DEFAULT_NEGATIONS = frozenset({"not", "n't", "never", "no"})
DEFAULT_FALLBACK = "I'd rather not get into that — want to talk movies or music?"
JACCARD_THRESHOLD = 0.6


class VerdictKind(enum.Enum):
    PASS = "pass"
    INCONSISTENT = "inconsistent"
    TOXIC = "toxic"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    reason: str | None = None


@dataclass(frozen=True)
class SafetyConfig:
    blocklist: frozenset[str] = frozenset()
    negations: frozenset[str] = DEFAULT_NEGATIONS
    fallback_text: str = DEFAULT_FALLBACK

    def __post_init__(self):
        # Normalize blocklist entries through the shared tokenizer.
        object.__setattr__(
            self,
            "blocklist",
            frozenset(" ".join(tokenize(t)) for t in self.blocklist if tokenize(t)),
        )
        if check_toxic(self.fallback_text, self):
            raise ValueError("fallback text matches the blocklist")


def load_blocklist(path) -> frozenset[str]:
    """One term or phrase per line; ``#`` starts a comment."""
    terms: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                terms.add(line)
    return frozenset(terms)


def check_toxic(text: str, config: SafetyConfig) -> bool:
    """True iff a blocklist term matches on token boundaries."""
    tokens = tokenize(text)
    if not tokens or not config.blocklist:
        return False
    grams: set[str] = set()
    max_n = max(len(t.split()) for t in config.blocklist)
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            grams.add(" ".join(tokens[i : i + n]))
    return not grams.isdisjoint(config.blocklist)


def _polarity_profile(text: str, config: SafetyConfig) -> tuple[Counter, int]:
    """Content-token multiset (stopwords/negations removed) and negation count."""
    tokens = tokenize(text)
    negs = 0
    content: Counter = Counter()
    for t in tokens:
        if t in config.negations or ("n't" in config.negations and t.endswith("n't")):
            negs += 1
        elif t not in STOPWORDS:
            content[t] += 1
    return content, negs


def check_inconsistent(
    candidate: str, state: ConversationState, config: SafetyConfig | None = None
) -> bool:
    """Flag a candidate whose content matches an earlier bot response but
    whose negation parity flips it (the "i like it" / "i don't like it" case)."""
    config = config or SafetyConfig()
    cand_content, cand_negs = _polarity_profile(candidate, config)
    for turn in state.turns:
        prior_content, prior_negs = _polarity_profile(turn.response, config)
        union = prior_content | cand_content
        if not union:
            continue
        inter = prior_content & cand_content
        jaccard = sum(inter.values()) / sum(union.values())
        if jaccard >= JACCARD_THRESHOLD and (prior_negs % 2) != (cand_negs % 2):
            return True
    return False


def assess(candidate: Candidate, state: ConversationState, config: SafetyConfig) -> Verdict:
    """Toxicity first (it outranks inconsistency), then the polarity check."""
    if check_toxic(candidate.text, config):
        return Verdict(kind=VerdictKind.TOXIC, reason="blocklist match")
    if check_inconsistent(candidate.text, state, config):
        return Verdict(kind=VerdictKind.INCONSISTENT, reason="contradicts an earlier response")
    return Verdict(kind=VerdictKind.PASS)


def gate(
    candidates: list[Candidate],
    state: ConversationState,
    config: SafetyConfig,
) -> tuple[str, list[Verdict]]:
    """Return the first passing candidate's text, else the fallback.

    Candidates must arrive ordered by generation score; every candidate
    gets a verdict even after one passes, so traces stay complete.
    """
    verdicts = [assess(c, state, config) for c in candidates]
    for candidate, verdict in zip(candidates, verdicts):
        if verdict.kind is VerdictKind.PASS:
            return candidate.text, verdicts
    return config.fallback_text, verdicts
