"""Query rewriting: resolve pronouns and elliptical follow-ups into
self-contained questions using the session's entity salience stack.

The baseline is purely rule based. An external rewriter backend can be
plugged in at the pipeline level; when it fails or returns empty text the
engine falls back to this baseline.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .core import ConversationState, Entity, Utterance, decay_and_merge, tokenize

__all__ = [
    "Gazetteer",
    "RewriteResult",
    "decay_and_merge",
    "extract_entities",
    "load_gazetteer",
    "rewrite",
]

# Pronouns the baseline resolves. Two-word forms must be checked first.
_PRONOUN_PHRASES = ("that one",)
_PRONOUNS = {
    "it", "he", "she", "they", "them", "that", "this",
    "his", "her", "its", "their",
}

_QUOTED_RE = re.compile(r'"([^"]+)"|“([^”]+)”')
_WORD_RE = re.compile(r"[^\W\d_][\w']*", re.UNICODE)


def _load_verbs() -> frozenset[str]:
    text = resources.files("chatpipe.assets").joinpath("verbs.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())

_VERBS = _load_verbs()


class Gazetteer:
    """Case-insensitive map from entity surface to entity type.

    Surfaces are normalized through the shared tokenizer so that
    punctuation and casing in queries never break lookups.
    """

    def __init__(self, entries: dict[str, str] | None = None):
        self._types: dict[str, str] = {}
        for surface, etype in (entries or {}).items():
            self.add(surface, etype)

    def add(self, surface: str, entity_type: str) -> None:
        self._types[" ".join(tokenize(surface))] = entity_type

    def lookup(self, surface: str) -> str | None:
        return self._types.get(" ".join(tokenize(surface)))

    def surfaces(self) -> list[str]:
        return list(self._types)

    def __len__(self) -> int:
        return len(self._types)


def load_gazetteer(path) -> Gazetteer:
    """Read tab-separated ``surface<TAB>type`` lines (UTF-8)."""
    gaz = Gazetteer()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise ValueError(f"{path}:{lineno}: expected 'surface<TAB>type'")
            gaz.add(parts[0].strip(), parts[1].strip())
    return gaz


@dataclass(frozen=True)
class RewriteResult:
    rewritten: Utterance
    # (source token span, entity surface, entity type) per substitution
    substitutions: tuple[tuple[tuple[int, int], str, str | None], ...]
    backend: str = "baseline"


def _sentence_starts(text: str) -> set[int]:
    """Character offsets that begin a sentence (for capitalization filtering)."""
    starts = {0}
    for m in re.finditer(r"[.!?]\s+", text):
        starts.add(m.end())
    return starts


def extract_entities(turn_text: str, gazetteer: Gazetteer) -> list[Entity]:
    """Entity candidates: capitalized token runs, quoted phrases, gazetteer hits.

    Sentence-initial capitalization only counts when the run extends past the
    first word or the word itself is a known gazetteer surface; the pronoun
    "I" never counts. Every candidate starts at salience 1.0.
    """
    found: dict[tuple[str, str | None], Entity] = {}

    def add(surface: str) -> None:
        surface = surface.strip()
        if not surface:
            return
        etype = gazetteer.lookup(surface)
        ent = Entity(surface=surface, entity_type=etype, salience=1.0)
        found.setdefault(ent.key(), ent)

    starts = _sentence_starts(turn_text)
    words = [(m.start(), m.group()) for m in _WORD_RE.finditer(turn_text)]

    run: list[tuple[int, str]] = []
    for pos, word in words + [(-1, "")]:
        capitalized = bool(word) and word[0].isupper() and word.lower() != "i"
        if capitalized:
            run.append((pos, word))
            continue
        if run:
            surface = " ".join(w for _, w in run)
            head_is_sentence_start = run[0][0] in starts
            if len(run) > 1 or not head_is_sentence_start or gazetteer.lookup(surface):
                add(surface)
            run = []

    for m in _QUOTED_RE.finditer(turn_text):
        add(m.group(1) or m.group(2))

    # Gazetteer n-gram scan over the tokenized text.
    tokens = tokenize(turn_text)
    norm_surfaces = {tuple(tokenize(s)): s for s in gazetteer.surfaces()}
    for n in range(1, 6):
        for i in range(len(tokens) - n + 1):
            gram = tuple(tokens[i : i + n])
            if gram in norm_surfaces:
                add(_original_casing(turn_text, gram) or norm_surfaces[gram])
    return list(found.values())


def _original_casing(text: str, gram: tuple[str, ...]) -> str | None:
    """Recover the original-cased substring for a normalized token n-gram."""
    pattern = r"\b" + r"[\s,;:]+".join(re.escape(t) for t in gram) + r"\b"
    m = re.search(pattern, text, re.IGNORECASE)
    return m.group() if m else None


def _render(entity: Entity) -> str:
    if entity.entity_type:
        # surfaces that carry their own article keep it ("The Matrix movie")
        article = "" if entity.surface.lower().startswith("the ") else "the "
        return f"{article}{entity.surface} {entity.entity_type}"
    return entity.surface


def rewrite(
    query: Utterance,
    state: ConversationState,
    gazetteer: Gazetteer,
) -> RewriteResult:
    """Produce a self-contained version of ``query`` against the entity stack.

    Self-contained queries (those already naming an entity) and queries made
    with an empty stack pass through unchanged; the worst case is always an
    identity rewrite.
    """
    stack = state.entities
    if not stack or extract_entities(query.text, gazetteer):
        return RewriteResult(rewritten=query, substitutions=())

    top = stack[0]
    subs: list[tuple[tuple[int, int], str, str | None]] = []

    # (a) pronoun substitution against the most salient entity.
    raw = query.text
    tokens = raw.split()
    out: list[str] = []
    i = 0
    while i < len(tokens):
        joined2 = " ".join(tokenize(" ".join(tokens[i : i + 2])))
        single = " ".join(tokenize(tokens[i]))
        if joined2 in _PRONOUN_PHRASES:
            out.append(_with_edge_punct(tokens[i + 1], _render(top), tokens[i]))
            subs.append(((i, i + 2), top.surface, top.entity_type))
            i += 2
        elif single in _PRONOUNS:
            out.append(_with_edge_punct(tokens[i], _render(top)))
            subs.append(((i, i + 1), top.surface, top.entity_type))
            i += 1
        else:
            out.append(tokens[i])
            i += 1
    if subs:
        return RewriteResult(rewritten=Utterance.of(" ".join(out)), substitutions=tuple(subs))

    # (b) ellipsis completion for short verbless queries.
    qtokens = query.tokens
    if len(qtokens) <= 4 and not any(t in _VERBS for t in qtokens):
        stripped = raw.rstrip()
        terminal = ""
        while stripped and stripped[-1] in ".?!":
            terminal = stripped[-1] + terminal
            stripped = stripped[:-1].rstrip()
        completion = f"of {_render(top)}" if top.entity_type else f"of {top.surface}"
        rewritten = Utterance.of(f"{stripped} {completion}{terminal}")
        n = len(qtokens)
        return RewriteResult(
            rewritten=rewritten,
            substitutions=(((n, n), top.surface, top.entity_type),),
        )

    return RewriteResult(rewritten=query, substitutions=())


def _with_edge_punct(source_token: str, replacement: str, lead_token: str | None = None) -> str:
    """Carry the source token's leading/trailing punctuation onto a replacement."""
    lead_src = lead_token if lead_token is not None else source_token
    lead = re.match(r"^[^\w']*", lead_src).group()
    trail = re.search(r"[^\w']*$", source_token).group()
    return f"{lead}{replacement}{trail}"
