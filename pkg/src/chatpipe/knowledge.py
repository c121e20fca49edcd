"""Retrieval-based factual answering: inverted index with BM25 scoring,
sentence-level answer extraction, score fusion, and a template paraphraser
that turns the winning span into a conversational reply.
"""
from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass
from importlib import resources

from .core import Utterance, normalize_text, tokenize

__all__ = [
    "CorpusError",
    "Passage",
    "PassageIndex",
    "ScoredPassage",
    "ScoredSpan",
    "answer_factual",
    "bm25_search",
    "cap_words",
    "build_index",
    "content_tokens",
    "extract_span",
    "fuse_scores",
    "load_corpus",
    "load_index",
    "paraphrase",
    "save_index",
]

_MAGIC = b"CPIX"
_VERSION = 1
MAX_RESPONSE_WORDS = 30


def _load_stopwords() -> frozenset[str]:
    text = resources.files("chatpipe.assets").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())

STOPWORDS = _load_stopwords()


def content_tokens(text_or_tokens) -> list[str]:
    tokens = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else text_or_tokens
    return [t for t in tokens if t not in STOPWORDS]


class CorpusError(ValueError):
    """Malformed corpus: duplicate ids, empty corpus, or bad records."""


@dataclass(frozen=True)
class Passage:
    id: str
    url: str
    text: str
    tokens: tuple[str, ...]

    @classmethod
    def of(cls, id: str, url: str, text: str) -> "Passage":
        text = normalize_text(text)
        return cls(id=id, url=url, text=text, tokens=tuple(tokenize(text)))


@dataclass(frozen=True)
class ScoredPassage:
    passage_id: str
    bm25: float


@dataclass(frozen=True)
class ScoredSpan:
    passage_id: str
    start: int
    end: int
    text: str
    span_score: float
    bm25_norm: float
    fused: float


class PassageIndex:
    """Inverted index with the statistics BM25 needs.

    Postings map term -> [(passage ordinal, term frequency)] sorted by
    ordinal; the index is immutable after build and safe for concurrent
    searches.
    """

    def __init__(self, passages: list[Passage], k1: float, b: float):
        self.passages = passages
        self.k1 = k1
        self.b = b
        self.N = len(passages)
        self.doc_lengths = [len(p.tokens) for p in passages]
        self.avgdl = sum(self.doc_lengths) / self.N
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for ordinal, passage in enumerate(passages):
            counts: dict[str, int] = {}
            for tok in passage.tokens:
                counts[tok] = counts.get(tok, 0) + 1
            for term, tf in counts.items():
                self.postings.setdefault(term, []).append((ordinal, tf))

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log((self.N - df + 0.5) / (df + 0.5) + 1.0)

    def passage_by_id(self, passage_id: str) -> Passage:
        return self._by_id[passage_id]

    @property
    def _by_id(self) -> dict[str, Passage]:
        cached = getattr(self, "_by_id_cache", None)
        if cached is None:
            cached = {p.id: p for p in self.passages}
            self._by_id_cache = cached
        return cached


def load_corpus(path) -> list[Passage]:
    """Read a JSONL corpus of ``{"id", "url", "text"}`` records."""
    passages: list[Passage] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                passages.append(Passage.of(rec["id"], rec.get("url", ""), rec["text"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad passage record: {exc}") from exc
    return passages


def build_index(passages: list[Passage], k1: float = 1.2, b: float = 0.75) -> PassageIndex:
    if not passages:
        raise CorpusError("cannot index an empty corpus")
    seen: set[str] = set()
    for p in passages:
        if p.id in seen:
            raise CorpusError(f"duplicate passage id: {p.id!r}")
        seen.add(p.id)
    return PassageIndex(passages, k1=k1, b=b)


def bm25_search(index: PassageIndex, query: Utterance, k: int = 10) -> list[ScoredPassage]:
    """Top-k passages by Okapi BM25; zero-score passages are omitted.

    Ties are broken by passage id ascending so rankings are reproducible.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[int, float] = {}
    for term in query.tokens:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for ordinal, tf in plist:
            dl = index.doc_lengths[ordinal]
            denom = tf + index.k1 * (1.0 - index.b + index.b * dl / index.avgdl)
            scores[ordinal] = scores.get(ordinal, 0.0) + idf * tf * (index.k1 + 1.0) / denom
    ranked = [
        ScoredPassage(passage_id=index.passages[o].id, bm25=s)
        for o, s in scores.items()
        if s > 0.0
    ]
    ranked.sort(key=lambda sp: (-sp.bm25, sp.passage_id))
    return ranked[:k]


_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9“\"'])")


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences; terminal punctuation + whitespace +
    uppercase starts a new one (abbreviations are not special-cased)."""
    spans: list[tuple[int, int]] = []
    start = 0
    for m in _SENTENCE_BOUNDARY.finditer(text):
        spans.append((start, m.start()))
        start = m.end()
    if start < len(text):
        spans.append((start, len(text)))
    return [(s, e) for s, e in spans if text[s:e].strip()]


def extract_span(passage: Passage, query: Utterance) -> tuple[tuple[int, int], float]:
    """Best sentence by content-token overlap with the query.

    Score is |query ∩ sentence| / |query| over content tokens; a query with
    no content tokens scores 0 and the first sentence is returned. Ties go
    to the earliest sentence.
    """
    if not passage.text.strip():
        raise ValueError(f"passage {passage.id!r} is empty")
    sentences = split_sentences(passage.text) or [(0, len(passage.text))]
    qcontent = set(content_tokens(list(query.tokens)))
    if not qcontent:
        return sentences[0], 0.0
    best_span, best_score = sentences[0], -1.0
    for span in sentences:
        scontent = set(content_tokens(passage.text[span[0] : span[1]]))
        score = len(qcontent & scontent) / len(qcontent)
        if score > best_score:
            best_span, best_score = span, score
    return best_span, best_score


def fuse_scores(bm25: float, bm25_max: float, span_score: float, alpha: float = 0.5) -> tuple[float, float]:
    """Affine fusion of max-normalized retrieval score and span score.

    Returns (bm25_norm, fused). A non-positive bm25_max (nothing matched)
    pins bm25_norm to 0 so fused degenerates to the span side.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    bm25_norm = bm25 / bm25_max if bm25_max > 0 else 0.0
    return bm25_norm, alpha * bm25_norm + (1.0 - alpha) * span_score


def answer_factual(
    index: PassageIndex,
    query: Utterance,
    k: int = 10,
    alpha: float = 0.5,
    extract_fn=extract_span,
) -> tuple[ScoredSpan | None, list[ScoredPassage]]:
    """Retrieve, extract a span per passage, fuse, and return the best span.

    Returns (span, retrieval results); span is None when no passage matches
    the query at all (the caller decides what a no-answer means). A plugged
    ``extract_fn`` (same signature as ``extract_span``) replaces the
    baseline extractor; retrieval and fusion are unaffected.
    """
    retrieved = bm25_search(index, query, k)
    if not retrieved:
        return None, []
    bm25_max = retrieved[0].bm25
    best: ScoredSpan | None = None
    for sp in retrieved:
        passage = index.passage_by_id(sp.passage_id)
        (start, end), span_score = extract_fn(passage, query)
        bm25_norm, fused = fuse_scores(sp.bm25, bm25_max, span_score, alpha)
        scored = ScoredSpan(
            passage_id=sp.passage_id,
            start=start,
            end=end,
            text=passage.text[start:end],
            span_score=span_score,
            bm25_norm=bm25_norm,
            fused=fused,
        )
        # Higher fused wins; on a fused tie the smaller passage id wins.
        if best is None or scored.fused > best.fused or (
            scored.fused == best.fused and scored.passage_id < best.passage_id
        ):
            best = scored
    return best, retrieved


_WHEN_RE = re.compile(r"^\s*when\s+(was|did)\s+(.*)$", re.IGNORECASE)
_WHO_RE = re.compile(r"^\s*who\b", re.IGNORECASE)


def _strip_terminal(text: str) -> str:
    return text.rstrip().rstrip(".!?").rstrip()


def cap_words(text: str, limit: int = MAX_RESPONSE_WORDS) -> str:
    """Truncate to the response word bound, restoring a terminal period."""
    words = text.split()
    if len(words) <= limit:
        return text
    return _strip_terminal(" ".join(words[:limit])) + "."


def paraphrase(span_text: str, rewritten_query: Utterance) -> str:
    """Turn an extracted span into a reply with a small template set.

    "when was/did X ..." becomes "X was <span>."; "who ..." becomes
    "It was <span>."; anything else echoes the span as a full sentence.
    Output never exceeds the 30-word response bound.
    """
    if not span_text.strip():
        raise ValueError("span text is empty")
    span = span_text.strip()
    m = _WHEN_RE.match(rewritten_query.text)
    if m:
        focus_words = _strip_terminal(m.group(2)).split()
        while focus_words and focus_words[-1].lower() in STOPWORDS:
            focus_words.pop()
        if focus_words:
            focus = " ".join(focus_words)
            focus = focus[0].upper() + focus[1:]
            return cap_words(f"{focus} was {_strip_terminal(span)}.")
    elif _WHO_RE.match(rewritten_query.text):
        return cap_words(f"It was {_strip_terminal(span)}.")
    if not span.endswith((".", "!", "?")):
        span += "."
    return cap_words(span)


def save_index(index: PassageIndex, path) -> None:
    """Versioned binary dump; byte-stable for identical corpus and params."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHddI", _MAGIC, _VERSION, index.k1, index.b, index.N))
        for p in index.passages:
            for field in (p.id, p.url, p.text):
                raw = field.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)


def load_index(path) -> PassageIndex:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<4sHddI"))
        if len(head) < struct.calcsize("<4sHddI"):
            raise CorpusError(f"{path}: truncated index file")
        magic, version, k1, b, n = struct.unpack("<4sHddI", head)
        if magic != _MAGIC:
            raise CorpusError(f"{path}: not an index file")
        if version != _VERSION:
            raise CorpusError(f"{path}: unsupported index version {version}")
        passages: list[Passage] = []
        for _ in range(n):
            fields: list[str] = []
            for _ in range(3):
                (length,) = struct.unpack("<I", fh.read(4))
                fields.append(fh.read(length).decode("utf-8"))
            passages.append(Passage.of(*fields))
    return build_index(passages, k1=k1, b=b)
