"""Subjective response generation.

Decoding (beam search, top-k sampling) is written against an abstract
next-token-distribution contract so any language model can sit behind it.
A similarity-based response bank serves as the default generator so the
pipeline runs with no model at all.

Beam search here keeps finished hypotheses competing for beam slots and,
for widths above one, retains the best result across all narrower widths;
that makes the returned log-probability monotone in the beam width by
construction, a guarantee plain width-w pruning does not give.
"""
from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .core import Candidate, ConversationState, Utterance, tokenize

__all__ = [
    "DecodeConfig",
    "DecodeMode",
    "LmBackend",
    "ResponseBank",
    "UniformLm",
    "ZeroProbabilityError",
    "beam_decode",
    "generate_candidates",
    "greedy_decode",
    "sequence_logprob",
    "topk_decode",
]


class ZeroProbabilityError(ValueError):
    """A scored token had probability zero under the backend."""


@runtime_checkable
class LmBackend(Protocol):
    """Next-token distribution contract.

    ``vocabulary`` lists every token string including the reserved
    end-of-sequence token; ``next_distribution`` maps a token prefix to a
    probability vector over the vocabulary (non-negative, summing to 1
    within 1e-6).
    """

    vocabulary: Sequence[str]
    eos_token: str

    def next_distribution(self, prefix: Sequence[str]) -> Sequence[float]:
        ...


class UniformLm:
    """Uniform distribution over a fixed vocabulary; handy for tests and
    as a stand-in log-probability source for perplexity reports."""

    def __init__(self, vocabulary: Sequence[str], eos_token: str = "</s>"):
        if eos_token not in vocabulary:
            vocabulary = list(vocabulary) + [eos_token]
        self.vocabulary = list(vocabulary)
        self.eos_token = eos_token

    def next_distribution(self, prefix: Sequence[str]) -> list[float]:
        return [1.0 / len(self.vocabulary)] * len(self.vocabulary)


class DecodeMode(enum.Enum):
    BEAM = "beam"
    TOPK = "topk"


@dataclass(frozen=True)
class DecodeConfig:
    mode: DecodeMode = DecodeMode.BEAM
    beam_width: int = 4
    k: int = 10
    max_len: int = 32
    seed: int = 0
    length_normalize: bool = False

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


def _check_backend(backend: LmBackend, prompt: Sequence[str]) -> dict[str, int]:
    vocab = list(backend.vocabulary)
    if not vocab:
        raise ValueError("backend vocabulary is empty")
    ids = {tok: i for i, tok in enumerate(vocab)}
    if backend.eos_token not in ids:
        raise ValueError("end-of-sequence token missing from vocabulary")
    for tok in prompt:
        if tok not in ids:
            raise ValueError(f"prompt token {tok!r} not in vocabulary")
    return ids


@dataclass(frozen=True)
class _Hyp:
    ids: tuple[int, ...]  # generated token ids, EOS included when finished
    score: float
    finished: bool

    def sort_key(self) -> tuple[float, tuple[int, ...]]:
        return (-self.score, self.ids)


def _beam_once(
    backend: LmBackend,
    prompt: Sequence[str],
    width: int,
    max_len: int,
    ids: dict[str, int],
    dist_cache: dict[tuple[str, ...], Sequence[float]],
) -> _Hyp:
    vocab = list(backend.vocabulary)
    eos_id = ids[backend.eos_token]
    beam = [_Hyp(ids=(), score=0.0, finished=False)]
    for _ in range(max_len):
        if all(h.finished for h in beam):
            break
        candidates: list[_Hyp] = []
        for hyp in beam:
            if hyp.finished:
                candidates.append(hyp)
                continue
            prefix = tuple(prompt) + tuple(vocab[i] for i in hyp.ids)
            dist = dist_cache.get(prefix)
            if dist is None:
                dist = backend.next_distribution(list(prefix))
                dist_cache[prefix] = dist
            for tok_id, p in enumerate(dist):
                if p <= 0.0:
                    continue
                candidates.append(
                    _Hyp(
                        ids=hyp.ids + (tok_id,),
                        score=hyp.score + math.log(p),
                        finished=tok_id == eos_id,
                    )
                )
        if len(candidates) > width:
            candidates.sort(key=_Hyp.sort_key)
            beam = candidates[:width]
        else:
            beam = candidates
    return min(beam, key=_Hyp.sort_key)


def beam_decode(
    backend: LmBackend,
    prompt: Sequence[str],
    config: DecodeConfig,
) -> tuple[list[str], float]:
    """Length-bounded beam search maximizing total log-probability.

    Returns (continuation tokens without the end-of-sequence marker, total
    log-probability including the end-of-sequence step when one was taken).
    Ties break lexicographically on token ids.
    """
    ids = _check_backend(backend, prompt)
    vocab = list(backend.vocabulary)
    eos_id = ids[backend.eos_token]
    best: _Hyp | None = None
    dist_cache: dict[tuple[str, ...], Sequence[float]] = {}
    for width in range(1, config.beam_width + 1):
        hyp = _beam_once(backend, prompt, width, config.max_len, ids, dist_cache)
        if best is None or hyp.sort_key() < best.sort_key():
            best = hyp
    out = [vocab[i] for i in best.ids if i != eos_id]
    score = best.score
    if config.length_normalize and best.ids:
        score = score / len(best.ids)
    return out, score


def greedy_decode(backend: LmBackend, prompt: Sequence[str], max_len: int) -> list[str]:
    """Argmax decoding (ties to the smaller token id); reference for beam-1."""
    ids = _check_backend(backend, prompt)
    vocab = list(backend.vocabulary)
    out: list[str] = []
    for _ in range(max_len):
        dist = backend.next_distribution(list(prompt) + out)
        tok_id = max(range(len(vocab)), key=lambda i: (dist[i], -i))
        if vocab[tok_id] == backend.eos_token:
            break
        out.append(vocab[tok_id])
    return out


def topk_decode(backend: LmBackend, prompt: Sequence[str], config: DecodeConfig) -> list[str]:
    """Sample from the renormalized top-k token set at each step.

    The pseudo-random stream is fully determined by ``config.seed``; the
    walk stops at the end-of-sequence token or at ``max_len``.
    """
    ids = _check_backend(backend, prompt)
    vocab = list(backend.vocabulary)
    if config.k > len(vocab):
        raise ValueError(f"k={config.k} exceeds vocabulary size {len(vocab)}")
    rng = random.Random(config.seed)
    out: list[str] = []
    for _ in range(config.max_len):
        dist = backend.next_distribution(list(prompt) + out)
        top = sorted(range(len(vocab)), key=lambda i: (-dist[i], i))[: config.k]
        mass = sum(dist[i] for i in top)
        r = rng.random() * mass
        acc = 0.0
        chosen = top[-1]
        for i in top:
            acc += dist[i]
            if r < acc:
                chosen = i
                break
        if vocab[chosen] == backend.eos_token:
            break
        out.append(vocab[chosen])
    return out


def sequence_logprob(
    backend: LmBackend, tokens: Sequence[str], prompt: Sequence[str] = ()
) -> float:
    """Sum of per-token log-probabilities under the backend."""
    ids = _check_backend(backend, list(prompt) + list(tokens))
    total = 0.0
    for i, tok in enumerate(tokens):
        dist = backend.next_distribution(list(prompt) + list(tokens[:i]))
        p = dist[ids[tok]]
        if p <= 0.0:
            raise ZeroProbabilityError(f"token {tok!r} at position {i} has probability 0")
        total += math.log(p)
    return total


class ResponseBank:
    """(context, response) pairs with log-scaled term weights for cosine
    similarity lookup; insertion order is the documented tie-break."""

    def __init__(self, pairs: list[tuple[str, str]]):
        self.pairs = list(pairs)
        self._df: dict[str, int] = {}
        token_lists = [tokenize(ctx) for ctx, _ in self.pairs]
        for toks in token_lists:
            for t in set(toks):
                self._df[t] = self._df.get(t, 0) + 1
        self._vectors = [self._vector(toks) for toks in token_lists]

    def __len__(self) -> int:
        return len(self.pairs)

    def _vector(self, tokens: list[str]) -> dict[str, float]:
        n = len(self.pairs)
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        vec: dict[str, float] = {}
        for t, tf in counts.items():
            df = self._df.get(t)
            if not df:
                continue
            w = math.log(1.0 + tf) * math.log(n / df)
            if w != 0.0:
                vec[t] = w
        return vec

    def similarity(self, query_tokens: list[str], index: int) -> float:
        q = self._vector(query_tokens)
        d = self._vectors[index]
        if not q or not d:
            return 0.0
        dot = sum(w * d.get(t, 0.0) for t, w in q.items())
        qn = math.sqrt(sum(w * w for w in q.values()))
        dn = math.sqrt(sum(w * w for w in d.values()))
        if qn == 0.0 or dn == 0.0:
            return 0.0
        return dot / (qn * dn)

    @classmethod
    def from_jsonl(cls, path) -> "ResponseBank":
        pairs: list[tuple[str, str]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    pairs.append((rec["context"], rec["response"]))
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad bank record: {exc}") from exc
        return cls(pairs)


def generate_candidates(
    state: ConversationState,
    rewritten: Utterance,
    n: int,
    bank: ResponseBank | None = None,
    backend: LmBackend | None = None,
    config: DecodeConfig | None = None,
) -> list[Candidate]:
    """Up to ``n`` response candidates ordered by generation score.

    With a decoding backend configured, beam mode contributes one candidate
    and top-k mode draws ``n`` sampled candidates on consecutive seeds;
    otherwise the response bank supplies the ``n`` most similar responses.
    """
    if n < 1:
        raise ValueError("candidate count must be >= 1")
    if backend is not None:
        config = config or DecodeConfig()
        prompt = [t for t in rewritten.tokens if t in set(backend.vocabulary)]
        if config.mode is DecodeMode.BEAM:
            tokens, score = beam_decode(backend, prompt, config)
            return [Candidate(text=" ".join(tokens), gen_score=score)]
        cands: list[Candidate] = []
        for i in range(n):
            cfg = DecodeConfig(
                mode=DecodeMode.TOPK, beam_width=config.beam_width, k=config.k,
                max_len=config.max_len, seed=config.seed + i,
            )
            tokens = topk_decode(backend, prompt, cfg)
            try:
                score = sequence_logprob(backend, tokens, prompt=prompt) if tokens else 0.0
            except ZeroProbabilityError:
                score = -math.inf
            cands.append(Candidate(text=" ".join(tokens), gen_score=score))
        cands.sort(key=lambda c: -c.gen_score)
        return cands[:n]
    if bank is None or len(bank) == 0:
        raise ValueError("no response bank and no generation backend configured")
    qtokens = list(rewritten.tokens)
    scored = [
        (bank.similarity(qtokens, i), i)
        for i in range(len(bank))
    ]
    scored.sort(key=lambda si: (-si[0], si[1]))
    return [
        Candidate(text=bank.pairs[i][1], gen_score=sim)
        for sim, i in scored[:n]
    ]
