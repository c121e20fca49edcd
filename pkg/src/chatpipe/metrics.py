"""Evaluation metrics: corpus perplexity, sensibleness/specificity
aggregation, rank metrics (MRR, Recall@k), and text-overlap metrics
(token F1, exact match, ROUGE-1/L). All text metrics run on the shared
tokenizer so they agree with the rest of the engine.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .core import tokenize

__all__ = [
    "PplRecord",
    "RankJudgment",
    "SsaLabel",
    "SsaResult",
    "embedding_similarity",
    "exact_match",
    "load_ssa_labels",
    "mrr",
    "perplexity",
    "recall_at_k",
    "rouge",
    "ssa",
    "ssa_from_rates",
    "token_f1",
]


@dataclass(frozen=True)
class PplRecord:
    """Natural-log token probabilities for one sequence."""

    logprobs: tuple[float, ...]

    def __post_init__(self):
        for lp in self.logprobs:
            if not (lp <= 0.0) or math.isinf(lp) or math.isnan(lp):
                raise ValueError(f"log-probabilities must be finite and <= 0, got {lp}")


@dataclass(frozen=True)
class SsaLabel:
    sensible: int
    specific: int
    annotator: str = ""
    turn: str = ""

    def __post_init__(self):
        if self.sensible not in (0, 1) or self.specific not in (0, 1):
            raise ValueError("sensible and specific must be 0 or 1")
        if self.specific == 1 and self.sensible == 0:
            raise ValueError("a response judged not sensible cannot be specific")


@dataclass(frozen=True)
class RankJudgment:
    ranked: tuple[str, ...]
    relevant: frozenset[str]

    def __post_init__(self):
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError("ranked ids must be unique")


def perplexity(records: list[PplRecord]) -> float:
    """Token-weighted corpus perplexity: exp(total NLL / total tokens)."""
    total = sum(sum(r.logprobs) for r in records)
    count = sum(len(r.logprobs) for r in records)
    if count == 0:
        raise ValueError("perplexity needs at least one token")
    return math.exp(-total / count)


def _round2(value: Decimal) -> float:
    return float(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class SsaResult:
    sensibleness: float
    specificity: float
    ssa: float
    sensibleness_rounded: float
    specificity_rounded: float
    ssa_rounded: float


def ssa_from_rates(sensibleness: float, specificity: float) -> SsaResult:
    """Average the two percentage rates; rounding is half-up to 2 decimals.

    The rounded average is computed in decimal space so that exact halves
    (e.g. 86.165) round up rather than falling to binary-float noise.
    """
    sens_d = Decimal(str(sensibleness))
    spec_d = Decimal(str(specificity))
    ssa_d = (sens_d + spec_d) / 2
    return SsaResult(
        sensibleness=sensibleness,
        specificity=specificity,
        ssa=(sensibleness + specificity) / 2,
        sensibleness_rounded=_round2(sens_d),
        specificity_rounded=_round2(spec_d),
        ssa_rounded=_round2(ssa_d),
    )


def ssa(labels: list[SsaLabel]) -> SsaResult:
    if not labels:
        raise ValueError("no labels")
    sens = 100.0 * sum(l.sensible for l in labels) / len(labels)
    spec = 100.0 * sum(l.specific for l in labels) / len(labels)
    return ssa_from_rates(sens, spec)


def load_ssa_labels(path) -> list[SsaLabel]:
    """Read ``{"turn", "annotator", "sensible", "specific"}`` JSON lines."""
    labels: list[SsaLabel] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                labels.append(
                    SsaLabel(
                        sensible=int(rec["sensible"]),
                        specific=int(rec["specific"]),
                        annotator=str(rec.get("annotator", "")),
                        turn=str(rec.get("turn", "")),
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad label record: {exc}") from exc
    return labels


def embedding_similarity(prediction: str, gold: str, scorer) -> float:
    """Delegate to an externally supplied embedding scorer.

    No embedding model ships with the package; this is the hook an external
    similarity metric plugs into. The scorer must return a cosine-like value
    in [-1, 1].
    """
    value = float(scorer(prediction, gold))
    if not -1.0 <= value <= 1.0:
        raise ValueError(f"embedding scorer returned {value}, expected [-1, 1]")
    return value


def recall_at_k(judgments: list[RankJudgment], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not judgments:
        return 0.0
    hits = sum(1 for j in judgments if not j.relevant.isdisjoint(j.ranked[:k]))
    return hits / len(judgments)


def mrr(judgments: list[RankJudgment]) -> float:
    if not judgments:
        return 0.0
    total = 0.0
    for j in judgments:
        for rank, item in enumerate(j.ranked, 1):
            if item in j.relevant:
                total += 1.0 / rank
                break
    return total / len(judgments)


def _overlap_f1(pred: list[str], gold: list[str], overlap: int) -> float:
    if not pred and not gold:
        return 1.0
    if not pred or not gold or overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, gold: str) -> float:
    """SQuAD-style multiset token overlap F1."""
    pred, gol = tokenize(prediction), tokenize(gold)
    overlap = sum((Counter(pred) & Counter(gol)).values())
    return _overlap_f1(pred, gol, overlap)


def exact_match(prediction: str, gold: str) -> int:
    return int(tokenize(prediction) == tokenize(gold))


def _lcs_len(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge(prediction: str, gold: str) -> tuple[float, float]:
    """(ROUGE-1 F1, ROUGE-L F1) over shared-tokenizer tokens."""
    pred, gol = tokenize(prediction), tokenize(gold)
    unigram_overlap = sum((Counter(pred) & Counter(gol)).values())
    rouge1 = _overlap_f1(pred, gol, unigram_overlap)
    rouge_l = _overlap_f1(pred, gol, _lcs_len(pred, gol))
    return rouge1, rouge_l
