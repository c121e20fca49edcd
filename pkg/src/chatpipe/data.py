"""Conversation dataset schemas, JSONL loaders, and profile validators.

Two validation profiles exist: "qrecc" (rewrite present, contiguous turn
numbering) and "internal-media" (exactly ten turns per conversation,
contiguous numbering, 30-word bound on answers and paraphrases).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum

from .core import tokenize
from .router import LabeledQuestion

__all__ = [
    "DatasetError",
    "DialogTurnRecord",
    "Profile",
    "ValidationReport",
    "Violation",
    "derive_router_training",
    "load_dialog_dataset",
    "save_dialog_dataset",
    "validate_dataset",
]

WORD_BOUND = 30

_REQUIRED = ("conversation_id", "turn_no", "question", "rewrite")


class DatasetError(ValueError):
    pass


class Profile(Enum):
    QRECC = "qrecc"
    INTERNAL_MEDIA = "internal-media"


@dataclass(frozen=True)
class DialogTurnRecord:
    conversation_id: str
    turn_no: int
    question: str
    rewrite: str
    answer: str | None = None
    answer_url: str | None = None
    paraphrase: str | None = None
    is_factual: int | None = None


@dataclass(frozen=True)
class Violation:
    rule: str
    locator: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    record_count: int
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def load_dialog_dataset(path) -> list[DialogTurnRecord]:
    records: list[DialogTurnRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            for key in _REQUIRED:
                if key not in rec:
                    raise DatasetError(f"{path}: line {lineno}: missing field {key!r}")
            turn_no = rec["turn_no"]
            if not isinstance(turn_no, int) or turn_no < 1:
                raise DatasetError(f"{path}: line {lineno}: turn_no must be a positive integer")
            if not str(rec["question"]).strip() or not str(rec["rewrite"]).strip():
                raise DatasetError(f"{path}: line {lineno}: question and rewrite must be non-empty")
            is_factual = rec.get("is_factual")
            if is_factual is not None and is_factual not in (0, 1):
                raise DatasetError(f"{path}: line {lineno}: is_factual must be 0 or 1")
            records.append(
                DialogTurnRecord(
                    conversation_id=str(rec["conversation_id"]),
                    turn_no=turn_no,
                    question=rec["question"],
                    rewrite=rec["rewrite"],
                    answer=rec.get("answer"),
                    answer_url=rec.get("answer_url"),
                    paraphrase=rec.get("paraphrase"),
                    is_factual=is_factual,
                )
            )
    return records


def save_dialog_dataset(records: list[DialogTurnRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row = {k: v for k, v in asdict(rec).items() if v is not None}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _group(records: list[DialogTurnRecord]) -> dict[str, list[DialogTurnRecord]]:
    groups: dict[str, list[DialogTurnRecord]] = {}
    for rec in records:
        groups.setdefault(rec.conversation_id, []).append(rec)
    return groups


def validate_dataset(records: list[DialogTurnRecord], profile: Profile) -> ValidationReport:
    violations: list[Violation] = []
    for conv_id, turns in _group(records).items():
        ordered = sorted(turns, key=lambda t: t.turn_no)
        numbers = [t.turn_no for t in ordered]
        if numbers != list(range(1, len(numbers) + 1)):
            violations.append(
                Violation(
                    rule="numbering",
                    locator=conv_id,
                    message=f"turn numbers must run 1..{len(numbers)} contiguously, got {numbers}",
                )
            )
        seen: set[int] = set()
        for t in turns:
            if t.turn_no in seen:
                violations.append(
                    Violation(
                        rule="duplicate-turn",
                        locator=f"{conv_id}#{t.turn_no}",
                        message="duplicate turn number within conversation",
                    )
                )
            seen.add(t.turn_no)
        if profile is Profile.INTERNAL_MEDIA:
            if len(ordered) != 10:
                violations.append(
                    Violation(
                        rule="turn-count",
                        locator=conv_id,
                        message=f"conversation must have exactly 10 turns, got {len(ordered)}",
                    )
                )
            for t in ordered:
                for name in ("answer", "paraphrase"):
                    value = getattr(t, name)
                    if value is None:
                        continue
                    words = len(tokenize(value))
                    if words > WORD_BOUND:
                        violations.append(
                            Violation(
                                rule="length-bound",
                                locator=f"{conv_id}#{t.turn_no}",
                                message=f"{name} has {words} words, bound is {WORD_BOUND}",
                            )
                        )
        elif profile is Profile.QRECC:
            for t in ordered:
                if not t.rewrite.strip():
                    violations.append(
                        Violation(
                            rule="rewrite-missing",
                            locator=f"{conv_id}#{t.turn_no}",
                            message="rewrite is required",
                        )
                    )
    return ValidationReport(record_count=len(records), violations=tuple(violations))


def derive_router_training(records: list[DialogTurnRecord]) -> tuple[list[LabeledQuestion], int]:
    """(rewrite, is_factual) pairs; unlabeled records are skipped and counted."""
    pairs: list[LabeledQuestion] = []
    skipped = 0
    for rec in records:
        if rec.is_factual is None:
            skipped += 1
            continue
        pairs.append(LabeledQuestion(text=rec.rewrite, label=rec.is_factual))
    if not pairs:
        raise DatasetError("no records carry an is_factual label")
    return pairs, skipped
