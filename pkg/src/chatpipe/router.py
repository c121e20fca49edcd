"""Factual-vs-subjective question routing.

A hashed bag-of-ngrams logistic model scores the probability that a
rewritten question is knowledge-seeking; the pipeline routes at a
configurable threshold (default 0.8, inclusive).
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import Route, tokenize

__all__ = [
    "LabeledQuestion",
    "RouterConfig",
    "RouterModel",
    "eval_router_f1",
    "featurize",
    "load_model",
    "route",
    "save_model",
    "score_factual",
    "train_router",
]

_MAGIC = b"CPRM"
_VERSION = 1
_HEADER = struct.Struct("<4sHIqd")  # magic, version, D, seed, bias


@dataclass(frozen=True)
class RouterConfig:
    threshold: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")


@dataclass(frozen=True)
class LabeledQuestion:
    text: str
    label: int  # 1 factual, 0 subjective

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass
class RouterModel:
    weights: np.ndarray  # float32, length D
    bias: float
    dim: int
    hash_seed: int

    @classmethod
    def zeros(cls, dim: int = 1 << 18, hash_seed: int = 0) -> "RouterModel":
        _check_dim(dim)
        return cls(weights=np.zeros(dim, dtype=np.float32), bias=0.0, dim=dim, hash_seed=hash_seed)


def _check_dim(dim: int) -> None:
    if dim < 2 or dim & (dim - 1):
        raise ValueError(f"feature dimension must be a power of two, got {dim}")


def _bucket(feature: str, dim: int, hash_seed: int) -> int:
    digest = hashlib.blake2b(
        feature.encode("utf-8"), digest_size=8, key=str(hash_seed).encode()
    ).digest()
    return int.from_bytes(digest, "little") & (dim - 1)


def featurize(text: str, dim: int = 1 << 18, hash_seed: int = 0) -> list[int]:
    """Active bucket indices for unigrams and bigrams (deduplicated)."""
    _check_dim(dim)
    tokens = tokenize(text)
    feats = list(tokens)
    feats.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return sorted({_bucket(f, dim, hash_seed) for f in feats})


def score_factual(model: RouterModel, text: str) -> float:
    """P(factual) via the logistic of the hashed-feature margin."""
    idx = featurize(text, model.dim, model.hash_seed)
    margin = float(model.weights[idx].sum()) + model.bias
    return 1.0 / (1.0 + math.exp(-margin))


def route(score: float, config: RouterConfig) -> Route:
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score must lie in [0, 1], got {score}")
    return Route.FACTUAL if score >= config.threshold else Route.SUBJECTIVE


def train_router(
    data: list[LabeledQuestion],
    epochs: int = 5,
    learning_rate: float = 0.1,
    dim: int = 1 << 18,
    seed: int = 0,
) -> RouterModel:
    """Logistic SGD with a 1/sqrt(t) step-size decay; deterministic per seed."""
    if not data:
        raise ValueError("training data is empty")
    labels = {d.label for d in data}
    if labels != {0, 1}:
        raise ValueError(f"training data must contain both classes, saw labels {sorted(labels)}")

    model = RouterModel.zeros(dim=dim, hash_seed=seed)
    features = [featurize(d.text, dim, seed) for d in data]
    rng = np.random.default_rng(seed)
    order = np.arange(len(data))
    step = 0
    for _ in range(epochs):
        rng.shuffle(order)
        for i in order:
            step += 1
            lr = learning_rate / math.sqrt(step)
            idx = features[i]
            margin = float(model.weights[idx].sum()) + model.bias
            p = 1.0 / (1.0 + math.exp(-margin))
            g = np.float32(lr * (p - data[i].label))
            model.weights[idx] -= g
            model.bias -= float(g)
    return model


def eval_router_f1(
    model: RouterModel,
    data: list[LabeledQuestion],
    config: RouterConfig = RouterConfig(),
) -> float:
    """Binary F1 with the factual class positive, decisions at the threshold."""
    if not data:
        raise ValueError("evaluation data is empty")
    tp = fp = fn = 0
    for d in data:
        predicted = route(score_factual(model, d.text), config) is Route.FACTUAL
        if predicted and d.label == 1:
            tp += 1
        elif predicted and d.label == 0:
            fp += 1
        elif not predicted and d.label == 1:
            fn += 1
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def save_model(model: RouterModel, path) -> None:
    """Versioned binary: header (magic, version, D, seed, bias) then float32 LE weights."""
    header = _HEADER.pack(_MAGIC, _VERSION, model.dim, model.hash_seed, model.bias)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.weights.astype("<f4").tobytes())


def load_model(path) -> RouterModel:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated model file")
        magic, version, dim, seed, bias = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a router model file")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        payload = fh.read()
    weights = np.frombuffer(payload, dtype="<f4")
    if weights.shape[0] != dim:
        raise ValueError(f"{path}: expected {dim} weights, found {weights.shape[0]}")
    return RouterModel(weights=weights.copy(), bias=bias, dim=dim, hash_seed=seed)


def load_training_jsonl(path) -> list[LabeledQuestion]:
    """Read ``{"text": ..., "label": 0|1}`` JSON lines."""
    out: list[LabeledQuestion] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(LabeledQuestion(text=rec["text"], label=int(rec["label"])))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad training record: {exc}") from exc
    return out
