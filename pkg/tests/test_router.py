from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chatpipe.core import Route
from chatpipe.router import (
    LabeledQuestion,
    RouterConfig,
    RouterModel,
    eval_router_f1,
    featurize,
    load_model,
    route,
    save_model,
    score_factual,
    train_router,
)

TOY = [
    LabeledQuestion("when was X released", 1),
    LabeledQuestion("do you like X", 0),
] * 50


def test_featurize_empty():
    assert featurize("", dim=256) == []


def test_featurize_counts_unigrams_and_bigram():
    active = featurize("who sang", dim=1 << 18)
    assert 1 <= len(active) <= 3  # 2 unigrams + 1 bigram, minus collisions


def test_featurize_deterministic():
    assert featurize("who sang skyfall") == featurize("who sang skyfall")


def test_featurize_requires_power_of_two():
    with pytest.raises(ValueError):
        featurize("x", dim=100)


def test_zero_model_scores_half():
    model = RouterModel.zeros(dim=1 << 10)
    assert score_factual(model, "anything at all") == 0.5


def test_margin_ln3_scores_three_quarters():
    model = RouterModel.zeros(dim=1 << 10)
    model.bias = math.log(3)
    assert score_factual(model, "whatever") == pytest.approx(0.75, abs=1e-12)


@pytest.mark.parametrize(
    "score,expected",
    [(0.83, Route.FACTUAL), (0.79, Route.SUBJECTIVE), (0.80, Route.FACTUAL)],
)
def test_route_threshold(score, expected):
    assert route(score, RouterConfig(threshold=0.8)) is expected


@given(st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=1))
def test_route_monotone(a, b):
    config = RouterConfig(threshold=0.8)
    lo, hi = min(a, b), max(a, b)
    if route(lo, config) is Route.FACTUAL:
        assert route(hi, config) is Route.FACTUAL


@given(st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=1),
       st.floats(min_value=0, max_value=1))
def test_raising_threshold_never_adds_factual(score, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    if route(score, RouterConfig(threshold=lo)) is Route.SUBJECTIVE:
        assert route(score, RouterConfig(threshold=hi)) is Route.SUBJECTIVE


def test_train_rejects_empty_and_single_class():
    with pytest.raises(ValueError):
        train_router([])
    with pytest.raises(ValueError):
        train_router([LabeledQuestion("a", 1), LabeledQuestion("b", 1)])


def test_toy_separable_set_learned():
    model = train_router(TOY, dim=1 << 12, seed=3)
    correct = sum(
        1
        for q in TOY
        if (score_factual(model, q.text) >= 0.5) == bool(q.label)
    )
    assert correct == len(TOY)
    assert score_factual(model, "when was X released") > 0.9
    assert eval_router_f1(model, TOY) == 1.0


def test_training_deterministic_bit_equal(tmp_path):
    m1 = train_router(TOY, dim=1 << 12, seed=11)
    m2 = train_router(TOY, dim=1 << 12, seed=11)
    assert np.array_equal(m1.weights, m2.weights)
    assert m1.bias == m2.bias
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_model(m1, p1)
    save_model(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_probabilities_stay_in_open_interval():
    model = train_router(TOY, dim=1 << 12, seed=0)
    for q in TOY:
        assert 0.0 < score_factual(model, q.text) < 1.0


def test_f1_hand_arithmetic():
    # TP=2, FP=1, FN=1 -> P = R = 2/3 -> F1 = 2/3
    model = RouterModel.zeros(dim=1 << 10)
    idx_yes = featurize("yes", dim=1 << 10)
    model.weights[idx_yes] = 10.0
    data = [
        LabeledQuestion("yes alpha", 1),   # predicted factual, TP
        LabeledQuestion("yes beta", 1),    # TP
        LabeledQuestion("yes gamma", 0),   # FP
        LabeledQuestion("plain", 1),       # predicted subjective, FN
        LabeledQuestion("other", 0),       # TN
    ]
    f1 = eval_router_f1(model, data, RouterConfig(threshold=0.8))
    assert f1 == pytest.approx(2 / 3, abs=1e-9)


def test_f1_degenerate_cases():
    model = RouterModel.zeros(dim=1 << 10)   # scores 0.5 < 0.8: predicts nothing
    data = [LabeledQuestion("a", 1), LabeledQuestion("b", 0)]
    assert eval_router_f1(model, data) == 0.0


def test_model_file_round_trip(tmp_path):
    model = train_router(TOY, dim=1 << 12, seed=5)
    path = tmp_path / "model.bin"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.dim == model.dim
    assert loaded.hash_seed == model.hash_seed
    assert loaded.bias == pytest.approx(model.bias)
    assert np.array_equal(loaded.weights, model.weights)
    assert score_factual(loaded, "when was X released") == score_factual(
        model, "when was X released"
    )


def test_model_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_model(path)
