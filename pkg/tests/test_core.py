from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chatpipe.core import (
    ConversationState,
    Entity,
    IncompleteTurnError,
    Route,
    Turn,
    Utterance,
    append_turn,
    context_window,
    decay_and_merge,
    tokenize,
)


@pytest.mark.parametrize(
    "text,expected",
    [
        ("", []),
        ("Who sang Skyfall?", ["who", "sang", "skyfall"]),
        ("don't stop Believin'!", ["don't", "stop", "believin"]),
        ("A—B, c;d", ["a", "b", "c", "d"]),
        ("it’s fine", ["it's", "fine"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


@given(st.text(max_size=200))
def test_tokenize_idempotent_on_joined_output(s):
    tokens = tokenize(s)
    assert tokenize(" ".join(tokens)) == tokens


def _turn(response="ok", user="hi"):
    return Turn(
        user=Utterance.of(user),
        rewritten=Utterance.of(user),
        route=Route.SUBJECTIVE,
        response=response,
    )


def test_append_turn_grows_by_one():
    state = ConversationState(session_id="s")
    state = append_turn(state, _turn())
    assert len(state.turns) == 1
    for _ in range(8):
        state = append_turn(state, _turn())
    state = append_turn(state, _turn())
    assert len(state.turns) == 10


def test_append_same_turn_twice_keeps_both():
    state = ConversationState(session_id="s")
    t = _turn()
    state = append_turn(append_turn(state, t), t)
    assert len(state.turns) == 2


def test_append_incomplete_turn_rejected():
    with pytest.raises(IncompleteTurnError):
        append_turn(ConversationState(session_id="s"), _turn(response=""))


def test_context_window():
    state = ConversationState(session_id="s")
    assert context_window(state, 3) == []
    for i in range(5):
        state = append_turn(state, _turn(user=f"u{i}", response=f"r{i}"))
    assert context_window(state, 3) == [("u2", "r2"), ("u3", "r3"), ("u4", "r4")]
    assert context_window(state, 10) == [(f"u{i}", f"r{i}") for i in range(5)]
    with pytest.raises(ValueError):
        context_window(state, 0)


@given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=12))
def test_context_window_bounds_and_order(n, turns):
    state = ConversationState(session_id="s")
    for i in range(turns):
        state = append_turn(state, _turn(user=f"u{i}", response=f"r{i}"))
    window = context_window(state, n)
    assert len(window) == min(n, turns)
    assert window == sorted(window, key=lambda p: int(p[0][1:]))


def test_decay_and_merge_arithmetic():
    a = Entity(surface="A", salience=1.0)
    (decayed,) = decay_and_merge([a], [], gamma=0.5)
    assert decayed.salience == 0.5


def test_decay_and_merge_remention_resets():
    a = Entity(surface="A", salience=0.5)
    (merged,) = decay_and_merge([a], [Entity(surface="A")])
    assert merged.salience == 1.0


def test_decay_and_merge_new_entity_front():
    a = Entity(surface="A", salience=1.0)
    stack = decay_and_merge([a], [Entity(surface="B")], gamma=0.5)
    assert [(e.surface, e.salience) for e in stack] == [("B", 1.0), ("A", 0.5)]


def test_salience_tie_breaks_recency_then_surface():
    stack = decay_and_merge(
        [],
        [
            Entity(surface="Zeta", last_turn=1),
            Entity(surface="Alpha", last_turn=1),
            Entity(surface="Mid", last_turn=2),
        ],
    )
    assert [e.surface for e in stack] == ["Mid", "Alpha", "Zeta"]
