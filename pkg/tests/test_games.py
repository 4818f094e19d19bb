import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_mccfr.games import CHANCE, TERMINAL, IllegalActionError, KuhnPoker, LeducPoker, get_game
from robust_mccfr.tree import GameTree, get_tree

FOLD, CALL, RAISE = 0, 1, 2


def deal(game, cards):
    state = game.initial_state()
    for s, _ in game.initial_chance_outcomes():
        if s.cards == cards:
            state = s
            break
    return state


@pytest.mark.parametrize("name,count", [("kuhn", 12), ("leduc", 936)])
def test_infoset_counts(name, count):
    keys = get_game(name).enumerate_infosets()
    assert len(keys) == count
    assert len(set(keys)) == count
    assert sum(k.player == 0 for k in keys) == count // 2


def test_unknown_game():
    with pytest.raises(ValueError):
        get_game("holdem")


@pytest.mark.parametrize("name", ["kuhn", "leduc"])
def test_features_are_injective(name):
    game = get_game(name)
    keys = game.enumerate_infosets()
    feats = {tuple(game.encode_features(k)) for k in keys}
    assert len(feats) == len(keys)
    assert all(len(f) == game.input_size for f in feats)


@pytest.mark.parametrize("name", ["kuhn", "leduc"])
def test_chance_probabilities_sum_to_one(name):
    tree = get_tree(name)
    for node, probs in enumerate(tree.chance_probs):
        if tree.player[node] == CHANCE:
            assert sum(probs) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", ["kuhn", "leduc"])
def test_zero_sum(name):
    game = get_game(name)
    tree = get_tree(name)
    for node in tree.terminals:
        s = tree.states[node]
        assert game.utility(s, 0) == -game.utility(s, 1)


def test_kuhn_payoffs():
    g = KuhnPoker()
    s = deal(g, (2, 0))
    PASS, BET = 0, 1
    assert g.utility(g.apply(g.apply(s, PASS), PASS), 0) == 1.0
    assert g.utility(g.apply(g.apply(s, BET), BET), 0) == 2.0
    assert g.utility(g.apply(g.apply(s, BET), PASS), 0) == 1.0
    assert g.utility(g.apply(g.apply(g.apply(s, PASS), BET), PASS), 0) == -1.0
    assert g.utility(g.apply(g.apply(g.apply(s, PASS), BET), BET), 1) == -2.0


def test_kuhn_terminal_and_illegal():
    g = KuhnPoker()
    s = deal(g, (0, 1))
    t = g.apply(g.apply(s, 0), 0)
    assert t.is_terminal and t.player == TERMINAL
    with pytest.raises(IllegalActionError):
        g.apply(t, 0)
    with pytest.raises(IllegalActionError):
        g.apply(s, 5)
    with pytest.raises(ValueError):
        g.utility(s, 0)


def _leduc_play(g, cards, community, actions):
    state = deal(g, cards)
    for a in actions:
        state = g.apply(state, a)
        if state.is_chance:
            state = next(s for s, _ in g.chance_outcomes(state) if s.community == community)
    return state


def test_leduc_fold_only_when_facing_bet():
    g = LeducPoker()
    s = deal(g, (0, 2))
    assert g.legal_actions(s) == [CALL, RAISE]
    s2 = g.apply(s, RAISE)
    assert g.legal_actions(s2) == [FOLD, CALL, RAISE]
    with pytest.raises(IllegalActionError):
        g.apply(s, FOLD)


def test_leduc_raise_cap_and_sizes():
    g = LeducPoker()
    s = _leduc_play(g, (0, 2), 4, [RAISE, RAISE])
    assert RAISE not in g.legal_actions(s)
    assert s.pot == (3, 5)
    s = _leduc_play(g, (0, 2), 4, [CALL, CALL, RAISE])
    assert s.street == 1 and s.pot == (5, 1)


def test_leduc_pair_beats_high_card():
    g = LeducPoker()
    # player 0 holds a jack and pairs the jack on board; player 1 holds a king
    s = _leduc_play(g, (0, 4), 1, [CALL, CALL, CALL, CALL])
    assert s.is_terminal
    assert g.utility(s, 0) == 1.0
    s = _leduc_play(g, (0, 4), 2, [CALL, CALL, CALL, CALL])
    assert g.utility(s, 0) == -1.0


def test_leduc_tie_splits():
    g = LeducPoker()
    s = _leduc_play(g, (4, 5), 0, [RAISE, CALL, RAISE, CALL])
    assert s.is_terminal and g.utility(s, 0) == 0.0


def test_leduc_fold_payoff():
    g = LeducPoker()
    s = _leduc_play(g, (0, 2), None, [RAISE, FOLD])
    assert s.is_terminal
    assert g.utility(s, 0) == 1.0 and g.utility(s, 1) == -1.0


def test_infoset_key_string():
    g = LeducPoker()
    s = _leduc_play(g, (0, 2), 4, [CALL, RAISE, CALL])
    assert str(g.infoset_key(s)) == "0|0|4|crc/"


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_random_playouts_respect_rules(data):
    g = LeducPoker()
    state = g.initial_state()
    while not state.is_terminal:
        if state.is_chance:
            outs = g.chance_outcomes(state)
            assert sum(p for _, p in outs) == pytest.approx(1.0)
            state = outs[data.draw(st.integers(0, len(outs) - 1))][0]
            continue
        legal = g.legal_actions(state)
        assert legal and set(legal) <= {FOLD, CALL, RAISE}
        key = g.infoset_key(state)
        assert key.card == state.cards[state.player]
        state = g.apply(state, data.draw(st.sampled_from(legal)))
    u = g.utility(state, 0)
    assert u == -g.utility(state, 1)
    assert abs(u) <= 13


def test_tree_matches_enumeration():
    for name in ("kuhn", "leduc"):
        tree = GameTree(get_game(name))
        assert set(tree.keys) == set(get_game(name).enumerate_infosets())
        assert tree.features.shape == (len(tree.keys), get_game(name).input_size)
        assert np.array_equal(tree.masks.sum(axis=1), [len(a) for a in tree.legal])


def test_enumeration_is_fast():
    start = time.perf_counter()
    LeducPoker().enumerate_infosets()
    assert time.perf_counter() - start < 1.0
