"""Kuhn and Leduc poker engines behind a common two-player game interface.

States are immutable. Chance nodes are explicit: the pre-deal root and, in
Leduc, the node between the two betting rounds where the community card is
revealed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import permutations
from typing import Optional

import numpy as np

CHANCE = -1
TERMINAL = -2

# Kuhn actions
PASS, BET = 0, 1
# Leduc actions
FOLD, CALL, RAISE = 0, 1, 2


class IllegalActionError(ValueError):
    pass


@dataclass(frozen=True)
class GameState:
    cards: tuple[int, ...]
    community: Optional[int]
    history: tuple[tuple[int, ...], ...]
    street: int
    pot: tuple[int, int]
    player: int

    @property
    def is_terminal(self) -> bool:
        return self.player == TERMINAL

    @property
    def is_chance(self) -> bool:
        return self.player == CHANCE


@dataclass(frozen=True)
class InfoSetKey:
    player: int
    card: int
    community: Optional[int]
    history: str

    def __str__(self) -> str:
        community = "-" if self.community is None else str(self.community)
        return f"{self.player}|{self.card}|{community}|{self.history}"


class Game:
    """Common interface; subclasses define the rules of one poker variant."""

    name: str
    num_actions: int
    input_size: int
    action_names: tuple[str, ...]
    action_letters: str = ""

    def initial_state(self) -> GameState:
        return GameState((), None, ((),), 0, (1, 1), CHANCE)

    def initial_chance_outcomes(self) -> list[tuple[GameState, float]]:
        return self.chance_outcomes(self.initial_state())

    def chance_outcomes(self, state: GameState) -> list[tuple[GameState, float]]:
        raise NotImplementedError

    def legal_actions(self, state: GameState) -> list[int]:
        raise NotImplementedError

    def apply(self, state: GameState, action: int) -> GameState:
        raise NotImplementedError

    def utility(self, state: GameState, player: int) -> float:
        raise NotImplementedError

    def infoset_key(self, state: GameState) -> InfoSetKey:
        raise NotImplementedError

    def encode_features(self, key: InfoSetKey) -> np.ndarray:
        raise NotImplementedError

    def history_string(self, history: tuple[tuple[int, ...], ...]) -> str:
        letters = self.action_letters
        return "/".join("".join(letters[a] for a in street) for street in history)

    def _check_decision(self, state: GameState) -> None:
        if state.player < 0:
            kind = "terminal" if state.is_terminal else "chance"
            raise ValueError(f"{kind} state has no player actions: {state}")

    def enumerate_infosets(self) -> list[InfoSetKey]:
        """All information sets in depth-first order, without duplicates."""
        seen: dict[InfoSetKey, None] = {}
        stack = [self.initial_state()]
        while stack:
            state = stack.pop()
            if state.is_terminal:
                continue
            if state.is_chance:
                stack.extend(s for s, _ in reversed(self.chance_outcomes(state)))
                continue
            seen.setdefault(self.infoset_key(state), None)
            stack.extend(self.apply(state, a) for a in reversed(self.legal_actions(state)))
        return list(seen)

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class KuhnPoker(Game):
    """Three-card Kuhn poker: ante 1, bet 1, a single betting round."""

    name = "kuhn"
    num_actions = 2
    input_size = 15
    action_names = ("Pass", "Bet")
    action_letters = "pb"
    card_names = ("J", "Q", "K")

    def chance_outcomes(self, state):
        if not state.is_chance:
            raise ValueError("not a chance node")
        deals = list(permutations(range(3), 2))
        p = 1.0 / len(deals)
        return [(replace(state, cards=deal, player=0), p) for deal in deals]

    def legal_actions(self, state):
        self._check_decision(state)
        return [PASS, BET]

    def apply(self, state, action):
        if state.player < 0 or action not in (PASS, BET):
            raise IllegalActionError(f"action {action!r} is illegal in {state}")
        hist = state.history[0] + (action,)
        pot = list(state.pot)
        if action == BET:
            pot[state.player] += 1
        if hist in ((PASS, PASS), (BET, PASS), (BET, BET), (PASS, BET, PASS), (PASS, BET, BET)):
            nxt = TERMINAL
        else:
            nxt = 1 - state.player
        return replace(state, history=(hist,), pot=tuple(pot), player=nxt)

    def utility(self, state, player):
        if not state.is_terminal:
            raise ValueError(f"utility of non-terminal state {state}")
        hist = state.history[0]
        if hist[-1] == PASS and BET in hist:
            # the player who passed facing a bet folded
            folder = (len(hist) - 1) % 2
            winner = 1 - folder
        else:
            winner = 0 if state.cards[0] > state.cards[1] else 1
        won = state.pot[1 - winner]
        return float(won if player == winner else -won)

    def infoset_key(self, state):
        self._check_decision(state)
        p = state.player
        return InfoSetKey(p, state.cards[p], None, self.history_string(state.history))

    def encode_features(self, key):
        x = np.zeros(self.input_size)
        x[key.card] = 1.0
        x[3 + key.player] = 1.0
        pot = [1, 1]
        for i, ch in enumerate(key.history):
            a = self.action_letters.index(ch)
            x[5 + 2 * i + a] = 1.0
            if a == BET:
                pot[i % 2] += 1
        x[13] = pot[0] / 2.0
        x[14] = pot[1] / 2.0
        return x


class LeducPoker(Game):
    """Leduc hold'em: six cards, two streets, raises of 2 then 4, at most two
    raises per street."""

    name = "leduc"
    num_actions = 3
    input_size = 48
    action_names = ("Fold", "Call", "Raise")
    action_letters = "fcr"
    # card id c has rank c // 2: Jh Js Qh Qs Kh Ks
    card_names = ("Jh", "Js", "Qh", "Qs", "Kh", "Ks")
    raise_sizes = (2, 4)
    max_raises = 2
    max_contribution = 1 + 2 * 2 + 2 * 4
    history_slots = 8

    def chance_outcomes(self, state):
        if not state.is_chance:
            raise ValueError("not a chance node")
        if not state.cards:
            deals = list(permutations(range(6), 2))
            p = 1.0 / len(deals)
            return [(replace(state, cards=deal, player=0), p) for deal in deals]
        rest = [c for c in range(6) if c not in state.cards]
        p = 1.0 / len(rest)
        return [(replace(state, community=c, player=0), p) for c in rest]

    @staticmethod
    def _raises(street_hist):
        return sum(1 for a in street_hist if a == RAISE)

    def legal_actions(self, state):
        self._check_decision(state)
        if state.pot[0] != state.pot[1]:
            acts = [FOLD, CALL]
            if self._raises(state.history[state.street]) < self.max_raises:
                acts.append(RAISE)
            return acts
        return [CALL, RAISE]

    def apply(self, state, action):
        if state.player < 0 or action not in self.legal_actions(state):
            raise IllegalActionError(f"action {action!r} is illegal in {state}")
        p = state.player
        street_hist = state.history[state.street] + (action,)
        history = state.history[: state.street] + (street_hist,)
        pot = list(state.pot)
        if action == FOLD:
            return replace(state, history=history, player=TERMINAL)
        if action == CALL:
            pot[p] = pot[1 - p]
            closed = len(street_hist) >= 2
        else:
            pot[p] = pot[1 - p] + self.raise_sizes[state.street]
            closed = False
        if not closed:
            return replace(state, history=history, pot=tuple(pot), player=1 - p)
        if state.street == 1:
            return replace(state, history=history, pot=tuple(pot), player=TERMINAL)
        return GameState(state.cards, None, history + ((),), 1, tuple(pot), CHANCE)

    def utility(self, state, player):
        if not state.is_terminal:
            raise ValueError(f"utility of non-terminal state {state}")
        last = state.history[state.street]
        if last and last[-1] == FOLD:
            folder = (len(last) - 1) % 2
            winner = 1 - folder
            won = state.pot[folder]
            return float(won if player == winner else -won)
        c0, c1 = state.cards
        board = state.community // 2
        s0 = (c0 // 2 == board, c0 // 2)
        s1 = (c1 // 2 == board, c1 // 2)
        if s0 == s1:
            return 0.0
        winner = 0 if s0 > s1 else 1
        won = state.pot[1 - winner]
        return float(won if player == winner else -won)

    def infoset_key(self, state):
        self._check_decision(state)
        p = state.player
        return InfoSetKey(p, state.cards[p], state.community, self.history_string(state.history))

    def encode_features(self, key):
        x = np.zeros(self.input_size)
        x[key.card] = 1.0
        x[6 + (6 if key.community is None else key.community)] = 1.0
        streets = key.history.split("/")
        street = len(streets) - 1
        x[13 + street] = 1.0
        x[15 + key.player] = 1.0
        pot = [1, 1]
        slot = 0
        for s, street_hist in enumerate(streets):
            mover = 0
            for ch in street_hist:
                a = self.action_letters.index(ch)
                x[17 + 3 * slot + a] = 1.0
                slot += 1
                if a == CALL:
                    pot[mover] = pot[1 - mover]
                elif a == RAISE:
                    pot[mover] = pot[1 - mover] + self.raise_sizes[s]
                mover = 1 - mover
        x[41] = pot[0] / self.max_contribution
        x[42] = pot[1] / self.max_contribution
        x[43 + self._raises(tuple(self.action_letters.index(c) for c in streets[-1]))] = 1.0
        to_call = pot[1 - key.player] - pot[key.player]
        x[46] = to_call / (pot[0] + pot[1] + to_call)
        x[47] = 1.0 if to_call > 0 else 0.0
        return x


_GAMES = {"kuhn": KuhnPoker, "leduc": LeducPoker}


def get_game(name: str) -> Game:
    try:
        return _GAMES[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; expected one of {sorted(_GAMES)}") from None
