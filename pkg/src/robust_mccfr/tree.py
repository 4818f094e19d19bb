"""Flattened game tree shared by the exact solvers and the samplers.

Walking immutable ``GameState`` objects is too slow for the inner loops, so
each game is expanded once into parallel per-node lists. Node 0 is the
pre-deal chance root.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .games import CHANCE, TERMINAL, Game, InfoSetKey, get_game


class GameTree:
    def __init__(self, game: Game):
        self.game = game
        self.keys: list[InfoSetKey] = []
        self.index: dict[InfoSetKey, int] = {}
        self.legal: list[tuple[int, ...]] = []  # per infoset
        self.infoset_player: list[int] = []

        self.player: list[int] = []  # per node
        self.infoset: list[int] = []
        self.children: list[tuple[int, ...]] = []
        self.chance_probs: list[tuple[float, ...]] = []
        self.utility: list[float] = []  # player 0 payoff; zero-sum
        self.parent: list[int] = []
        self.states = []
        self._build(game.initial_state(), -1)

        self.num_infosets = len(self.keys)
        self.features = np.stack([game.encode_features(k) for k in self.keys])
        self.masks = np.zeros((self.num_infosets, game.num_actions), dtype=bool)
        for i, acts in enumerate(self.legal):
            self.masks[i, list(acts)] = True
        self.terminals = [n for n, p in enumerate(self.player) if p == TERMINAL]

    def _build(self, state, parent):
        n = len(self.player)
        self.player.append(state.player)
        self.parent.append(parent)
        self.states.append(state)
        self.infoset.append(-1)
        self.children.append(())
        self.chance_probs.append(())
        self.utility.append(0.0)
        if state.is_terminal:
            self.utility[n] = self.game.utility(state, 0)
            return n
        if state.is_chance:
            outcomes = self.game.chance_outcomes(state)
            self.chance_probs[n] = tuple(p for _, p in outcomes)
            self.children[n] = tuple(self._build(s, n) for s, _ in outcomes)
            return n
        key = self.game.infoset_key(state)
        acts = tuple(self.game.legal_actions(state))
        idx = self.index.get(key)
        if idx is None:
            idx = len(self.keys)
            self.index[key] = idx
            self.keys.append(key)
            self.legal.append(acts)
            self.infoset_player.append(state.player)
        self.infoset[n] = idx
        self.children[n] = tuple(self._build(self.game.apply(state, a), n) for a in acts)
        return n

    @property
    def num_nodes(self) -> int:
        return len(self.player)

    def uniform_profile(self) -> list[np.ndarray]:
        return [np.full(len(a), 1.0 / len(a)) for a in self.legal]

    def to_arrays(self, profile) -> list[np.ndarray]:
        """Accept a key-indexed mapping or an infoset-indexed sequence; missing
        infosets become uniform."""
        if isinstance(profile, dict):
            out = self.uniform_profile()
            for key, dist in profile.items():
                out[self.index[key]] = np.asarray(dist, dtype=float)
            return out
        if len(profile) != self.num_infosets:
            raise ValueError(f"profile covers {len(profile)} infosets, expected {self.num_infosets}")
        return [np.asarray(d, dtype=float) for d in profile]

    def to_dict(self, arrays) -> dict[InfoSetKey, np.ndarray]:
        return {k: np.asarray(arrays[i], dtype=float) for i, k in enumerate(self.keys)}

    def reach_probabilities(self, profile):
        """Per-node reach split into (chance, player 0, player 1) factors."""
        sigma = self.to_arrays(profile)
        n = self.num_nodes
        reach = np.ones((n, 3))
        for node in range(n):
            kids = self.children[node]
            if not kids:
                continue
            p = self.player[node]
            for j, child in enumerate(kids):
                reach[child] = reach[node]
                if p == CHANCE:
                    reach[child, 0] *= self.chance_probs[node][j]
                else:
                    reach[child, 1 + p] *= sigma[self.infoset[node]][j]
        return reach

    def node_values(self, profile) -> np.ndarray:
        """Expected player-0 payoff of the subtree rooted at every node."""
        sigma = self.to_arrays(profile)
        values = np.zeros(self.num_nodes)
        for node in range(self.num_nodes - 1, -1, -1):
            p = self.player[node]
            if p == TERMINAL:
                values[node] = self.utility[node]
                continue
            kid_vals = values[list(self.children[node])]
            probs = self.chance_probs[node] if p == CHANCE else sigma[self.infoset[node]]
            values[node] = float(np.dot(probs, kid_vals))
        return values


@lru_cache(maxsize=None)
def get_tree(domain: str) -> GameTree:
    return GameTree(get_game(domain))
