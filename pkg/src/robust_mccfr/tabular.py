"""Tabular regret machinery and exact evaluation.

Exploitability is reported as the mean of the two best-response values,
i.e. half of NashConv, so it is zero exactly at a Nash equilibrium.
"""

from __future__ import annotations

import csv
from typing import Iterable, Optional

import numpy as np

from .games import CHANCE, TERMINAL, InfoSetKey
from .sampling import Trajectory, sample_trajectory
from .tree import GameTree


def regret_matching(regrets) -> np.ndarray:
    regrets = np.asarray(regrets, dtype=float)
    if regrets.size == 0:
        raise ValueError("regret matching needs at least one action")
    positive = np.maximum(regrets, 0.0)
    total = positive.sum()
    if total > 0.0:
        return positive / total
    return np.full(regrets.size, 1.0 / regrets.size)


def _rm_list(regrets: list[float]) -> list[float]:
    # list version for the sampling loops; same rule as regret_matching
    pos = [r if r > 0.0 else 0.0 for r in regrets]
    total = sum(pos)
    if total > 0.0:
        return [r / total for r in pos]
    n = len(regrets)
    return [1.0 / n] * n


class RegretTable:
    """Cumulative regrets R(I, a), average-strategy weights S(I, a) and visit
    counts, indexed by infoset position in ``tree.keys``."""

    def __init__(self, tree: GameTree):
        self.tree = tree
        self.regrets = [[0.0] * len(a) for a in tree.legal]
        self.strategy_sum = [[0.0] * len(a) for a in tree.legal]
        self.visits = [0] * tree.num_infosets

    def current(self, idx: int) -> list[float]:
        return _rm_list(self.regrets[idx])

    def current_strategy(self) -> list[np.ndarray]:
        return [np.array(_rm_list(r)) for r in self.regrets]

    def copy(self) -> "RegretTable":
        out = RegretTable.__new__(RegretTable)
        out.tree = self.tree
        out.regrets = [list(r) for r in self.regrets]
        out.strategy_sum = [list(s) for s in self.strategy_sum]
        out.visits = list(self.visits)
        return out

    def __getitem__(self, key: InfoSetKey):
        i = self.tree.index[key]
        return np.array(self.regrets[i]), np.array(self.strategy_sum[i])

    def write_csv(self, path, which: str = "regrets") -> None:
        rows = self.regrets if which == "regrets" else self.strategy_sum
        write_table_csv(path, self.tree, rows)


class CurrentStrategy:
    """Regret-matching strategy of a table, computed on access."""

    def __init__(self, table: RegretTable):
        self.table = table

    def __getitem__(self, idx: int) -> list[float]:
        return _rm_list(self.table.regrets[idx])

    def __len__(self):
        return len(self.table.regrets)


def average_strategy(table: RegretTable) -> dict[InfoSetKey, np.ndarray]:
    out = {}
    for i, key in enumerate(table.tree.keys):
        s = np.asarray(table.strategy_sum[i], dtype=float)
        total = s.sum()
        out[key] = s / total if total > 0.0 else np.full(s.size, 1.0 / s.size)
    return out


def write_table_csv(path, tree: GameTree, rows) -> None:
    """Flat ``key,action,value`` text map."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "action", "value"])
        for i, key in enumerate(tree.keys):
            for a, v in zip(tree.legal[i], rows[i]):
                w.writerow([str(key), tree.game.action_names[a], repr(float(v))])


def read_table_csv(path, tree: GameTree) -> dict[InfoSetKey, np.ndarray]:
    by_name = {str(k): k for k in tree.keys}
    out = {k: np.zeros(len(tree.legal[i])) for i, k in enumerate(tree.keys)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = by_name[row["key"]]
            acts = tree.legal[tree.index[key]]
            a = tree.game.action_names.index(row["action"])
            out[key][acts.index(a)] = float(row["value"])
    return out


# --- exact evaluation --------------------------------------------------------


def counterfactual_values(tree: GameTree, profile) -> tuple[np.ndarray, list[np.ndarray]]:
    """Exact v_i(I) and v_i(I, a) for every infoset, from the acting player's
    point of view."""
    sigma = tree.to_arrays(profile)
    reach = tree.reach_probabilities(sigma)
    values = tree.node_values(sigma)
    v_info = np.zeros(tree.num_infosets)
    v_act = [np.zeros(len(a)) for a in tree.legal]
    for node in range(tree.num_nodes):
        idx = tree.infoset[node]
        if idx < 0:
            continue
        p = tree.player[node]
        sign = 1.0 if p == 0 else -1.0
        opp = reach[node, 0] * reach[node, 2 - p]
        v_info[idx] += sign * opp * values[node]
        v_act[idx] += sign * opp * values[list(tree.children[node])]
    return v_info, v_act


def exact_cfv(tree: GameTree, profile, key: InfoSetKey, action: Optional[int] = None) -> float:
    """Counterfactual value of ``key`` (or of taking legal-action position
    ``action`` there) by full enumeration."""
    v_info, v_act = counterfactual_values(tree, profile)
    i = tree.index[key]
    return float(v_info[i] if action is None else v_act[i][action])


def best_response_value(tree: GameTree, profile, player: int) -> float:
    """Value ``player`` obtains by best-responding to the opponent's part of
    ``profile``."""
    sigma = tree.to_arrays(profile)
    reach = tree.reach_probabilities(sigma)
    opp_reach = reach[:, 0] * reach[:, 2 - player]
    sign = 1.0 if player == 0 else -1.0
    nodes_of: dict[int, list[int]] = {}
    for node, idx in enumerate(tree.infoset):
        if idx >= 0 and tree.player[node] == player:
            nodes_of.setdefault(idx, []).append(node)

    memo: dict[int, float] = {}
    choice: dict[int, int] = {}

    def best(idx):
        if idx not in choice:
            totals = np.zeros(len(tree.legal[idx]))
            for h in nodes_of[idx]:
                for j, child in enumerate(tree.children[h]):
                    totals[j] += opp_reach[h] * value(child)
            choice[idx] = int(np.argmax(totals))
        return choice[idx]

    def value(node):
        if node in memo:
            return memo[node]
        p = tree.player[node]
        kids = tree.children[node]
        if p == TERMINAL:
            v = sign * tree.utility[node]
        elif p == CHANCE:
            v = sum(q * value(c) for q, c in zip(tree.chance_probs[node], kids))
        elif p == player:
            v = value(kids[best(tree.infoset[node])])
        else:
            v = sum(float(q) * value(c) for q, c in zip(sigma[tree.infoset[node]], kids))
        memo[node] = v
        return v

    return value(0)


def exploitability(tree: GameTree, profile) -> float:
    return 0.5 * (best_response_value(tree, profile, 0) + best_response_value(tree, profile, 1))


# --- outcome sampling ---------------------------------------------------------


def cfv_estimates(traj: Trajectory, baseline=None):
    """Sampled counterfactual values along a trajectory.

    Returns, per decision step, ``(v_I, [v_Ia ...])`` from the acting
    player's point of view, plus the sampled child value of each step (acting
    player's utility) for baseline updates. ``baseline`` maps an infoset index
    to per-action values b(I, a) in the acting player's utility, or is None.

    Values are propagated bottom-up: an action's value is
    b + (child - b) / q for the sampled action and b otherwise, which with
    b = 0 reduces to the plain importance-weighted estimate.
    """
    n = len(traj.infosets)
    prefix = []
    s_reach, r = 1.0, [1.0, 1.0]
    for k in range(n):
        prefix.append((s_reach, r[0], r[1]))
        s_reach *= traj.sample_probs[k]
        r[traj.players[k]] *= traj.target_probs[k]
    out = [None] * n
    sampled = [0.0] * n
    child = traj.utility
    for k in range(n - 1, -1, -1):
        p = traj.players[k]
        sign = 1.0 if p == 0 else -1.0
        a_star = traj.actions[k]
        q = traj.sample_probs[k]
        sigma = traj.sigmas[k]
        b = baseline[traj.infosets[k]] if baseline is not None else None
        sampled[k] = sign * child
        vals = []
        for a in range(len(sigma)):
            if b is None:
                vals.append(child / q if a == a_star else 0.0)
            else:
                b0 = sign * b[a]
                vals.append(b0 + (child - b0) / q if a == a_star else b0)
        node_val = 0.0
        for s, v in zip(sigma, vals):
            node_val += s * v
        sr, r0, r1 = prefix[k]
        scale = sign * (r1 if p == 0 else r0) / sr
        out[k] = (scale * node_val, [scale * v for v in vals])
        child = node_val
    return out, sampled, prefix


def accumulate(table: RegretTable, traj: Trajectory, regret_players=(0, 1), average_players=(0, 1), baseline=None):
    """Apply one trajectory's regret and average-strategy increments.

    Average-strategy weights use the acting player's own target reach over
    the sampling reach at that node. Returns the per-step estimates."""
    est, sampled, prefix = cfv_estimates(traj, baseline)
    for k, idx in enumerate(traj.infosets):
        p = traj.players[k]
        table.visits[idx] += 1
        if p in regret_players:
            v_i, v_ia = est[k]
            row = table.regrets[idx]
            for a in range(len(row)):
                row[a] += v_ia[a] - v_i
        if p in average_players:
            sr = prefix[k][0]
            w = prefix[k][1 + p] / sr
            srow = table.strategy_sum[idx]
            for a, s in enumerate(traj.sigmas[k]):
                srow[a] += w * s
    return est, sampled


class OutcomeSamplingSolver:
    """Tabular outcome-sampling MCCFR with alternating updates: each iteration
    samples one trajectory per player; the traverser updates regrets and the
    other player its average strategy."""

    def __init__(self, tree: GameTree, epsilon: float = 0.6, seed: int = 0, rng=None):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.tree = tree
        self.table = RegretTable(tree)
        self.epsilon = epsilon
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.iterations = 0

    def iteration(self) -> list[Trajectory]:
        trajs = []
        target = CurrentStrategy(self.table)
        for player in (0, 1):
            traj = sample_trajectory(self.tree, target, epsilon=self.epsilon, rng=self.rng)
            assert traj.player_sample_reach > 0.0
            accumulate(self.table, traj, regret_players=(player,), average_players=(1 - player,))
            trajs.append(traj)
        self.iterations += 1
        return trajs

    def run(self, iterations: int) -> None:
        for _ in range(iterations):
            self.iteration()

    def average_strategy(self):
        return average_strategy(self.table)

    def exploitability(self) -> float:
        return exploitability(self.tree, self.average_strategy())


def tabular_outcome_sampling_iteration(table: RegretTable, rng, epsilon: float) -> RegretTable:
    """Functional form of one solver iteration; mutates and returns ``table``."""
    target = CurrentStrategy(table)
    for player in (0, 1):
        traj = sample_trajectory(table.tree, target, epsilon=epsilon, rng=rng)
        accumulate(table, traj, regret_players=(player,), average_players=(1 - player,))
    return table


def profile_is_valid(profile: Iterable[np.ndarray], tol: float = 1e-9) -> bool:
    return all(np.all(np.asarray(d) >= 0) and abs(np.sum(d) - 1.0) <= tol for d in profile)
