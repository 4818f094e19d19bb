"""Trajectory sampling with uniform exploration mixing and importance weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .games import CHANCE, TERMINAL, InfoSetKey
from .tree import GameTree


def mix_exploration(policy, epsilon: float) -> np.ndarray:
    """Blend ``policy`` with the uniform distribution over its support.

    Every entry of the result is at least ``epsilon / len(policy)``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    policy = np.asarray(policy, dtype=float)
    return (1.0 - epsilon) * policy + epsilon / len(policy)


@dataclass(frozen=True)
class TrajectoryStep:
    key: InfoSetKey
    action: int  # position in the infoset's legal action list
    sample_prob: float
    target_prob: float
    player: int


@dataclass
class Trajectory:
    """One sampled root-to-terminal path.

    Reaches are kept separately for chance and for the two players; chance is
    sampled from its own distribution, so it appears in both the sampling and
    the target reach and cancels in the importance weight.
    """

    nodes: list[int] = field(default_factory=list)
    infosets: list[int] = field(default_factory=list)
    players: list[int] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    sample_probs: list[float] = field(default_factory=list)
    target_probs: list[float] = field(default_factory=list)
    sigmas: list[Sequence[float]] = field(default_factory=list)
    chance_reach: float = 1.0
    terminal: int = -1
    utility: float = 0.0  # player 0; player 1 receives the negation
    tree: Optional[GameTree] = field(default=None, repr=False)

    @property
    def utilities(self) -> tuple[float, float]:
        return (self.utility, -self.utility)

    @property
    def player_sample_reach(self) -> float:
        return math.prod(self.sample_probs)

    @property
    def player_reach(self) -> tuple[float, float]:
        r = [1.0, 1.0]
        for p, prob in zip(self.players, self.target_probs):
            r[p] *= prob
        return (r[0], r[1])

    @property
    def sample_reach(self) -> float:
        return self.chance_reach * self.player_sample_reach

    @property
    def target_reach(self) -> float:
        return self.chance_reach * math.prod(self.target_probs)

    @property
    def steps(self) -> list[TrajectoryStep]:
        keys = self.tree.keys if self.tree is not None else None
        return [
            TrajectoryStep(keys[i] if keys else None, a, s, t, p)
            for i, a, s, t, p in zip(
                self.infosets, self.actions, self.sample_probs, self.target_probs, self.players
            )
        ]


def importance_weight(traj: Trajectory) -> float:
    """W(z): target reach over sampling reach of the sampled terminal."""
    denom = traj.player_sample_reach
    if not denom > 0.0:
        raise ZeroDivisionError("trajectory has zero sampling probability")
    return math.prod(traj.target_probs) / denom


def _pick(probs, u: float) -> int:
    acc = 0.0
    for j, p in enumerate(probs):
        acc += p
        if u < acc:
            return j
    # rounding: fall back to the last action with mass
    for j in range(len(probs) - 1, -1, -1):
        if probs[j] > 0.0:
            return j
    raise ValueError("distribution has no mass")


def sample_trajectory(
    tree: GameTree,
    target,
    sampler=None,
    epsilon: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    chance_rng: Optional[np.random.Generator] = None,
) -> Trajectory:
    """Sample one terminal history.

    ``target`` and ``sampler`` are indexable by infoset index and return a
    distribution over that infoset's legal actions. With ``sampler=None`` the
    target itself is the behaviour policy. Exploration mixing with
    ``epsilon`` is applied at every decision node, for both players.
    ``chance_rng`` draws the cards (defaults to ``rng``) so dealing can be
    kept on its own stream.
    """
    if rng is None:
        rng = np.random.default_rng()
    if chance_rng is None:
        chance_rng = rng
    player, children, infoset = tree.player, tree.children, tree.infoset
    traj = Trajectory(tree=tree)
    node = 0
    chance_reach = 1.0
    keep = 1.0 - epsilon
    while True:
        p = player[node]
        if p == TERMINAL:
            break
        if p == CHANCE:
            probs = tree.chance_probs[node]
            j = _pick(probs, chance_rng.random())
            chance_reach *= probs[j]
            node = children[node][j]
            continue
        idx = infoset[node]
        sigma = target[idx]
        behaviour = sigma if sampler is None else sampler[idx]
        if epsilon > 0.0:
            floor = epsilon / len(behaviour)
            behaviour = [keep * b + floor for b in behaviour]
        j = _pick(behaviour, rng.random())
        traj.nodes.append(node)
        traj.infosets.append(idx)
        traj.players.append(p)
        traj.actions.append(j)
        traj.sample_probs.append(float(behaviour[j]))
        traj.target_probs.append(float(sigma[j]))
        traj.sigmas.append(sigma)
        node = children[node][j]
    traj.chance_reach = chance_reach
    traj.terminal = node
    traj.utility = tree.utility[node]
    return traj


def enumerate_trajectories(tree: GameTree, target, sampler=None, epsilon: float = 0.0) -> list[Trajectory]:
    """Every terminal history as a Trajectory, in tree order.

    The sampling probability of each is ``traj.sample_reach``; they sum to 1.
    """
    out: list[Trajectory] = []

    def walk(node, traj: Trajectory):
        p = tree.player[node]
        if p == TERMINAL:
            traj.terminal = node
            traj.utility = tree.utility[node]
            out.append(traj)
            return
        for j, child in enumerate(tree.children[node]):
            t = Trajectory(
                list(traj.nodes), list(traj.infosets), list(traj.players), list(traj.actions),
                list(traj.sample_probs), list(traj.target_probs), list(traj.sigmas),
                traj.chance_reach, tree=tree,
            )
            if p == CHANCE:
                t.chance_reach *= tree.chance_probs[node][j]
            else:
                idx = tree.infoset[node]
                sigma = target[idx]
                behaviour = sigma if sampler is None else sampler[idx]
                if epsilon > 0.0:
                    behaviour = mix_exploration(behaviour, epsilon)
                t.nodes.append(node)
                t.infosets.append(idx)
                t.players.append(p)
                t.actions.append(j)
                t.sample_probs.append(float(behaviour[j]))
                t.target_probs.append(float(sigma[j]))
                t.sigmas.append(sigma)
            walk(child, t)

    walk(0, Trajectory(tree=tree))
    return out


def policy_table(tree: GameTree, net) -> list[list[float]]:
    """Evaluate a policy network on every infoset; rows are over legal actions."""
    probs = net.policy(tree.features, tree.masks)
    return [probs[i, list(acts)].tolist() for i, acts in enumerate(tree.legal)]
