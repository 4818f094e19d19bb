"""Risk indicators monitored during training."""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .training import PROB_FLOOR


def support_entropy(dist) -> float:
    p = np.asarray(dist, dtype=float)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def effective_sample_size(weights) -> float:
    """(sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("no weights")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    top = float(w.max())
    if top == 0.0:
        raise ValueError("all weights are zero")
    w = w / top  # scale-free; avoids under/overflow in the squares
    return float(np.sum(w)) ** 2 / float(np.sum(w * w))


def strategy_disagreement(sigma_rm, f_out) -> float:
    """KL(sigma_rm || f_out) with f_out floored at 1e-12."""
    p = np.asarray(sigma_rm, dtype=float)
    q = np.maximum(np.asarray(f_out, dtype=float), PROB_FLOOR)
    nz = p > 0
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))


def weight_stats(window) -> tuple[float, float, float]:
    """Mean, sample variance (n - 1 denominator, 0 for a single value), max."""
    w = np.asarray(window, dtype=float)
    if w.size == 0:
        raise ValueError("empty weight window")
    var = float(np.var(w, ddof=1)) if w.size > 1 else 0.0
    return float(np.mean(w)), var, float(np.max(w))


def target_stability(prev: Sequence, curr: Sequence) -> float:
    """Mean L1 distance between two per-infoset prediction sets."""
    if len(prev) != len(curr):
        raise ValueError("prediction sets cover different infosets")
    if not len(curr):
        return 0.0
    return float(np.mean([np.sum(np.abs(np.asarray(a) - np.asarray(b))) for a, b in zip(prev, curr)]))


@dataclass
class DiagnosticSnapshot:
    iteration: int
    w_mean: float
    w_var: float
    w_max: float
    ess: float
    support_entropy: float
    strategy_kl: float
    target_stability: float
    exploitability: float
    exploitability_current: float
    exploitability_iteration: int

    def as_row(self) -> dict:
        return asdict(self)


class WeightWindow:
    """The most recent importance weights (default: last 1000 trajectories)."""

    def __init__(self, size: int = 1000):
        self.values: deque[float] = deque(maxlen=size)

    def add(self, w: float) -> None:
        self.values.append(w)

    def stats(self) -> tuple[float, float, float, float]:
        if not self.values:
            return 0.0, 0.0, 0.0, 0.0
        mean, var, mx = weight_stats(self.values)
        try:
            ess = effective_sample_size(self.values)
        except ValueError:
            # every recent trajectory had zero target reach
            ess = 1.0
        return mean, var, mx, ess


def mean_entropy(policies) -> float:
    return float(np.mean([support_entropy(p) for p in policies]))


def mean_disagreement(sigmas, f_outs) -> float:
    return float(np.mean([strategy_disagreement(s, f) for s, f in zip(sigmas, f_outs)]))


def snapshot(
    iteration: int,
    window: WeightWindow,
    sampler_policies,
    sigmas_rm,
    f_outs,
    prev_predictions: Optional[Sequence],
    curr_predictions: Sequence,
    exploitability: float,
    exploitability_current: float,
    exploitability_iteration: int,
) -> DiagnosticSnapshot:
    mean, var, mx, ess = window.stats()
    stab = 0.0 if prev_predictions is None else target_stability(prev_predictions, curr_predictions)
    return DiagnosticSnapshot(
        iteration, mean, var, mx, ess,
        mean_entropy(sampler_policies),
        mean_disagreement(sigmas_rm, f_outs),
        stab,
        exploitability, exploitability_current, exploitability_iteration,
    )
