"""Network training for the deep MCCFR loop.

Three networks are trained from replayed experiences: the sampling net g
(imitation of the regret-matching strategy plus a variance penalty), the
strategy net f (imitation only) and the variance estimator V (Huber
regression onto W^2). V reads the infoset features concatenated with g's
output distribution, which is the path by which the variance penalty reaches
g in the "coupled" mode. In "literal" mode g receives no variance gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .neural import (
    OptimizerState,
    ResidualNet,
    Topology,
    clip_grad_norm,
    copy_into_target,
    masked_softmax,
    optimizer_step,
    sigmoid,
    softmax_backward,
    softplus,
)

PROB_FLOOR = 1e-12
COMPONENTS = ("target_nets", "exploration", "variance_obj", "replay_prioritization", "baseline_subtraction")


@dataclass(frozen=True)
class TrainingConfig:
    lam: float = 0.1
    tau_target: int = 100
    tau_train: int = 1
    alpha_warm: float = 0.2
    warm_start_after: int = 500
    epsilon: float = 0.1
    target_nets: bool = True
    exploration: bool = True
    variance_obj: bool = True
    replay_prioritization: bool = True
    baseline_subtraction: bool = True
    warm_start: bool = True
    huber_kappa: float = 1.0
    lr: float = 1e-3
    lr_variance: float = 1e-3
    batch_size: int = 128
    grad_clip: float = 10.0
    baseline_decay: float = 0.05
    replay_capacity: int = 10_000
    replay_alpha: float = 0.6
    replay_eps: float = 1e-3
    td_mode: str = "proxy"  # or "magnitude"
    variance_coupling: str = "coupled"  # or "literal"
    width: int = 0  # 0 selects the per-domain default
    blocks: int = 4
    bottleneck: int = 4

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.tau_target < 1 or self.tau_train < 1:
            raise ValueError("tau_target and tau_train must be at least 1")
        for name in ("alpha_warm", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.td_mode not in ("proxy", "magnitude"):
            raise ValueError(f"unknown td_mode {self.td_mode!r}")
        if self.variance_coupling not in ("coupled", "literal"):
            raise ValueError(f"unknown variance_coupling {self.variance_coupling!r}")

    @property
    def effective_epsilon(self) -> float:
        return self.epsilon if self.exploration else 0.0

    def with_overrides(self, **kw) -> "TrainingConfig":
        return replace(self, **kw)

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(f.default) for f in fields(cls)}


# --- losses -----------------------------------------------------------------


def imitation_loss(target, predicted) -> float:
    """KL(target || predicted); predicted probabilities are floored at 1e-12."""
    t = np.asarray(target, dtype=float)
    g = np.maximum(np.asarray(predicted, dtype=float), PROB_FLOOR)
    nz = t > 0
    return float(np.sum(t[nz] * (np.log(t[nz]) - np.log(g[nz]))))


def _kl_rows(t, g):
    g = np.maximum(g, PROB_FLOOR)
    safe_t = np.where(t > 0, t, 1.0)
    return np.sum(np.where(t > 0, t * (np.log(safe_t) - np.log(g)), 0.0), axis=1)


def huber(residual, kappa: float = 1.0):
    r = np.abs(residual)
    return np.where(r <= kappa, 0.5 * r * r, kappa * (r - 0.5 * kappa))


def huber_grad(residual, kappa: float = 1.0):
    return np.clip(residual, -kappa, kappa)


def variance_loss(v_hat: float, weight: float, kappa: float = 1.0) -> float:
    if kappa <= 0:
        raise ValueError("huber threshold must be positive")
    return float(huber(v_hat - weight * weight, kappa))


def warm_start_strategy(f_out, sigma_rm, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * np.asarray(f_out, dtype=float) + (1.0 - alpha) * np.asarray(sigma_rm, dtype=float)


# --- baseline ----------------------------------------------------------------


class BaselineTable:
    """Exponential moving average b(I, a) of sampled action values, in the
    acting player's utility. Indexed by infoset position."""

    def __init__(self, tree, decay: float = 0.05):
        self.tree = tree
        self.decay = decay
        self.values = [[0.0] * len(a) for a in tree.legal]

    def __getitem__(self, idx: int) -> list[float]:
        return self.values[idx]

    def get(self, key, action: int) -> float:
        return self.values[self.tree.index[key]][action]

    def update(self, idx: int, action: int, value: float) -> None:
        row = self.values[idx]
        row[action] = (1.0 - self.decay) * row[action] + self.decay * value


def apply_baseline(value: float, weight: float, key, action: int, table: Optional[BaselineTable], update: bool = False) -> float:
    """Control-variate correction (u - b) W + b of a sampled value.

    The baseline is read before any update, so the correction keeps the
    estimator's expectation. With ``update=True`` the EMA then moves towards
    ``value``.
    """
    if table is None:
        return weight * value
    idx = table.tree.index[key]
    b = table.values[idx][action]
    corrected = (value - b) * weight + b
    if update:
        table.update(idx, action, value)
    return corrected


# --- networks -------------------------------------------------------------------


@dataclass
class Networks:
    f: ResidualNet
    g: ResidualNet
    v: ResidualNet
    f_target: ResidualNet
    g_target: ResidualNet
    opt_f: OptimizerState
    opt_g: OptimizerState
    opt_v: OptimizerState

    @classmethod
    def build(cls, input_dim: int, num_actions: int, cfg: TrainingConfig, width: int, rng) -> "Networks":
        pol = Topology(input_dim, width, cfg.blocks, cfg.bottleneck, num_actions, "policy")
        var = Topology(input_dim + num_actions, width, cfg.blocks, cfg.bottleneck, 1, "variance")
        f = ResidualNet(pol, rng)
        g = ResidualNet(pol, rng)
        v = ResidualNet(var, rng)
        return cls(
            f, g, v, f.copy(), g.copy(),
            OptimizerState(lr=cfg.lr), OptimizerState(lr=cfg.lr), OptimizerState(lr=cfg.lr_variance),
        )

    def sampler_net(self, use_target: bool) -> ResidualNet:
        return self.g_target if use_target else self.g

    def strategy_net(self, use_target: bool) -> ResidualNet:
        return self.f_target if use_target else self.f


def maybe_update_targets(t: int, tau: int, nets: Networks) -> bool:
    if t < 1:
        raise ValueError("iterations are counted from 1")
    if t % tau:
        return False
    copy_into_target(nets.f, nets.f_target)
    copy_into_target(nets.g, nets.g_target)
    return True


def _batch_arrays(batch):
    X = np.stack([e.features for e in batch])
    T = np.stack([e.target for e in batch])
    M = np.stack([e.mask for e in batch])
    W = np.array([e.weight for e in batch], dtype=float)
    return X, T, M, W


def train_step(nets: Networks, batch, is_weights, cfg: TrainingConfig) -> dict[str, float]:
    """One optimizer step each on g, f and (if the variance objective is on) V.

    Per-sample losses are multiplied by the replay weights and averaged over
    the batch. Raises FloatingPointError before touching any parameter if a
    loss is not finite.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    X, T, M, W = _batch_arrays(batch)
    w = np.asarray(is_weights, dtype=float)
    n = len(batch)
    use_var = cfg.variance_obj

    logits_g, cache_g = nets.g.forward(X)
    pg = masked_softmax(logits_g, M)
    kl_g = _kl_rows(T, pg)
    logits_f, cache_f = nets.f.forward(X)
    pf = masked_softmax(logits_f, M)
    kl_f = _kl_rows(T, pf)

    report = {"loss_g": float(np.mean(w * kl_g)), "loss_f": float(np.mean(w * kl_f)), "loss_v": 0.0}
    if use_var:
        v_in = np.concatenate([X, pg], axis=1)
        v_out, cache_v = nets.v.forward(v_in)
        v_hat = softplus(v_out[:, 0])
        resid = v_hat - W * W
        report["loss_v"] = float(np.mean(w * huber(resid, cfg.huber_kappa)))
        report["v_hat"] = float(np.mean(v_hat))
    bad = [k for k, v in report.items() if not np.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite training loss {bad}: {report}")

    scale = (w / n)[:, None]
    d_logits_g = scale * (pg - T)
    if use_var and cfg.lam and cfg.variance_coupling == "coupled":
        # penalty lam * V(x, g(x)) reaches g through V's input
        d_vout = (cfg.lam * w / n * sigmoid(v_out[:, 0]))[:, None]
        _, dx = nets.v.backward(cache_v, d_vout)
        d_pg = dx[:, X.shape[1]:]
        d_logits_g = d_logits_g + softmax_backward(pg, d_pg)
    grads_g, _ = nets.g.backward(cache_g, d_logits_g)
    grads_f, _ = nets.f.backward(cache_f, scale * (pf - T))
    report["grad_norm_g"] = clip_grad_norm(grads_g, cfg.grad_clip)
    report["grad_norm_f"] = clip_grad_norm(grads_f, cfg.grad_clip)
    if use_var:
        d_vout = (w / n * huber_grad(resid, cfg.huber_kappa) * sigmoid(v_out[:, 0]))[:, None]
        grads_v, _ = nets.v.backward(cache_v, d_vout)
        clip_grad_norm(grads_v, cfg.grad_clip)

    optimizer_step(nets.g, grads_g, nets.opt_g)
    optimizer_step(nets.f, grads_f, nets.opt_f)
    if use_var:
        optimizer_step(nets.v, grads_v, nets.opt_v)
    return report
