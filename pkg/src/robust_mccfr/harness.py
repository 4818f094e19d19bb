"""Run orchestration: the robust deep MCCFR loop, ablation presets, sweeps,
metrics and checkpoints."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import diagnostics
from .neural import save_checkpoint
from .replay import Experience, PrioritizedReplay
from .sampling import importance_weight, mix_exploration, policy_table, sample_trajectory
from .tabular import (
    CurrentStrategy,
    RegretTable,
    _rm_list,
    accumulate,
    average_strategy,
    exploitability,
    write_table_csv,
)
from .training import COMPONENTS, BaselineTable, Networks, TrainingConfig, maybe_update_targets, train_step
from .tree import GameTree, get_tree

log = logging.getLogger(__name__)

DEFAULT_WIDTH = {"kuhn": 64, "leduc": 128}
DEFAULT_ITERATIONS = {"kuhn": 10_000, "leduc": 50_000}
DEFAULT_EVAL_EVERY = {"kuhn": 500, "leduc": 2_500}
STREAMS = ("deal", "actions", "replay", "init")

_ALL_ON = {c: True for c in COMPONENTS}
PRESETS: dict[str, dict[str, bool]] = {
    "full": dict(_ALL_ON),
    "no_target_networks": {**_ALL_ON, "target_nets": False},
    "no_exploration": {**_ALL_ON, "exploration": False},
    "no_variance_objective": {**_ALL_ON, "variance_obj": False},
    "no_prioritized_replay": {**_ALL_ON, "replay_prioritization": False},
    "no_baseline_subtraction": {**_ALL_ON, "baseline_subtraction": False},
    "minimal": {c: False for c in COMPONENTS},
}

SWEEP_GRID = {
    "epsilon": (0.05, 0.1, 0.15, 0.2),
    "tau_target": (50, 100, 200, 500),
    "lambda": (0.05, 0.1, 0.2, 0.5),
}
_SWEEP_FIELD = {"epsilon": "epsilon", "tau_target": "tau_target", "lambda": "lam"}

METRIC_COLUMNS = [
    "iteration", "exploitability", "exploitability_current", "exploitability_iteration",
    "w_mean", "w_var", "w_max", "ess", "support_entropy", "strategy_kl", "target_stability",
    "loss_g", "loss_f", "loss_v", "replay_size", "beta",
]


class RunAborted(RuntimeError):
    pass


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one master seed."""
    return {
        name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        for i, name in enumerate(STREAMS)
    }


def preset_config(name: str, base: Optional[TrainingConfig] = None, **overrides) -> TrainingConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = base or TrainingConfig()
    return replace(base, **{**PRESETS[name], **overrides})


@dataclass
class RunConfig:
    domain: str = "kuhn"
    training: TrainingConfig = field(default_factory=TrainingConfig)
    seed: int = 0
    iterations: int = 0  # 0 selects the per-domain default
    eval_every: int = 0
    snapshot_every: int = 100
    out_dir: Optional[str] = None
    preset: str = "full"
    on_policy: bool = False  # sample from the target strategy itself (diagnostic runs)

    def __post_init__(self):
        if not self.iterations:
            self.iterations = DEFAULT_ITERATIONS[self.domain]
        if not self.eval_every:
            self.eval_every = DEFAULT_EVAL_EVERY[self.domain]
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")


class WarmStarted:
    """alpha * f(I) + (1 - alpha) * RM(I), computed on access."""

    def __init__(self, table: RegretTable, f_table, alpha: float):
        self.table, self.f_table, self.alpha = table, f_table, alpha

    def __getitem__(self, idx):
        rm = _rm_list(self.table.regrets[idx])
        a = self.alpha
        return [a * f + (1.0 - a) * r for f, r in zip(self.f_table[idx], rm)]


class RobustDeepMCCFR:
    """Outcome-sampling MCCFR whose behaviour policy is a sampling network,
    with optional target networks, exploration mixing, variance-aware
    training, prioritized replay, baseline subtraction and warm starting.

    Each iteration samples one trajectory and updates the regrets and average
    strategies of both players from it.
    """

    def __init__(self, tree: GameTree, cfg: TrainingConfig, seed: int = 0, total_iterations: int = 10_000, on_policy: bool = False):
        self.tree = tree
        self.cfg = cfg
        self.total_iterations = total_iterations
        self.on_policy = on_policy
        self.rngs = rng_streams(seed)
        width = cfg.width or DEFAULT_WIDTH.get(tree.game.name, 64)
        self.nets = Networks.build(tree.game.input_size, tree.game.num_actions, cfg, width, self.rngs["init"])
        self.table = RegretTable(tree)
        self.baseline = BaselineTable(tree, cfg.baseline_decay) if cfg.baseline_subtraction else None
        self.replay = PrioritizedReplay(
            cfg.replay_capacity,
            alpha=cfg.replay_alpha if cfg.replay_prioritization else 0.0,
            eps=cfg.replay_eps,
        )
        self.window = diagnostics.WeightWindow(1000)
        self.epsilon = 0.0 if on_policy else cfg.effective_epsilon
        self.t = 0
        self.losses = {"loss_g": 0.0, "loss_f": 0.0, "loss_v": 0.0}
        self.last_weight = 1.0
        self._cache: dict[str, list] = {}
        self._full_targets = [self._scatter(i, d) for i, d in enumerate(tree.uniform_profile())]

    # -- cached network outputs ------------------------------------------------

    def _table(self, name: str):
        if name not in self._cache:
            net = getattr(self.nets, name)
            self._cache[name] = policy_table(self.tree, net)
        return self._cache[name]

    def _invalidate(self, *names):
        for n in names:
            self._cache.pop(n, None)

    def sampler_table(self) -> list:
        return self._table("g_target" if self.cfg.target_nets else "g")

    def strategy_table(self) -> list:
        return self._table("f_target" if self.cfg.target_nets else "f")

    def mixed_sampler_table(self) -> list:
        if self.on_policy:
            return [list(self.target_policy(self.t + 1)[i]) for i in range(self.tree.num_infosets)]
        return [mix_exploration(p, self.epsilon) for p in self.sampler_table()]

    def target_policy(self, t: int):
        cfg = self.cfg
        if cfg.warm_start and cfg.alpha_warm > 0.0 and t > cfg.warm_start_after:
            return WarmStarted(self.table, self.strategy_table(), cfg.alpha_warm)
        return CurrentStrategy(self.table)

    def _scatter(self, idx, dist):
        full = np.zeros(self.tree.game.num_actions)
        full[list(self.tree.legal[idx])] = dist
        return full

    # -- main loop -------------------------------------------------------------

    def iteration(self) -> float:
        """Run iteration ``t = self.t + 1``; returns its importance weight."""
        t = self.t + 1
        cfg, tree = self.cfg, self.tree
        target = self.target_policy(t)
        sampler = None if self.on_policy else self.sampler_table()
        traj = sample_trajectory(
            tree, target, sampler, self.epsilon, rng=self.rngs["actions"], chance_rng=self.rngs["deal"]
        )
        W = importance_weight(traj)
        rm = [_rm_list(self.table.regrets[i]) for i in traj.infosets]
        est, sampled = accumulate(self.table, traj, (0, 1), (0, 1), self.baseline)
        if self.baseline is not None:
            for idx, a, v in zip(traj.infosets, traj.actions, sampled):
                self.baseline.update(idx, a, v)
        self.window.add(W)
        self.last_weight = W

        f_tab = self.strategy_table()
        for k, idx in enumerate(traj.infosets):
            v_i, v_ia = est[k]
            if cfg.td_mode == "proxy":
                delta = abs(sum((f - s) * v for f, s, v in zip(f_tab[idx], traj.sigmas[k], v_ia)))
            else:
                delta = abs(v_ia[traj.actions[k]] - v_i)
            self.replay.push(Experience(
                tree.features[idx], self._scatter(idx, rm[k]), W, delta, tree.masks[idx], t, idx,
            ))

        if t % cfg.tau_train == 0 and len(self.replay):
            self.replay.anneal_beta(min(t, self.total_iterations), self.total_iterations)
            batch, w, _ = self.replay.sample_batch(cfg.batch_size, self.rngs["replay"])
            self.losses = train_step(self.nets, batch, w, cfg)
            self._invalidate("f", "g")
        if cfg.target_nets and maybe_update_targets(t, cfg.tau_target, self.nets):
            self._invalidate("f_target", "g_target")
        self.t = t
        return W

    def average_strategy(self):
        return average_strategy(self.table)

    def current_profile(self):
        pol = self.target_policy(self.t + 1)
        return [np.array(pol[i]) for i in range(self.tree.num_infosets)]

    def exploitability(self) -> tuple[float, float]:
        return (
            exploitability(self.tree, self.average_strategy()),
            exploitability(self.tree, self.current_profile()),
        )


# --- runs ---------------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    final_exploitability: float
    final_exploitability_current: float
    seconds: float
    rows: list[dict]
    solver: RobustDeepMCCFR = field(repr=False)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run(config: RunConfig, callback: Optional[Callable[[RobustDeepMCCFR], None]] = None) -> RunResult:
    """Execute one training run; writes metrics and a checkpoint when
    ``config.out_dir`` is set. ``callback`` is invoked after every iteration."""
    tree = get_tree(config.domain)
    solver = RobustDeepMCCFR(tree, config.training, config.seed, config.iterations, config.on_policy)
    out = Path(config.out_dir) if config.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_config(out / "config.txt", config)
    rows: list[dict] = []
    timing: list[tuple[int, float]] = []
    prev_pred = None
    expl = expl_cur = math.nan
    expl_at = 0
    start = time.perf_counter()
    try:
        for t in range(1, config.iterations + 1):
            solver.iteration()
            if callback is not None:
                callback(solver)
            last = t == config.iterations
            if t % config.eval_every == 0 or last:
                expl, expl_cur = solver.exploitability()
                expl_at = t
            if t % config.snapshot_every == 0 or last:
                pred = solver.sampler_table()
                f_outs = solver._table("f")
                sigmas = solver.table.current_strategy()
                snap = diagnostics.snapshot(
                    t, solver.window, solver.mixed_sampler_table(), sigmas, f_outs,
                    prev_pred, pred, expl, expl_cur, expl_at,
                )
                prev_pred = pred
                row = snap.as_row()
                row.update(solver.losses)
                row["replay_size"] = len(solver.replay)
                row["beta"] = solver.replay.beta
                row = {c: row[c] for c in METRIC_COLUMNS}
                # exploitability stays NaN until its first evaluation
                bad = [c for c, v in row.items()
                       if isinstance(v, float) and not math.isfinite(v) and not c.startswith("exploitability")]
                if bad:
                    raise FloatingPointError(f"non-finite metrics {bad} at iteration {t}")
                rows.append(row)
                timing.append((t, time.perf_counter() - start))
    except FloatingPointError as exc:
        if out is not None:
            dump_failure(out / "failure.txt", solver, exc)
        raise RunAborted(f"run aborted at iteration {solver.t + 1}: {exc}") from exc
    seconds = time.perf_counter() - start
    if out is not None:
        write_metrics(out / "metrics.csv", rows)
        with open(out / "timing.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "seconds"])
            w.writerows(timing)
        write_checkpoint(out / "checkpoint", solver)
    log.info("%s seed=%d: exploitability %.4f in %.1fs", config.preset, config.seed, expl, seconds)
    return RunResult(config, expl, expl_cur, seconds, rows, solver)


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def write_checkpoint(path: Path, solver: RobustDeepMCCFR) -> None:
    path.mkdir(parents=True, exist_ok=True)
    for name in ("f", "g", "v", "f_target", "g_target"):
        save_checkpoint(getattr(solver.nets, name), path / f"{name}.bin")
    tree = solver.tree
    avg = solver.average_strategy()
    write_table_csv(path / "average_strategy.csv", tree, [avg[k] for k in tree.keys])
    solver.table.write_csv(path / "regrets.csv", "regrets")


def dump_failure(path, solver: RobustDeepMCCFR, exc: Exception) -> None:
    with open(path, "w") as fh:
        fh.write(f"iteration: {solver.t + 1}\nerror: {exc}\nlosses: {solver.losses}\n")
        fh.write(f"last_weight: {solver.last_weight}\nweight_window: {list(solver.window.values)[-20:]}\n")


# --- config files ------------------------------------------------------------------

_RUN_KEYS = {"domain": str, "preset": str, "seed": int, "iters": int, "iterations": int,
             "out": str, "eval_every": int, "snapshot_every": int}


def _parse_value(raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw)


def parse_config_file(path) -> dict[str, object]:
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    types = TrainingConfig.field_types()
    types["lambda"] = float
    out: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key in _RUN_KEYS:
                out[key] = _parse_value(value, _RUN_KEYS[key])
            elif key in types:
                out["lam" if key == "lambda" else key] = _parse_value(value, types[key])
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def build_run_config(settings: dict[str, object]) -> RunConfig:
    """Defaults, then the preset's toggles, then explicit training fields."""
    s = dict(settings)
    preset = str(s.pop("preset", "full"))
    run_kw = {
        "domain": s.pop("domain", "kuhn"),
        "seed": s.pop("seed", 0),
        "iterations": s.pop("iters", s.pop("iterations", 0)),
        "out_dir": s.pop("out", None),
        "eval_every": s.pop("eval_every", 0),
        "snapshot_every": s.pop("snapshot_every", 100),
    }
    s.pop("iterations", None)
    training = preset_config(preset, **s)
    return RunConfig(training=training, preset=preset, **run_kw)


def write_config(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"domain = {config.domain}\npreset = {config.preset}\nseed = {config.seed}\n")
        fh.write(f"iters = {config.iterations}\neval_every = {config.eval_every}\n")
        fh.write(f"snapshot_every = {config.snapshot_every}\n")
        for k, v in asdict(config.training).items():
            fh.write(f"{k} = {v}\n")


# --- suites ----------------------------------------------------------------------------


def _summarise(results: dict[str, list], out: Optional[Path], label: str) -> list[dict]:
    summary = []
    for name, runs in results.items():
        ok = [r for r in runs if isinstance(r, RunResult)]
        vals = [r.final_exploitability for r in ok]
        summary.append({
            label: name,
            "runs": len(runs),
            "failed": len(runs) - len(ok),
            "final_exploitability_mean": float(np.mean(vals)) if vals else math.nan,
            "final_exploitability_std": float(np.std(vals)) if vals else math.nan,
            "training_time_s": float(np.mean([r.seconds for r in ok])) if ok else math.nan,
        })
    if out is not None:
        cols = list(summary[0])
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in summary:
                w.writerow([_fmt(row[c]) for c in cols])
        with open(out / "summary.txt", "w") as fh:
            fh.write(format_summary(summary, label))
    return summary


def format_summary(summary: list[dict], label: str) -> str:
    lines = [f"{label:<26} {'Final Exploitability':>22} {'Training Time (s)':>18} {'failed':>7}"]
    for row in summary:
        m, sd = row["final_exploitability_mean"], row["final_exploitability_std"]
        lines.append(f"{str(row[label]):<26} {m:>13.4f} ± {sd:<6.4f} {row['training_time_s']:>18.1f} {row['failed']:>7}")
    return "\n".join(lines) + "\n"


def run_ablation_suite(domain: str, seeds, out_dir=None, iterations: int = 0, base: Optional[TrainingConfig] = None,
                       presets=None) -> list[dict]:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    out = Path(out_dir) if out_dir else None
    results: dict[str, list] = {}
    for name in presets or PRESETS:
        results[name] = []
        for seed in seeds:
            sub = str(out / name / f"seed{seed}") if out else None
            cfg = RunConfig(domain, preset_config(name, base), seed, iterations, out_dir=sub, preset=name)
            try:
                results[name].append(run(cfg))
            except Exception as exc:  # recorded; the suite carries on
                log.error("preset %s seed %d failed: %s", name, seed, exc)
                results[name].append(exc)
    return _summarise(results, out, "preset")


def run_sensitivity_sweep(domain: str, parameter: str, values=None, seeds=(0,), out_dir=None,
                          iterations: int = 0, base: Optional[TrainingConfig] = None) -> list[dict]:
    if parameter not in SWEEP_GRID:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {sorted(SWEEP_GRID)}")
    values = list(values) if values is not None else list(SWEEP_GRID[parameter])
    out = Path(out_dir) if out_dir else None
    results: dict[str, list] = {}
    for value in values:
        label = f"{parameter}={value}"
        results[label] = []
        training = preset_config("full", base, **{_SWEEP_FIELD[parameter]: value})
        for seed in seeds:
            sub = str(out / label / f"seed{seed}") if out else None
            cfg = RunConfig(domain, training, seed, iterations, out_dir=sub, preset="full")
            try:
                results[label].append(run(cfg))
            except Exception as exc:
                log.error("%s seed %d failed: %s", label, seed, exc)
                results[label].append(exc)
    return _summarise(results, out, "setting")
