"""Acceptance gate: one test per criterion, each also timed against its
runtime budget. A pass/fail line per criterion is printed at the end of the
pytest run (see conftest.py)."""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_mccfr.diagnostics import effective_sample_size, support_entropy
from robust_mccfr.games import KuhnPoker, LeducPoker
from robust_mccfr.harness import RobustDeepMCCFR, RunConfig, preset_config, run
from robust_mccfr.neural import ResidualNet, Topology, masked_softmax, softmax_backward, softplus
from robust_mccfr.replay import Experience, PrioritizedReplay
from robust_mccfr.sampling import (
    enumerate_trajectories,
    importance_weight,
    mix_exploration,
    policy_table,
    sample_trajectory,
)
from robust_mccfr.tabular import OutcomeSamplingSolver, cfv_estimates, exact_cfv
from robust_mccfr.training import TrainingConfig
from robust_mccfr.tree import get_tree

KUHN = get_tree("kuhn")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_criterion_01_infoset_counts(acceptance):
    with Timer() as t:
        kuhn = KuhnPoker().enumerate_infosets()
        leduc = LeducPoker().enumerate_infosets()
    acceptance(1, f"Kuhn {len(kuhn)}, Leduc {len(leduc)} infosets in {t.seconds:.2f}s")
    assert len(kuhn) == 12
    assert len(leduc) == 936
    assert t.seconds < 1.0


def _per_terminal_estimates(profile, epsilon):
    """For every terminal: its sampling probability and the sampled v(I)
    estimate it produces at each infoset (zero where not visited)."""
    trajs = enumerate_trajectories(KUHN, profile, None, epsilon)
    probs = np.array([t.sample_reach for t in trajs])
    est = np.zeros((len(trajs), KUHN.num_infosets))
    for z, traj in enumerate(trajs):
        steps, _, _ = cfv_estimates(traj)
        for idx, (v_i, _) in zip(traj.infosets, steps):
            est[z, idx] += v_i
    return probs, est


def test_criterion_02_estimator_unbiasedness(acceptance):
    eps, n, profiles = 0.3, 100_000, 20
    rng = np.random.default_rng(0)
    worst = 0.0
    failures = []
    with Timer() as t:
        for k in range(profiles):
            prof = [list(rng.dirichlet([1, 1])) for _ in KUHN.legal]
            probs, est = _per_terminal_estimates(prof, eps)
            draws = est[rng.choice(len(probs), size=n, p=probs / probs.sum())]
            mean = draws.mean(axis=0)
            se = draws.std(axis=0, ddof=1) / math.sqrt(n)
            for i, key in enumerate(KUHN.keys):
                z = abs(mean[i] - exact_cfv(KUHN, prof, key)) / se[i]
                worst = max(worst, z)
                if z > 3.0:
                    failures.append((k, str(key), z))
        # the same check through the real trajectory sampler, one profile
        prof = [list(rng.dirichlet([1, 1])) for _ in KUHN.legal]
        m = 20_000
        acc = np.zeros((m, KUHN.num_infosets))
        for j in range(m):
            traj = sample_trajectory(KUHN, prof, epsilon=eps, rng=rng)
            steps, _, _ = cfv_estimates(traj)
            for idx, (v_i, _) in zip(traj.infosets, steps):
                acc[j, idx] += v_i
        se = acc.std(axis=0, ddof=1) / math.sqrt(m)
        z_direct = max(abs(acc[:, i].mean() - exact_cfv(KUHN, prof, key)) / se[i] for i, key in enumerate(KUHN.keys))
    acceptance(2, f"max |z| {worst:.2f} over {profiles} profiles x 12 infosets "
                  f"(direct sampler {z_direct:.2f}); {len(failures)} beyond 3 SE; {t.seconds:.1f}s")
    assert not failures, failures
    assert z_direct <= 3.0
    assert t.seconds < 60


def test_criterion_03_tabular_convergence(acceptance):
    solver = OutcomeSamplingSolver(KUHN, epsilon=0.6, seed=0)
    expl = math.inf
    with Timer() as t:
        while solver.iterations < 1_000_000:
            solver.run(10_000)
            expl = solver.exploitability()
            if expl < 0.01:
                break
    acceptance(3, f"exploitability {expl:.5f} after {solver.iterations} iterations in {t.seconds:.1f}s")
    assert expl < 0.01
    assert t.seconds < 120


@pytest.mark.slow
def test_criterion_04_neural_loose_reproduction(acceptance):
    thresholds = {"no_exploration": 0.15, "minimal": 0.25}
    means = {}
    with Timer() as t:
        for preset in thresholds:
            vals = [
                run(RunConfig("kuhn", preset_config(preset), seed, 10_000, eval_every=10_000, preset=preset)).final_exploitability
                for seed in range(5)
            ]
            means[preset] = float(np.mean(vals))
    acceptance(4, ", ".join(f"{p} mean {m:.4f} (< {thresholds[p]})" for p, m in means.items()) + f"; {t.seconds:.0f}s")
    for preset, limit in thresholds.items():
        assert means[preset] < limit
    assert t.seconds < 900


def test_criterion_05_support_guarantee(acceptance):
    rng = np.random.default_rng(5)
    topo = Topology(KUHN.game.input_size, 64, 4, 4, 2)
    worst_gap = math.inf
    with Timer() as t:
        for draw in range(1000):
            net = ResidualNet(topo, rng)
            scale = 10 ** rng.uniform(-1, 2)
            for name, p in net.params.items():
                net.params[name] = scale * rng.normal(size=p.shape)
            table = policy_table(KUHN, net)
            for eps in (0.05, 0.1, 0.2):
                for row in table:
                    gap = min(mix_exploration(row, eps)) - eps / len(row)
                    worst_gap = min(worst_gap, gap)
            if draw % 100 == 0:
                # the sampler's inline mixing gives the same floor
                traj = sample_trajectory(KUHN, KUHN.uniform_profile(), table, 0.05, rng=rng)
                worst_gap = min(worst_gap, min(traj.sample_probs) - 0.025)
    acceptance(5, f"min(mixed) - eps/|A| = {worst_gap:.3e} over 1000 draws x 12 infosets x 3 eps; {t.seconds:.1f}s")
    assert worst_gap >= -1e-12
    assert t.seconds < 10


def test_criterion_06_target_stability(acceptance):
    solver = RobustDeepMCCFR(KUHN, TrainingConfig(tau_target=100), seed=6, total_iterations=2000)
    X, M = KUHN.features, KUHN.masks

    def snap():
        return solver.nets.g_target.policy(X, M), solver.nets.f_target.policy(X, M)

    prev = snap()
    changed_at, stray = [], []
    with Timer() as t:
        for it in range(1, 2001):
            solver.iteration()
            cur = snap()
            same = all(np.array_equal(a, b) for a, b in zip(prev, cur))
            if not same:
                (changed_at if it % 100 == 0 else stray).append(it)
            prev = cur
    acceptance(6, f"targets changed at {len(changed_at)}/20 multiples of 100, "
                  f"{len(stray)} changes elsewhere; {t.seconds:.1f}s")
    assert not stray
    assert changed_at == list(range(100, 2001, 100))
    assert t.seconds < 120


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 50), min_size=5, max_size=5),
    st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=5),
    st.floats(0.1, 1.0),
)
def test_replay_bias_cancellation_property(tds, g, alpha):
    buf = PrioritizedReplay(capacity=5, alpha=alpha, beta=1.0)
    for i, td in enumerate(tds):
        buf.push(Experience(np.zeros(1), np.ones(1), 1.0, td, np.ones(1, dtype=bool), i))
    p = buf.probabilities()
    w = buf.correction_weights(range(5))
    lhs = float(np.sum(p * w * np.array(g)))
    assert lhs == pytest.approx(float(np.mean(g)), abs=1e-12 * max(1.0, max(abs(x) for x in g)))


def test_criterion_07_replay_correction(acceptance):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        buf = PrioritizedReplay(capacity=5, alpha=rng.uniform(0.1, 1.0), beta=1.0)
        for i, td in enumerate(rng.exponential(3.0, size=5)):
            buf.push(Experience(np.zeros(1), np.ones(1), 1.0, td, np.ones(1, dtype=bool), i))
        g = rng.normal(scale=10, size=5)
        lhs = float(np.sum(buf.probabilities() * buf.correction_weights(range(5)) * g))
        worst = max(worst, abs(lhs - g.mean()))
    acceptance(7, f"max |sum p (Np)^-1 g - mean g| = {worst:.2e} over 1000 buffers")
    assert worst < 1e-12


def test_criterion_08_diagnostic_closed_forms(acceptance):
    with Timer() as t:
        ent = support_entropy([0.5, 0.5])
        ess_err = max(abs(effective_sample_size([c] * n) - n) for n in (1, 2, 10, 1000) for c in (1e-3, 1.0, 7.5))
        solver = RobustDeepMCCFR(KUHN, TrainingConfig(), seed=8, total_iterations=700, on_policy=True)
        weights = [solver.iteration() for _ in range(700)]
        w_max = solver.window.stats()[2]
    acceptance(8, f"entropy {ent:.15f} (ln 2 = {math.log(2):.15f}), ESS err {ess_err:.1e}, "
                  f"on-policy max W {w_max:.12f}; {t.seconds:.1f}s")
    assert abs(ent - math.log(2)) <= 1e-12
    assert ess_err <= 1e-9
    assert abs(w_max - 1.0) <= 1e-9 and abs(max(weights) - 1.0) <= 1e-9
    assert t.seconds < 10


def _fd_grad(f, arr, h=1e-6):
    g = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def test_criterion_09_gradient_correctness(acceptance):
    rng = np.random.default_rng(9)
    worst = 0.0
    with Timer() as t:
        for head, out in (("policy", 3), ("variance", 1)):
            net = ResidualNet(Topology(6, 8, 2, 2, out, head), rng)
            for name, p in net.params.items():
                net.params[name] = p + 0.5 * rng.normal(size=p.shape)
            x = rng.normal(size=(5, 6))
            mask = np.array([[1, 1, 1], [1, 1, 0], [0, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=bool)
            target = rng.dirichlet([1, 1, 1], size=5) * mask
            target /= target.sum(axis=1, keepdims=True)
            y = rng.normal(size=5)

            if head == "policy":
                def loss():
                    p = net.policy(x, mask)
                    return float(-np.sum(target * np.log(np.where(mask, p, 1.0))))

                logits, cache = net.forward(x)
                p = masked_softmax(logits, mask)
                d_out = p - target
            else:
                def loss():
                    return float(np.sum((net.variance(x) - y) ** 2))

                raw, cache = net.forward(x)
                s = softplus(raw[:, 0])
                d_out = (2 * (s - y) / (1 + np.exp(-raw[:, 0])))[:, None]
            grads, _ = net.backward(cache, d_out)
            for name, param in net.params.items():
                num = _fd_grad(loss, param)
                denom = np.maximum(np.abs(grads[name]) + np.abs(num), 1e-7)
                worst = max(worst, float(np.max(np.abs(grads[name] - num) / denom)))
        # the masked-softmax chain rule used by the coupled variance term
        z = rng.normal(size=(3, 3))
        d = rng.normal(size=(3, 3))
        full = np.ones((3, 3), dtype=bool)
        num = _fd_grad(lambda: float(np.sum(masked_softmax(z, full) * d)), z)
        ana = softmax_backward(masked_softmax(z, full), d)
        worst = max(worst, float(np.max(np.abs(ana - num) / np.maximum(np.abs(ana) + np.abs(num), 1e-7))))
    acceptance(9, f"max relative error {worst:.2e} across all parameter blocks; {t.seconds:.1f}s")
    assert worst < 1e-4
    assert t.seconds < 30


def test_criterion_10_variance_risk(acceptance):
    topo = Topology(KUHN.game.input_size, 64, 4, 4, 2)
    net = ResidualNet(topo, np.random.default_rng(10))
    net.params["out.b"] = np.array([5.0, -5.0])  # the rare action gets e^-10, about 4.5e-5
    sampler = policy_table(KUHN, net)
    target = KUHN.uniform_profile()
    rng = np.random.default_rng(11)
    n = 100_000
    with Timer() as t:
        var = {}
        for eps in (0.0, 0.1):
            w = np.array([importance_weight(sample_trajectory(KUHN, target, sampler, eps, rng=rng)) for _ in range(n)])
            var[eps] = float(np.var(w, ddof=1))
    exact = {
        eps: sum(z.sample_reach * importance_weight(z) ** 2 for z in enumerate_trajectories(KUHN, target, sampler, eps)) - 1.0
        for eps in (0.0, 0.1)
    }
    ratio = var[0.0] / var[0.1]
    acceptance(10, f"Var[W] eps=0: {var[0.0]:.1f} (exact {exact[0.0]:.1f}), eps=0.1: {var[0.1]:.3f} "
                   f"(exact {exact[0.1]:.3f}); ratio {ratio:.0f}x; {t.seconds:.1f}s")
    assert ratio >= 10
    assert t.seconds < 60
