"""Command-line entry point: ``robust-mccfr <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import harness
from .games import get_game
from .neural import load_checkpoint
from .tabular import exploitability, read_table_csv
from .tree import get_tree


def _settings(args) -> dict:
    s = harness.parse_config_file(args.config) if args.config else {}
    for key in ("domain", "preset", "seed", "iters", "out"):
        val = getattr(args, key, None)
        if val is not None:
            s[key] = val
    return s


def cmd_run(args) -> int:
    config = harness.build_run_config(_settings(args))
    res = harness.run(config)
    print(f"domain={config.domain} preset={config.preset} seed={config.seed} iterations={config.iterations}")
    print(f"final exploitability (average strategy): {res.final_exploitability:.6f}")
    print(f"final exploitability (current strategy): {res.final_exploitability_current:.6f}")
    print(f"training time: {res.seconds:.1f}s")
    if config.out_dir:
        print(f"outputs written to {config.out_dir}")
    return 0


def _base(args):
    s = _settings(args)
    for key in ("seed", "out", "preset"):
        s.pop(key, None)
    domain = s.pop("domain", "kuhn")
    iters = s.pop("iters", s.pop("iterations", 0))
    for key in ("eval_every", "snapshot_every"):
        s.pop(key, None)
    return domain, iters, harness.TrainingConfig(**s)


def cmd_ablate(args) -> int:
    domain, iters, base = _base(args)
    summary = harness.run_ablation_suite(domain, args.seeds, args.out, iters, base)
    print(harness.format_summary(summary, "preset"), end="")
    return 0 if all(r["failed"] == 0 for r in summary) else 1


def cmd_sweep(args) -> int:
    domain, iters, base = _base(args)
    summary = harness.run_sensitivity_sweep(domain, args.param, args.values, args.seeds, args.out, iters, base)
    print(harness.format_summary(summary, "setting"), end="")
    return 0 if all(r["failed"] == 0 for r in summary) else 1


def cmd_eval_checkpoint(args) -> int:
    path = Path(args.checkpoint)
    tree = get_tree(args.domain)
    for name in ("f", "g", "v", "f_target", "g_target"):
        f = path / f"{name}.bin"
        if f.exists():
            net = load_checkpoint(f)
            print(f"{name}: {net.num_params} parameters, {net.topology}")
    profile = read_table_csv(path / "average_strategy.csv", tree)
    print(f"exploitability of stored average strategy: {exploitability(tree, profile):.6f}")
    return 0


def cmd_enumerate(args) -> int:
    game = get_game(args.domain)
    start = time.perf_counter()
    keys = game.enumerate_infosets()
    elapsed = time.perf_counter() - start
    if args.list:
        for k in keys:
            print(k)
    per_player = [sum(1 for k in keys if k.player == p) for p in (0, 1)]
    print(f"{args.domain}: {len(keys)} information sets ({per_player[0]} + {per_player[1]}) in {elapsed:.3f}s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-mccfr", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=False):
        sp.add_argument("--domain", choices=("kuhn", "leduc"))
        sp.add_argument("--iters", type=int)
        sp.add_argument("--out")
        sp.add_argument("--config", help="file of 'key = value' lines; flags take precedence")
        if seeds:
            sp.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])

    r = sub.add_parser("run", help="train one configuration")
    common(r)
    r.add_argument("--preset", choices=sorted(harness.PRESETS))
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("ablate", help="run every preset over several seeds")
    common(a, seeds=True)
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep", help="vary one hyperparameter of the full configuration")
    common(s, seeds=True)
    s.add_argument("--param", required=True, choices=sorted(harness.SWEEP_GRID))
    s.add_argument("--values", type=float, nargs="+")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval-checkpoint", help="report exploitability of a saved run")
    e.add_argument("checkpoint")
    e.add_argument("--domain", default="kuhn", choices=("kuhn", "leduc"))
    e.set_defaults(func=cmd_eval_checkpoint)

    n = sub.add_parser("enumerate", help="count information sets")
    n.add_argument("--domain", default="kuhn", choices=("kuhn", "leduc"))
    n.add_argument("--list", action="store_true", help="print every infoset key")
    n.set_defaults(func=cmd_enumerate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "sweep" and args.values and args.param == "tau_target":
        args.values = [int(v) for v in args.values]
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
