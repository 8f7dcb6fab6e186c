"""Command line interface: run, sweep, oracle-check.

``run`` executes every configured seed and writes per-seed plus aggregate
metrics as CSV and JSON. ``sweep`` executes a (value x scheme x seed) grid
into one CSV with rows in deterministic order regardless of worker count.
``oracle-check`` audits the subchannel allocator against the exhaustive
optimum on random small instances and exits non-zero on any violation.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from . import config as config_mod
from . import report
from .allocator import (
    AllocatorConfig,
    UtilityContext,
    brute_force_alloc,
    init_matching,
    matching_utility,
    swap_matching,
)
from .config import ConfigError, RunConfig, SweepSpec
from .engine import run_simulation
from .instances import instance_to_dict, random_instance
from .rngstreams import substream
from .scenario import ScenarioError


def _run_seed_task(args):
    raw, seed, keep_power_traces = args
    cfg = config_mod.from_dict(raw)
    metrics = run_simulation(cfg, seed, keep_power_traces=keep_power_traces)
    return seed, metrics


def _sweep_task(args):
    raw, parameter, value, scheme, seed = args
    raw2 = config_mod.set_by_path(raw, parameter, value)
    raw2["scheme"] = scheme
    raw2["seeds"] = [seed]
    cfg = config_mod.from_dict(raw2)
    metrics = run_simulation(cfg, seed)
    return (value, scheme, seed), metrics


def _pool_map(tasks, fn, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def cmd_run(args) -> int:
    cfg = config_mod.load_config(args.config)
    raw = cfg.to_dict()
    tasks = [(raw, seed, args.dump_power_traces) for seed in cfg.seeds]
    results = dict(_pool_map(tasks, _run_seed_task, args.workers))
    ordered = [results[seed] for seed in sorted(cfg.seeds)]
    csv_path, json_path = report.write_run_report(args.out, cfg, ordered)
    print(f"wrote {csv_path} and {json_path}")
    if args.figures:
        return _render_figures(csv_path, args.out, kind="run")
    return 0


def cmd_sweep(args) -> int:
    raw, spec = config_mod.load_sweep(args.config)
    base_cfg = config_mod.from_dict(raw)
    labels = report.bin_labels(base_cfg.scenario.comm_range_m,
                               base_cfg.distance_bin_m)
    tasks = [
        (raw, spec.parameter, value, scheme, seed)
        for value in spec.values
        for scheme in spec.schemes
        for seed in sorted(base_cfg.seeds)
    ]
    results = dict(_pool_map(tasks, _sweep_task, args.workers))
    rows = []
    for value in spec.values:
        for scheme in spec.schemes:
            for seed in sorted(base_cfg.seeds):
                m = results[(value, scheme, seed)]
                rows.append(report.sweep_row(spec.parameter, value, m, labels))
    path = report.write_sweep_csv(args.out, labels, rows)
    print(f"wrote {path}")
    if args.figures:
        return _render_figures(path, args.out, kind="sweep")
    return 0


def _render_figures(csv_path, out_dir, kind: str) -> int:
    try:
        import sweepfig
    except ImportError:
        print(
            "figure rendering requires the sweepfig package "
            "(see the plots/ directory); install it and rerun with --figures",
            file=sys.stderr,
        )
        return 1
    if kind != "sweep":
        print("--figures currently renders sweep CSVs only", file=sys.stderr)
        return 1
    paths = sweepfig.render_default_figures(csv_path, out_dir)
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_oracle_check(args) -> int:
    rng = substream(args.seed, 0)
    ratios = []
    worst = None
    for trial in range(args.trials):
        tx_ids, sc_ids, acfg, ctx = random_instance(
            rng, max_tx=args.max_tx, max_subchannels=args.max_subchannels,
            max_quota=args.max_quota)
        init_rng = substream(args.seed, 1, trial)
        initial = init_matching(sorted(tx_ids), sc_ids, acfg, init_rng)
        initial_util = matching_utility(initial, ctx)
        final, diag = swap_matching(initial, ctx, acfg)
        final.check_quotas()
        final_util = matching_utility(final, ctx)
        _, best_util = brute_force_alloc(tx_ids, sc_ids, acfg, ctx)
        ratio = final_util / best_util if best_util > 0 else 1.0
        ratios.append(ratio)
        failure = None
        if final_util < initial_util - 1e-12:
            failure = "final utility below initial utility"
        elif best_util < final_util - 1e-9:
            failure = "local search exceeded the exhaustive optimum"
        elif not diag.converged:
            failure = "did not converge within the move budget"
        if failure:
            print(f"violation on trial {trial}: {failure}", file=sys.stderr)
            print(yaml.safe_dump(
                instance_to_dict(tx_ids, sc_ids, acfg, ctx), sort_keys=True),
                file=sys.stderr)
            return 2
        if worst is None or ratio < worst[0]:
            worst = (ratio, trial)
    mean_ratio = sum(ratios) / len(ratios)
    print(f"oracle-check: {args.trials} trials, mean utility ratio "
          f"{mean_ratio:.4f}, worst {worst[0]:.4f} (trial {worst[1]})")
    if mean_ratio < 0.9:
        print("violation: mean utility ratio below 0.9", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noma-v2x",
        description="Slot-level simulator of non-orthogonal V2V spectrum sharing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every configured seed")
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--out", type=Path, default=Path("."))
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--dump-power-traces", action="store_true")
    p_run.add_argument("--figures", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep grid")
    p_sweep.add_argument("--config", required=True, type=Path)
    p_sweep.add_argument("--out", type=Path, default=Path("."))
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--figures", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_oracle = sub.add_parser(
        "oracle-check",
        help="audit the allocator against exhaustive search on random instances")
    p_oracle.add_argument("--trials", type=int, default=200)
    p_oracle.add_argument("--max-tx", type=int, default=4)
    p_oracle.add_argument("--max-subchannels", type=int, default=3)
    p_oracle.add_argument("--max-quota", type=int, default=2)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
