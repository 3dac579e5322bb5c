"""Command line entry point: ``starmeta {train,sweep,compare,flops,export}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import apply_scenario, config_diff, desk_config, full_config, load_config
from .harness import (
    architectures,
    compare,
    complexity_report,
    export,
    read_log,
    run_experiment,
    sweep,
)


def _seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"values must be comma separated numbers, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    prof = p.add_mutually_exclusive_group()
    prof.add_argument("--desk", dest="profile", action="store_const", const="desk", help="reduced profile (default)")
    prof.add_argument("--paper", dest="profile", action="store_const", const="paper", help="full-size profile")
    p.set_defaults(profile="desk")
    p.add_argument("--config", type=Path, help="key = value file applied over the profile")
    p.add_argument("--scenario", help="flags joined by '+', e.g. ddpg+passive")
    p.add_argument("--seeds", type=_seeds, help="comma separated seeds, e.g. 1,2,3")
    p.add_argument("--episodes", type=int, help="override the episode count")
    p.add_argument("--jobs", type=int, help="worker processes for the seeds")


def build_config(args):
    base = full_config() if args.profile == "paper" else desk_config()
    cfg = load_config(args.config, base) if args.config else base
    cfg = apply_scenario(cfg, args.scenario)
    changes = {}
    if args.seeds:
        changes["seeds"] = args.seeds
    if args.episodes:
        changes["episodes"] = args.episodes
    if args.jobs:
        changes["n_jobs"] = args.jobs
    cfg = cfg.replace(**changes)
    cfg.validate()
    return cfg, base


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def cmd_train(args) -> int:
    cfg, base = build_config(args)
    _progress(f"training {cfg.scenario} on seeds {list(cfg.seeds)}")
    log = run_experiment(cfg, base=base)
    export(log, args.out)
    for key, value in log.summary(cfg.tail_fraction).items():
        print(f"{key} = {value!r}")
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg, base = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = args.values
    if args.variable in ("elements", "users"):
        values = [int(v) for v in values]

    def runner(c):
        _progress(f"sweep point {c.scenario}: {config_diff(c, cfg)}")
        return run_experiment(c, base=base)

    print(f"{args.variable},tail_total_rate_mean,tail_total_rate_std,file")
    for value, log in sweep(cfg, args.variable, values, runner=runner):
        path = export(log, out / f"{args.variable}_{value}.csv")
        s = log.summary(cfg.tail_fraction)
        print(f"{value},{s['tail_total_rate_mean']!r},{s['tail_total_rate_std']!r},{path}")
    return 0


def cmd_compare(args) -> int:
    a, b = read_log(args.log_a), read_log(args.log_b)
    result = compare(a, b, args.metric, args.tail)
    for line in result.lines():
        print(line)
    return 0


def cmd_flops(args) -> int:
    cfg, _ = build_config(args)
    actor, critic, meta = architectures(cfg)
    if args.no_meta:
        meta = []
    print(f"actor = {actor}")
    print(f"critic = {critic}")
    print(f"meta_critic = {meta}")
    for line in complexity_report(actor, critic, meta, args.act_cost).lines():
        print(line)
    return 0


def cmd_export(args) -> int:
    log = read_log(args.log)
    export(log, args.out)
    print(f"wrote {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starmeta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent per seed and write a metrics CSV")
    _common(p)
    p.add_argument("--out", default="metrics.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="repeat training over a range of one variable")
    _common(p)
    p.add_argument("variable", choices=("p_max", "elements", "users"))
    p.add_argument("values", type=_floats, help="strictly increasing, comma separated")
    p.add_argument("--out", default="sweep", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="relative tail gain of one metrics CSV over another")
    p.add_argument("log_a")
    p.add_argument("log_b")
    p.add_argument("--metric", default="reward", choices=("reward", "total_rate", "min_rate", "feasible_steps"))
    p.add_argument("--tail", type=float, default=0.1, help="fraction of final episodes averaged")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("flops", help="operation counts of the configured networks")
    _common(p)
    p.add_argument("--act-cost", type=float, default=1.0, help="operations per activation")
    p.add_argument("--no-meta", action="store_true", help="drop the meta-critic from the count")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("export", help="re-export a metrics CSV in canonical form")
    p.add_argument("log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
