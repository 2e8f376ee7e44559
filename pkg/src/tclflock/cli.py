"""Command-line entry point: ``tclflock {run,compare-desync,estimate-beta,validate}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError
from .estimation import DEFAULT_BETAS
from .scenario import compare_desync, estimate_from_archive, load_config, run_scenario

WORKERS_ENV = "TCLFLOCK_WORKERS"


def resolve_workers(flag: int | None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    else:
        n = flag if flag is not None else 1
    if n < 1:
        raise ConfigError(f"worker count must be at least 1, got {n}")
    return n


def _output_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("runs") / cfg.name


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _print(summary: dict):
    shown = {k: v for k, v in summary.items() if not k.startswith("_") and k != "beta_curve"}
    print(json.dumps(shown, indent=2, sort_keys=True, default=str))


def cmd_run(args):
    cfg = _config(args)
    out = _output_dir(args, cfg)
    _print(run_scenario(cfg, out, workers=resolve_workers(args.workers)))
    print(f"outputs written to {out}", file=sys.stderr)


def cmd_compare(args):
    cfg = _config(args)
    if cfg.mode != "desync_compare":
        raise ConfigError(f"compare-desync needs mode desync_compare, config has {cfg.mode}")
    out = _output_dir(args, cfg)
    _print(compare_desync(cfg, out))
    print(f"outputs written to {out}", file=sys.stderr)


def cmd_estimate(args):
    betas = args.betas if args.betas else DEFAULT_BETAS
    out = Path(args.out) if args.out else Path(args.archive).parent / "beta_estimate"
    _print(estimate_from_archive(args.archive, betas, workers=resolve_workers(args.workers), out=out))


def cmd_validate(args):
    cfg = _config(args)
    print(f"{args.config}: ok (mode={cfg.mode}, seed={cfg.seed}, hash={cfg.config_hash()[:12]})")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--workers", type=int, default=None,
                        help=f"parallel workers (the {WORKERS_ENV} variable takes precedence)")

    ap = argparse.ArgumentParser(prog="tclflock", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run a scenario file or preset")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare-desync", parents=[common], help="uniform vs desynchronized MPC")
    p.add_argument("config")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("estimate-beta", parents=[common], help="grid-search beta on a run archive")
    p.add_argument("archive")
    p.add_argument("--betas", type=float, nargs="+", default=None, help="candidate diffusivities")
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("validate", parents=[common], help="parse and check a scenario")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
