"""Command-line entry point.

Subcommands: train-dsrm, train, eval, sweep-steps, motivate.
Exit codes: 0 success, 1 validation error, 2 runtime fault.
Progress goes to stderr; data artifacts only to files.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, RunConfig, load_config, render_config
from .pipeline import (log, run_eval, run_motivate, run_sweep_steps,
                       run_train_dsrm, run_train_policy)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.env.seed = args.seed
    cfg.validate()
    log("resolved config:")
    for line in render_config(cfg).splitlines():
        log(f"  {line}")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run-config file path")
    common.add_argument("--seed", type=int, default=None,
                        help="override env.seed from the config")
    common.add_argument("--out", default=".", help="output directory")
    parser = argparse.ArgumentParser(
        prog="dsrm-hrl",
        description="Two-stage fairness-aware recommendation lab: diffusion "
                    "state purification plus hierarchical PPO in a synthetic "
                    "interactive environment.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-dsrm", parents=[common],
                       help="stage I: denoiser pre-training")
    p.add_argument("--epochs", type=int, default=None, help="override dsrm.epochs")

    p = sub.add_parser("train", parents=[common], help="stage II: policy training (denoiser frozen)")
    p.add_argument("--variant", choices=("DSRM-HRL", "FLAT", "HRL-RAW"),
                   default=None, help="override hrl.variant")
    p.add_argument("--dsrm-ckpt", default=None,
                   help="denoiser checkpoint (required for DSRM-HRL and FLAT)")

    p = sub.add_parser("eval", parents=[common], help="greedy evaluation on held-out session seeds")
    p.add_argument("--ckpt", required=True, help="policy checkpoint")
    p.add_argument("--episodes", type=int, default=None, help="override eval.episodes")

    p = sub.add_parser("sweep-steps", parents=[common], help="diffusion-step sensitivity sweep")
    p.add_argument("--steps", default="5,20,200",
                   help="comma-separated diffusion step counts")

    p = sub.add_parser("motivate", parents=[common], help="popularity-bias analyses and state dumps")
    p.add_argument("--dsrm-ckpt", default=None,
                   help="denoiser checkpoint for the purification analyses")
    return parser


def run(args) -> int:
    cfg = _load(args)
    os.makedirs(args.out, exist_ok=True)
    seed = cfg.env.seed
    if args.command == "train-dsrm":
        if args.epochs is not None:
            if args.epochs < 0:
                raise ConfigError("--epochs must be >= 0")
            cfg.dsrm.epochs = args.epochs
        run_train_dsrm(cfg, seed,
                       os.path.join(args.out, "dsrm.ckpt"),
                       os.path.join(args.out, "dsrm_loss.csv"))
    elif args.command == "train":
        if args.variant is not None:
            cfg.hrl.variant = args.variant
        variant_tag = cfg.hrl.variant.lower().replace("-", "_")
        run_train_policy(cfg, seed, args.dsrm_ckpt,
                         os.path.join(args.out, f"policy_{variant_tag}_s{seed}.ckpt"),
                         os.path.join(args.out, f"train_{variant_tag}_s{seed}.csv"))
    elif args.command == "eval":
        run_eval(args.ckpt, episodes=args.episodes,
                 results_path=os.path.join(args.out, "results.csv"))
    elif args.command == "sweep-steps":
        steps = [int(s) for s in args.steps.split(",") if s.strip()]
        if not steps or any(s < 1 for s in steps):
            raise ConfigError(f"--steps must be positive integers, got {args.steps!r}")
        run_sweep_steps(cfg, seed, steps, args.out)
    elif args.command == "motivate":
        run_motivate(cfg, seed, args.out, dsrm_ckpt=args.dsrm_ckpt)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        log(f"error: {exc}")
        return EXIT_VALIDATION
    except Exception as exc:  # runtime fault
        log(f"runtime fault: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
