#!/usr/bin/env python3
"""Motivation analyses: (a) how much of observed reward a random policy can
explain from item popularity alone, (b) the metric gain from purifying
states before a fixed scoring policy, and (c) raw vs purified state dumps
for external embedding plots.

Trains a denoiser first unless --dsrm-ckpt points at an existing one.

Usage: python scripts/run_motivation.py --out runs/motivate
"""

import argparse
import os
import sys

from dsrm_hrl.config import RunConfig, load_config
from dsrm_hrl.pipeline import run_motivate, run_train_dsrm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None, help="run-config file")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dsrm-ckpt", default=None,
                    help="existing denoiser checkpoint (else one is trained)")
    ap.add_argument("--out", default="runs/motivate")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else RunConfig()
    cfg.env.seed = args.seed
    os.makedirs(args.out, exist_ok=True)

    ckpt = args.dsrm_ckpt
    if ckpt is None:
        ckpt = os.path.join(args.out, "dsrm.ckpt")
        run_train_dsrm(cfg, args.seed, ckpt)
    run_motivate(cfg, args.seed, args.out, dsrm_ckpt=ckpt)
    return 0


if __name__ == "__main__":
    sys.exit(main())
