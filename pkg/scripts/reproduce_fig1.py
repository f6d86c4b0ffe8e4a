#!/usr/bin/env python3
"""Run the coupled-oscillator preset and (if qzeno-plots is installed)
render the three-panel figure.

Usage: python scripts/reproduce_fig1.py [--seed S] [--out DIR]
"""

import argparse
import os
import sys

from qzeno.scenarios import preset_fig1, run_config


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    cfg = preset_fig1(seed=args.seed, out=args.out)
    os.makedirs(cfg.outputs, exist_ok=True)
    manifest = run_config(cfg)
    print(f"outputs in {cfg.outputs} (max leakage {manifest.max_leakage:.2e})")
    try:
        from qzeno_plots import render_fig1_style
    except ImportError:
        print("qzeno-plots not installed; skipping figure")
        return 0
    for path in render_fig1_style(cfg.outputs):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
