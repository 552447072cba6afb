#!/usr/bin/env python3
"""End-to-end experiment on a synthetic corpus: prepare, sweep, evaluate,
project, with every artifact written under one output directory.

Usage:
    python scripts/run_full_experiment.py [--out runs/demo] [--seed 7]
                                          [--config configs/quick.json]

Equivalent to running the vafusion subcommands in sequence; exists as a
single-button reproduction of the whole study design. configs/quick.json
(the default) finishes in a couple of minutes; configs/reference.json is
the full-size recipe and takes on the order of ten minutes.
"""

import argparse
import sys
from pathlib import Path

from vafusion.cli import main as vafusion_main

REPO_ROOT = Path(__file__).resolve().parent.parent


def run(out: str, seed: int | None, config: str) -> int:
    base = ["--config", config, "--out", out]
    if seed is not None:
        base += ["--seed", str(seed)]

    for command in ("prepare", "sweep", "evaluate"):
        print(f"\n=== vafusion {command} ===")
        code = vafusion_main(base + [command])
        if code != 0:
            return code

    model = Path(out) / "models"
    dbow_models = sorted(model.glob("embedding_dbow_*.bin"))
    if dbow_models:
        print("\n=== vafusion project ===")
        code = vafusion_main(base + ["project", "--model", str(dbow_models[0])])
        if code != 0:
            return code

    print(f"\nall artifacts under {out}/")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--config", default=str(REPO_ROOT / "configs" / "quick.json"))
    args = parser.parse_args()
    sys.exit(run(args.out, args.seed, args.config))
