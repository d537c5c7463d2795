#!/usr/bin/env python3
"""Run the three shipped scenarios end to end into ./results/.

Equivalent to:

    loopsim run --scenario compress      --config configs/compress.yaml
    loopsim run --scenario adaptive-vnf  --config configs/adaptive_vnf.yaml
    loopsim run --scenario conflict-demo --config configs/conflict_demo.yaml

Pass --strict to exit nonzero when any scenario threshold check fails.
"""

import argparse
import sys
from pathlib import Path

from loopsim.cli import main as loopsim_main

CONFIGS = {
    "compress": "compress.yaml",
    "adaptive-vnf": "adaptive_vnf.yaml",
    "conflict-demo": "conflict_demo.yaml",
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output root directory")
    parser.add_argument("--seed", type=int, default=None, help="override every seed")
    parser.add_argument("--strict", action="store_true")
    args = parser.parse_args()

    config_dir = Path(__file__).resolve().parents[1] / "configs"
    worst = 0
    for scenario, config in CONFIGS.items():
        print(f"=== {scenario} ===")
        argv = ["run", "--scenario", scenario,
                "--config", str(config_dir / config),
                "--out", str(Path(args.out) / scenario)]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        if args.strict:
            argv.append("--strict")
        code = loopsim_main(argv)
        worst = max(worst, code)
        print()
    return worst


if __name__ == "__main__":
    sys.exit(main())
