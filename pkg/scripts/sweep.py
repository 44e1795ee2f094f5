"""ED-count and UAV-count EE sweeps for the baselines and, optionally, a trained run.

Thin wrapper over ``uavlora evaluate`` followed by ``uavlora export-plots``.

    python scripts/sweep.py --checkpoint runs/<train-run> --episodes 2
"""
import argparse
import sys
from pathlib import Path

from uavlora.cli import main as cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", type=Path)
    ap.add_argument("--episodes", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    args, rest = ap.parse_known_args()

    argv = ["evaluate", "--out", str(args.out), "--episodes", str(args.episodes), *rest]
    if args.checkpoint:
        argv += ["--checkpoint", str(args.checkpoint)]
    if cli(argv) != 0:
        return 1
    latest = max(args.out.iterdir(), key=lambda p: p.stat().st_mtime)
    return cli(["export-plots", "--out", str(args.out / "plots"), "--runs", str(latest)])


if __name__ == "__main__":
    sys.exit(main())
