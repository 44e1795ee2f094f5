"""Short MAPPO runs on the default 2-UAV / 10-ED scenario, one per seed.

Writes metrics and checkpoints under --out and prints first/last-decile mean
reward against the random policy's mean step reward.

    python scripts/train_smoke.py --steps 50000 --seeds 0 42 2021
"""
import argparse
from pathlib import Path

import numpy as np

from uavlora import io
from uavlora.baselines import RandomController
from uavlora.config import load_config, save_config
from uavlora.environment import LoRaUavEnv
from uavlora.mappo import execute, train
from uavlora.rng import stream


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--steps", type=int, default=50_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 42, 2021])
    ap.add_argument("--out", type=Path, default=Path("runs/smoke"))
    ap.add_argument("--override", action="append", default=[])
    args = ap.parse_args()

    cfg = load_config(args.config, args.override + [f"train.total_steps={args.steps}"])
    for seed in args.seeds:
        out = io.run_dir(args.out, seed, cfg.digest())
        save_config(cfg, out / "config.json")
        with io.MetricsWriter(out / "metrics.csv") as metrics:
            _, rows = train(cfg, seed, out_dir=out, on_update=metrics.write)
        rewards = np.array([r["mean_reward"] for r in rows])
        k = max(1, len(rewards) // 10)
        env = LoRaUavEnv(cfg)
        rand = execute(RandomController(env.radio_sets, env.num_slots, stream(seed, "baseline-actions")),
                       env, 5, seed).mean_step_reward
        print(f"seed {seed}: first decile {rewards[:k].mean():.3f}  last decile {rewards[-k:].mean():.3f}  "
              f"random {rand:.3f}  ratio {rewards[-k:].mean() / rand:.3f}  -> {out}")


if __name__ == "__main__":
    main()
