"""Oracle vs greedy vs random per-step EE on random tiny worlds.

    python scripts/oracle_check.py --instances 50 --num-eds 4
"""
import argparse

import numpy as np

from uavlora.cli import ORACLE_RADIO, run_oracle_instance
from uavlora.config import ScenarioConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--num-eds", type=int, default=4)
    ap.add_argument("--num-uavs", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = ScenarioConfig().replace(
        world={"num_eds": args.num_eds, "num_uavs": args.num_uavs},
        radio={"sf_set": ORACLE_RADIO.sf_set, "tp_set_dbm": ORACLE_RADIO.tp_set_dbm,
               "bw_set_khz": ORACLE_RADIO.bw_set_khz},
    )
    rows = [run_oracle_instance(cfg, args.seed, i) for i in range(args.instances)]
    oracle = np.array([r["oracle_ee"] for r in rows])
    for name in ("greedy", "random"):
        vals = np.array([r[f"{name}_ee"] for r in rows])
        ratio = vals / np.where(oracle > 0, oracle, 1.0)
        print(f"{name:>6}: mean EE {vals.mean():10.1f}  mean fraction of oracle {ratio.mean():.3f}  "
              f"min {ratio.min():.3f}")
    print(f"oracle: mean EE {oracle.mean():10.1f}  over {len(rows)} instances")


if __name__ == "__main__":
    main()
