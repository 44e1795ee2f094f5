"""Command-line entry point: ``uavlora <subcommand> [flags]`` (or ``python -m uavlora``)."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .association import write_snapshot
from .baselines import (GreedyController, RandomController, SearchSpaceTooLarge, WorldSnapshot,
                        allocation_ee, allocation_to_actions, exhaustive_oracle, greedy_policy,
                        random_policy)
from .config import ConfigError, ScenarioConfig, load_config, save_config
from .environment import LoRaUavEnv, RadioSets
from .mappo import execute, load_controller, train
from .rng import stream

ED_SWEEP = (10, 20, 40, 60, 80, 100)
UAV_SWEEP = (2, 3, 4, 5, 6, 7, 8)
UAV_SWEEP_EDS = 60
ORACLE_RADIO = RadioSets(sf_set=(7, 12), tp_set_dbm=(2.0, 14.0), bw_set_khz=(125,))
SWEEP_FIELDS = ("num_eds", "num_uavs", "seed", "random_ee", "greedy_ee", "trained_ee",
                "random_success", "greedy_success", "trained_success")
ORACLE_FIELDS = ("instance", "num_eds", "num_uavs", "served", "evaluations", "oracle_ee", "greedy_ee", "random_ee")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario config (JSON); defaults are used when omitted")
    common.add_argument("--seed", type=int, help="master seed (train/evaluate default: the config's seed list)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="root directory for run outputs")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. world.num_eds=20 (repeatable)")

    p = argparse.ArgumentParser(prog="uavlora", description="UAV-gateway LoRa resource allocation experiments")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    s = sub.add_parser("simulate", parents=[common], help="roll out a fixed policy and write an episode trace")
    s.add_argument("--policy", choices=("random", "greedy", "checkpoint"), default="random")
    s.add_argument("--checkpoint", type=Path, nargs="+", help="actor checkpoint file(s) for --policy checkpoint")
    s.add_argument("--episodes", type=int, default=1)

    sub.add_parser("train", parents=[common], help="train MAPPO and write metrics and checkpoints")

    e = sub.add_parser("evaluate", parents=[common], help="EE / success sweeps over ED and UAV counts")
    e.add_argument("--checkpoint", type=Path, nargs="+",
                   help="actor checkpoint file(s) or a training run directory")
    e.add_argument("--episodes", type=int, default=1)
    e.add_argument("--ed-counts", type=int, nargs="+", default=list(ED_SWEEP))
    e.add_argument("--uav-counts", type=int, nargs="+", default=list(UAV_SWEEP))
    e.add_argument("--uav-sweep-eds", type=int, default=UAV_SWEEP_EDS)

    o = sub.add_parser("oracle", parents=[common], help="exhaustive single-step search on tiny instances")
    o.add_argument("--instances", type=int, default=10)
    o.add_argument("--num-eds", type=int, default=4)

    x = sub.add_parser("export-plots", parents=[common], help="CSV series for reward curves and EE bars")
    x.add_argument("--runs", type=Path, nargs="+", required=True,
                   help="training and/or evaluation run directories")

    sub.add_parser("validate-config", parents=[common], help="check a config file and report every problem")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
    except (ConfigError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    problems = cfg.validate()
    if problems:
        print("invalid config:", file=sys.stderr)
        for msg in problems:
            print(f"  - {msg}", file=sys.stderr)
        return 2
    if args.command == "validate-config":
        print(f"config OK (digest {cfg.digest()})")
        return 0
    handler = {
        "simulate": cmd_simulate,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "oracle": cmd_oracle,
        "export-plots": cmd_export_plots,
    }[args.command]
    try:
        return handler(cfg, args)
    except (ValueError, SearchSpaceTooLarge, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _seeds(cfg: ScenarioConfig, args) -> list[int]:
    return [args.seed] if args.seed is not None else list(cfg.train.seeds)


def _open_run(cfg: ScenarioConfig, args, seed: int) -> Path:
    out = io.run_dir(args.out, seed, cfg.digest())
    save_config(cfg, out / "config.json")
    return out


def _controller(kind: str, env: LoRaUavEnv, seed: int, checkpoints=None):
    if kind == "random":
        return RandomController(env.radio_sets, env.num_slots, stream(seed, "baseline-actions"))
    if kind == "greedy":
        return GreedyController(env.radio_sets, env.channel.noise_dbm, env.thresholds, env.world.per_ed_actions)
    if not checkpoints:
        raise ValueError("--policy checkpoint needs --checkpoint")
    return load_controller(_actor_files(checkpoints), env)


def _actor_files(paths: Sequence[Path]) -> list[Path]:
    if len(paths) == 1 and paths[0].is_dir():
        found = sorted((paths[0] / "checkpoints").glob("actor_final_*.npz")) or sorted(paths[0].glob("actor_final_*.npz"))
        if not found:
            raise FileNotFoundError(f"no actor_final_*.npz under {paths[0]}")
        return found
    return list(paths)


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    seed = 0 if args.seed is None else args.seed
    out = _open_run(cfg, args, seed)
    env = LoRaUavEnv(cfg)
    ctrl = _controller(args.policy, env, seed, args.checkpoint)
    header = io.trace_header(cfg.digest(), seed, args.policy, env.num_eds, env.num_uavs)
    with io.TraceWriter(out / "trace.jsonl", header) as trace:
        for k in range(args.episodes):
            _, obs = env.reset(seed=seed if k == 0 else None)
            ctrl.reset(env.num_uavs)
            done = False
            while not done:
                _, obs, reward, done, info = env.step(ctrl.act(obs))
                trace.write(info, reward)
    s = env.state
    write_snapshot(out / "association.csv", s.association, s.distances, s.gains)
    print(out)
    return 0


def cmd_train(cfg: ScenarioConfig, args) -> int:
    for seed in _seeds(cfg, args):
        out = _open_run(cfg, args, seed)
        with io.MetricsWriter(out / "metrics.csv") as metrics:
            _, rows = train(cfg, seed, out_dir=out, on_update=metrics.write)
        last = rows[-1] if rows else {}
        print(f"{out}  final mean_reward={last.get('mean_reward', float('nan')):.4f}")
    return 0


def _evaluate_point(cfg: ScenarioConfig, seed: int, episodes: int, checkpoints) -> dict:
    row = {"num_eds": cfg.world.num_eds, "num_uavs": cfg.world.num_uavs, "seed": seed}
    for kind in ("random", "greedy", "trained"):
        env = LoRaUavEnv(cfg)
        if kind == "trained":
            if not checkpoints:
                continue
            try:
                ctrl = load_controller(checkpoints, env)
            except ValueError:
                continue  # the trained network does not fit this scenario's observation width
        else:
            ctrl = _controller(kind, env, seed)
        rep = execute(ctrl, env, episodes, seed)
        row[f"{kind}_ee"] = rep.mean_step_ee
        row[f"{kind}_success"] = rep.success_rate
    return row


def cmd_evaluate(cfg: ScenarioConfig, args) -> int:
    checkpoints = _actor_files(args.checkpoint) if args.checkpoint else None
    seeds = _seeds(cfg, args)
    out = _open_run(cfg, args, seeds[0] if len(seeds) == 1 else 0)
    ed_rows, uav_rows = [], []
    for seed in seeds:
        for v in args.ed_counts:
            ed_rows.append(_evaluate_point(cfg.replace(world={"num_eds": v}), seed, args.episodes, checkpoints))
        for u in args.uav_counts:
            point = cfg.replace(world={"num_eds": args.uav_sweep_eds, "num_uavs": u})
            uav_rows.append(_evaluate_point(point, seed, args.episodes, checkpoints))
    io.write_table(out / "ed_sweep.csv", SWEEP_FIELDS, ed_rows)
    io.write_table(out / "uav_sweep.csv", SWEEP_FIELDS, uav_rows)
    print(out)
    return 0


def run_oracle_instance(cfg: ScenarioConfig, seed: int, instance: int) -> dict:
    """Oracle, greedy and random per-step EE on one freshly placed tiny world."""
    env = LoRaUavEnv(cfg, instance=instance)
    env.reset(seed=int(stream(seed, "oracle-instances", instance).integers(2**31)))
    snap = WorldSnapshot.from_env(env)
    result = exhaustive_oracle(snap, env.radio_sets)
    obs = env.observations()
    greedy = [greedy_policy(o, env.radio_sets, env.channel.noise_dbm, env.thresholds) for o in obs]
    rng = stream(seed, "oracle-random", instance)
    rand = [random_policy(o, rng, env.radio_sets) for o in obs]
    ee = {}
    for name, joint in (("greedy", greedy), ("random", rand)):
        ee[name] = allocation_ee(snap, env.radio_sets, env.decode_actions(joint))
    return {
        "instance": instance,
        "num_eds": env.num_eds,
        "num_uavs": env.num_uavs,
        "served": int(sum(1 for a in snap.assignment if a >= 0)),
        "evaluations": result.evaluations,
        "oracle_ee": result.ee,
        "greedy_ee": ee["greedy"],
        "random_ee": ee["random"],
        "_allocation": result.allocation,
        "_env": env,
    }


def cmd_oracle(cfg: ScenarioConfig, args) -> int:
    seed = 0 if args.seed is None else args.seed
    # --override radio.* still wins over the restricted default sets
    radio = cfg.radio if any(o.startswith("radio.") for o in args.override) else ORACLE_RADIO
    tiny = cfg.replace(world={"num_eds": args.num_eds}, radio=dataclasses.asdict(radio))
    out = _open_run(tiny, args, seed)
    rows = []
    for i in range(args.instances):
        r = run_oracle_instance(tiny, seed, i)
        env, alloc = r.pop("_env"), r.pop("_allocation")
        # the environment's own vectorised evaluator must agree with the oracle's
        env_ee = env.evaluate(env.decode_actions(allocation_to_actions(env, alloc)))[3]
        if not np.isclose(env_ee, r["oracle_ee"], rtol=1e-9, atol=0.0):
            raise ValueError(f"instance {i}: oracle EE {r['oracle_ee']} != environment EE {env_ee}")
        rows.append(r)
    io.write_table(out / "oracle.csv", ORACLE_FIELDS, rows)
    print(out)
    return 0


def cmd_export_plots(cfg: ScenarioConfig, args) -> int:
    curves: dict[int, list[dict]] = {}
    sweeps: dict[str, list[dict]] = {"ed_sweep": [], "uav_sweep": []}
    for run in args.runs:
        if (run / "metrics.csv").exists():
            curves[_run_seed(run)] = io.read_metrics(run / "metrics.csv")
        for name in sweeps:
            if (run / f"{name}.csv").exists():
                sweeps[name].extend(io.read_table(run / f"{name}.csv"))
    seed = 0 if args.seed is None else args.seed
    out = _open_run(cfg, args, seed)
    if curves:
        io.write_table(out / "reward_curve.csv", io.REWARD_CURVE_FIELDS, io.reward_curve_rows(curves))
    for name, key in (("ed_sweep", "num_eds"), ("uav_sweep", "num_uavs")):
        if sweeps[name]:
            io.write_table(out / f"ee_bars_{key}.csv", BAR_FIELDS, ee_bar_rows(sweeps[name], key))
    print(out)
    return 0


def _run_seed(run: Path) -> int:
    """Seed encoded in a run directory name ``<stamp>-s<seed>-<digest>``."""
    for part in run.name.split("-"):
        if part.startswith("s") and part[1:].isdigit():
            return int(part[1:])
    raise ValueError(f"cannot tell the seed of run directory {run}")


BAR_FIELDS = ("x", "policy", "mean_ee", "std_ee", "n")


def ee_bar_rows(rows: list[dict], key: str) -> list[dict]:
    """Mean and std of per-step EE across seeds, per sweep point and policy."""
    out = []
    points = sorted({int(r[key]) for r in rows})
    for x in points:
        for policy in ("random", "greedy", "trained"):
            vals = [float(r[f"{policy}_ee"]) for r in rows if int(r[key]) == x and r.get(f"{policy}_ee") not in ("", None)]
            if vals:
                out.append({"x": x, "policy": policy, "mean_ee": float(np.mean(vals)),
                            "std_ee": float(np.std(vals)), "n": len(vals)})
    return out


if __name__ == "__main__":
    sys.exit(main())
