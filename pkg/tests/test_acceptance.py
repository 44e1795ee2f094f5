"""Acceptance criteria 1-10. Each test records a one-line verdict (see conftest)."""
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import gradcheck
from uavlora import association as assoc
from uavlora import channel as ch
from uavlora.baselines import (GreedyController, RandomController, WorldSnapshot, allocation_ee,
                               allocation_to_actions, exhaustive_oracle, greedy_policy, random_policy)
from uavlora.config import ScenarioConfig, load_config
from uavlora.environment import LoRaUavEnv, RadioSets
from uavlora.mappo import MappoLearner, execute, train
from uavlora.rng import stream

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CONFIG = ROOT / "configs" / "default.json"

TRAIN_STEPS = 50_000
TRAIN_SEEDS = (0, 42, 2021)
EVAL_EPISODES = 5
EVAL_SEED = 777


# -- 1 ---------------------------------------------------------------------------

TABLE_I = {  # (SF, BW kHz) -> dB
    (7, 125): -7.5, (8, 125): -10, (9, 125): -12.5, (10, 125): -15, (11, 125): -18, (12, 125): -21,
    (7, 250): -9, (8, 250): -12, (9, 250): -14.5, (10, 250): -17, (11, 250): -20, (12, 250): -23,
    (7, 500): -11, (8, 500): -13.8, (9, 500): -16.5, (10, 500): -19, (11, 500): -21.8, (12, 500): -25,
}

TABLE_II = {
    "channel.uav_altitude_m": 90.0,
    "channel.carrier_hz": 868e6,
    "channel.light_speed": 3e8,
    "channel.env_a": 4.88,
    "channel.env_b": 0.43,
    "channel.excess_los_db": 0.1,
    "channel.excess_nlos_db": 21.0,
    "channel.noise_dbm": -120.0,
    "mobility.dt": 0.5,
    "mobility.memory": 0.85,
    "mobility.randomness": 0.5,
    "mobility.mean_speed": 0.005,
    "mobility.v_max": 1.0,
    "radio.tp_set_dbm": [2.0, 5.0, 8.0, 11.0, 14.0],
    "radio.bw_set_khz": [125, 250, 500],
    "radio.sf_set": [7, 8, 9, 10, 11, 12],
    "train.lr": 1e-4,
    "train.gamma": 0.99,
    "train.clip": 0.2,
    "train.epochs": 15,
    "train.total_steps": 2_000_000,
    "world.horizon": 150,
    "train.minibatch": 16,
    "train.tau": 0.01,
    "train.rollout_length": 32,
    "train.hidden": 128,
    "train.architecture": "GRU",
    "train.optimizer": "Adam",
    "train.activation": "ReLU",
    "train.seeds": [0, 42, 2021],
    "reward.w_ee": 4e-4,
    "reward.w_success": 5.0,
    "reward.w_margin": 1.0,
    "reward.w_power": -1e-2,
    "mobility.area_side": 1000.0,
}


def test_1_table_fidelity(acceptance):
    table_bad = [(k, v) for k, v in TABLE_I.items() if ch.DEFAULT_THRESHOLDS.lookup(*k) != v]
    shipped = json.loads(DEFAULT_CONFIG.read_text())
    cfg_bad = []
    for key, want in TABLE_II.items():
        section, name = key.split(".")
        if shipped[section][name] != want:
            cfg_bad.append((key, shipped[section][name], want))
    assert load_config(DEFAULT_CONFIG) == ScenarioConfig()
    ok = not table_bad and not cfg_bad
    acceptance(1, ok, f"{len(TABLE_I) - len(table_bad)}/18 threshold cells, "
                      f"{len(TABLE_II) - len(cfg_bad)}/{len(TABLE_II)} shipped defaults exact")
    assert ok, (table_bad, cfg_bad)


# -- 2 ---------------------------------------------------------------------------

def test_2_channel_analytics(acceptance):
    p = ch.ChannelParams()
    fspl = float(ch.fspl_db(1000.0, 868e6))
    plos = float(ch.p_los(4.88, p))
    grid = ch.p_los(np.arange(0.0, 90.0 + 1e-9, 0.1), p)
    monotone = bool(np.all(np.diff(grid) >= 0))
    ok = abs(fspl - 91.21) <= 0.01 and abs(plos - 1 / 5.88) <= 1e-9 and monotone
    acceptance(2, ok, f"FSPL={fspl:.4f} dB, P_LoS(4.88)={plos:.12f}, monotone on 0.1 deg grid={monotone}")
    assert ok


# -- 3 ---------------------------------------------------------------------------

def test_3_gradient_fidelity(acceptance):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        learner = gradcheck.tiny_learner(seed, share_actor=seed % 2 == 0)
        errors = gradcheck.check(learner, gradcheck.random_batch(learner, rng), rng, coords=30)
        worst = max(worst, *errors.values())
    ok = worst <= 1e-4
    acceptance(3, ok, f"20 instances, worst relative error {worst:.2e} (limit 1e-4)")
    assert ok


# -- 4 ---------------------------------------------------------------------------

def _replay(d, g, quota, comm):
    V, U = len(g), len(g[0])
    load, out = [0] * U, []
    for v in range(V):
        best = -1
        for u in range(U):
            if d[v][u] <= comm and load[u] < quota and (best < 0 or g[v][u] > g[v][best]):
                best = u
        if best >= 0:
            load[best] += 1
        out.append(best)
    return out


def test_4_association(acceptance):
    rng = np.random.default_rng(4)
    violations = mismatches = scale_changes = 0
    for _ in range(1000):
        V, U = int(rng.integers(1, 40)), int(rng.integers(1, 9))
        quota = int(rng.integers(1, V + 1))
        pos = rng.uniform(0, 1000, size=(V, 2))
        uavs = rng.uniform(0, 1000, size=(U, 2))
        d = ch.horizontal_distances(pos, uavs)
        g = ch.channel_gain(d, ch.ChannelParams())
        s = assoc.match(d, g, quota, 800.0)
        m = s.matrix
        served = np.flatnonzero(s.assignment >= 0)
        if (m.sum(0) > 1).any() or (m.sum(1) > quota).any() or (d[served, s.assignment[served]] > 800).any():
            violations += 1
        if s.assignment.tolist() != _replay(d.tolist(), g.tolist(), quota, 800.0):
            mismatches += 1
        k = float(10 ** rng.uniform(-6, 6))
        if not np.array_equal(assoc.match(d, g * k, quota, 800.0).assignment, s.assignment):
            scale_changes += 1
    ok = violations == mismatches == scale_changes == 0
    acceptance(4, ok, f"1000 instances: {violations} constraint violations, {mismatches} replay mismatches, "
                      f"{scale_changes} rescaling changes")
    assert ok


# -- 5 ---------------------------------------------------------------------------

ORACLE_RADIO = RadioSets(sf_set=(7, 12), tp_set_dbm=(2.0, 14.0), bw_set_khz=(125,))


def test_5_oracle_consistency(acceptance):
    cfg = ScenarioConfig().replace(world={"num_eds": 4, "num_uavs": 2}, radio={
        "sf_set": ORACLE_RADIO.sf_set, "tp_set_dbm": ORACLE_RADIO.tp_set_dbm, "bw_set_khz": ORACLE_RADIO.bw_set_khz})
    worst_rel, order_fail = 0.0, 0
    for i in range(100):
        env = LoRaUavEnv(cfg, instance=i)
        env.reset(seed=5000 + i)
        snap = WorldSnapshot.from_env(env)
        best = exhaustive_oracle(snap, env.radio_sets)
        obs = env.observations()
        rng = stream(5, "acceptance-random", i)
        alloc_greedy = env.decode_actions([greedy_policy(o, env.radio_sets, env.channel.noise_dbm) for o in obs])
        alloc_random = env.decode_actions([random_policy(o, rng, env.radio_sets) for o in obs])
        for alloc in (best.allocation, alloc_greedy, alloc_random):
            env_ee = env.evaluate(env.decode_actions(allocation_to_actions(env, alloc)))[3]
            ref = allocation_ee(snap, env.radio_sets, alloc)
            worst_rel = max(worst_rel, abs(env_ee - ref) / max(abs(ref), 1e-300))
        g = allocation_ee(snap, env.radio_sets, alloc_greedy)
        r = allocation_ee(snap, env.radio_sets, alloc_random)
        if not (best.ee >= g >= 0 and best.ee >= r):
            order_fail += 1
    ok = worst_rel <= 1e-9 and order_fail == 0
    acceptance(5, ok, f"100 instances: worst env/oracle relative gap {worst_rel:.1e}, "
                      f"{order_fail} ordering violations")
    assert ok


# -- 6 / 7 -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained():
    """Train each seed once; criteria 6 and 7 share the runs."""
    cfg = ScenarioConfig().replace(train={"total_steps": TRAIN_STEPS})
    runs = {}
    for seed in TRAIN_SEEDS:
        t0 = time.time()
        learner, rows = train(cfg, seed)
        runs[seed] = (learner, rows, time.time() - t0)
    return cfg, runs


def _mean_random_reward(cfg, seed):
    env = LoRaUavEnv(cfg)
    ctrl = RandomController(env.radio_sets, env.num_slots, stream(seed, "baseline-actions"))
    return execute(ctrl, env, EVAL_EPISODES, seed)


@pytest.mark.slow
def test_6_training_smoke(acceptance, trained):
    cfg, runs = trained
    lines, passed = [], 0
    for seed, (_, rows, secs) in runs.items():
        rewards = np.array([r["mean_reward"] for r in rows])
        k = max(1, len(rewards) // 10)
        first, last = rewards[:k].mean(), rewards[-k:].mean()
        rand = _mean_random_reward(cfg, seed).mean_step_reward
        ok = last > first and last >= 1.2 * rand
        passed += ok
        lines.append(f"seed {seed}: first {first:.2f} last {last:.2f} random {rand:.2f} ({secs / 60:.1f} min)")
    ok = passed >= 2
    acceptance(6, ok, f"{passed}/3 seeds pass; " + "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_7_baseline_relative_ee(acceptance, trained):
    cfg, runs = trained
    lines, passed = [], 0
    for seed, (learner, _, _) in runs.items():
        env = LoRaUavEnv(cfg)
        ee_trained = execute(learner.controller(greedy=True), env, EVAL_EPISODES, EVAL_SEED + seed).mean_step_ee
        greedy = GreedyController(env.radio_sets, env.channel.noise_dbm, env.thresholds)
        ee_greedy = execute(greedy, LoRaUavEnv(cfg), EVAL_EPISODES, EVAL_SEED + seed).mean_step_ee
        ee_random = _mean_random_reward(cfg, EVAL_SEED + seed).mean_step_ee
        ok = ee_trained >= 0.9 * ee_greedy and ee_trained > ee_random
        passed += ok
        lines.append(f"seed {seed}: trained {ee_trained:.0f} greedy {ee_greedy:.0f} random {ee_random:.0f}")
    ok = passed >= 2
    acceptance(7, ok, f"{passed}/3 seeds pass; " + "; ".join(lines))
    assert ok


# -- 8 ---------------------------------------------------------------------------

def test_8_uav_count_trend(acceptance):
    ees = {}
    for U in (2, 3, 4):
        cfg = ScenarioConfig().replace(world={"num_eds": 60, "num_uavs": U})
        vals = []
        for seed in TRAIN_SEEDS:
            env = LoRaUavEnv(cfg)
            ctrl = GreedyController(env.radio_sets, env.channel.noise_dbm, env.thresholds)
            vals.append(execute(ctrl, env, 1, seed).mean_step_ee)
        ees[U] = float(np.mean(vals))
    ok = all(ees[u + 1] >= 0.95 * ees[u] for u in (2, 3))
    acceptance(8, ok, "greedy EE at 60 EDs: " + ", ".join(f"U={u}: {e:.1f}" for u, e in ees.items()))
    assert ok


# -- 9 ---------------------------------------------------------------------------

def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "uavlora", *args], cwd=cwd, capture_output=True, text=True,
                          check=True)


def test_9_determinism(acceptance, tmp_path):
    traces = []
    for name in ("a", "b"):
        _cli("simulate", "--seed", "42", "--out", name, cwd=tmp_path)
        (run,) = (tmp_path / name).iterdir()
        traces.append((run / "trace.jsonl").read_bytes())
    metrics = []
    for name in ("c", "d"):
        _cli("train", "--seed", "0", "--override", "train.total_steps=96", "--out", name, cwd=tmp_path)
        (run,) = (tmp_path / name).iterdir()
        metrics.append((run / "metrics.csv").read_bytes())
    same_trace = traces[0] == traces[1]
    same_metrics = metrics[0] == metrics[1] and metrics[0].count(b"\n") == 5
    ok = same_trace and same_metrics
    acceptance(9, ok, f"simulate traces byte-identical={same_trace} ({len(traces[0])} bytes), "
                      f"training metrics identical={same_metrics}")
    assert ok


# -- 10 --------------------------------------------------------------------------

def test_10_posg_contracts(acceptance, monkeypatch):
    cfg = ScenarioConfig()
    failures = []

    env = LoRaUavEnv(cfg)
    _, obs = env.reset(seed=10)
    rng = np.random.default_rng(10)
    steps, done = 0, False
    while not done:
        for o in obs:
            if np.any(o.matrix[o.num_valid:] != 0) or np.any(o.normalized[o.num_valid:] != 0):
                failures.append(f"nonzero padding at t={steps}")
        joint = [random_policy(o, rng, env.radio_sets) for o in obs]
        _, obs, reward, done, _ = env.step(joint)
        shared = env.rewards_for_agents(reward)
        if len(set(shared)) != 1 or len(shared) != env.num_uavs:
            failures.append(f"unequal agent rewards at t={steps}")
        steps += 1
    if steps != 150:
        failures.append(f"episode length {steps}")

    # a padded world: more slots than served EDs
    sparse = LoRaUavEnv(cfg.replace(world={"num_eds": 3, "quota": 5}))
    for o in sparse.reset(seed=1)[1]:
        if np.any(o.matrix[o.num_valid:] != 0):
            failures.append("nonzero padding in sparse world")

    # the learner stores one shared reward per step for all agents
    learner = MappoLearner(cfg.replace(train={"hidden": 8}), 0)
    buf = learner.collect_rollout(length=4)
    if buf.rewards.shape != (4, 1):
        failures.append("rollout rewards are not shared per step")

    # CTDE: executing a trained-style controller must never touch the global state
    calls = []
    ctde_env = LoRaUavEnv(cfg.replace(train={"hidden": 8}))
    monkeypatch.setattr(ctde_env, "global_state_vector", lambda *a, **k: calls.append(1))
    execute(learner.controller(), ctde_env, 1, 3)
    if calls:
        failures.append("execution path read the global state")

    ok = not failures
    acceptance(10, ok, "shared reward, zero padding, T=150, CTDE separation" + ("" if ok else f": {failures}"))
    assert ok
