"""Reference allocators: uniform random, threshold-feasible greedy, exhaustive oracle.

The oracle scores allocations with its own scalar evaluator (plain Python
loops over EDs) rather than the vectorised environment code, so the two can
be cross-checked.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import DEFAULT_THRESHOLDS, SnrThresholdTable
from .environment import LoRaUavEnv, Observation, RadioSets

MAX_ORACLE_SPACE = 10**6


class SearchSpaceTooLarge(ValueError):
    def __init__(self, size: int, limit: int = MAX_ORACLE_SPACE):
        super().__init__(f"exhaustive search space has {size} allocations (limit {limit})")
        self.size = size


def random_policy(observation: Observation | None, rng: np.random.Generator, radio: RadioSets = RadioSets(),
                  slots: int | None = None) -> np.ndarray:
    """Uniform indices for every slot; shape (slots, 3)."""
    if slots is None:
        slots = observation.matrix.shape[0]
    sizes = radio.sizes
    return np.stack([rng.integers(0, n, size=slots) for n in sizes], axis=-1)


def greedy_triple(gain: float, radio: RadioSets, noise_dbm: float,
                  table: SnrThresholdTable = DEFAULT_THRESHOLDS) -> tuple[int, int, int]:
    """Minimum-TP feasible (SF, TP, BW) indices; ties to higher BW, then lower SF.

    Falls back to (max SF, max TP, min BW) when nothing meets its threshold.
    """
    gain_db = 10.0 * math.log10(gain) if gain > 0 else -math.inf
    best = None
    for j, tp in enumerate(radio.tp_set_dbm):
        snr_db = tp + gain_db - noise_dbm
        for m, bw in enumerate(radio.bw_set_khz):
            for n, sf in enumerate(radio.sf_set):
                if snr_db < table.lookup(sf, bw):
                    continue
                key = (tp, -bw, sf)
                if best is None or key < best[0]:
                    best = (key, (n, j, m))
    if best is not None:
        return best[1]
    sf_i = int(np.argmax(radio.sf_set))
    tp_i = int(np.argmax(radio.tp_set_dbm))
    bw_i = int(np.argmin(radio.bw_set_khz))
    return sf_i, tp_i, bw_i


def greedy_policy(observation: Observation, radio: RadioSets, noise_dbm: float,
                  table: SnrThresholdTable = DEFAULT_THRESHOLDS, per_ed: bool = True) -> np.ndarray:
    """Greedy triple per occupied slot, computed from the observed gains only."""
    slots = observation.matrix.shape[0] if per_ed else 1
    out = np.zeros((slots, 3), dtype=np.int64)
    gains = observation.matrix[: observation.num_valid, 3]
    if len(gains) == 0:
        return out
    if per_ed:
        for i, g in enumerate(gains):
            out[i] = greedy_triple(float(g), radio, noise_dbm, table)
    else:
        out[0] = greedy_triple(float(np.min(gains)), radio, noise_dbm, table)
    return out


class RandomController:
    def __init__(self, radio: RadioSets, slots: int, rng: np.random.Generator):
        self.radio, self.slots, self.rng = radio, slots, rng

    def reset(self, num_agents: int) -> None:
        pass

    def act(self, observations: Sequence[Observation]) -> list[np.ndarray]:
        return [random_policy(None, self.rng, self.radio, self.slots) for _ in observations]


class GreedyController:
    def __init__(self, radio: RadioSets, noise_dbm: float, table: SnrThresholdTable = DEFAULT_THRESHOLDS,
                 per_ed: bool = True):
        self.radio, self.noise_dbm, self.table, self.per_ed = radio, noise_dbm, table, per_ed

    def reset(self, num_agents: int) -> None:
        pass

    def act(self, observations: Sequence[Observation]) -> list[np.ndarray]:
        return [greedy_policy(o, self.radio, self.noise_dbm, self.table, self.per_ed) for o in observations]


@dataclass(frozen=True)
class WorldSnapshot:
    """Frozen single-timestep view the oracle optimises over."""

    assignment: tuple[int, ...]  # serving UAV per ED, -1 if none
    gains: tuple[tuple[float, ...], ...]  # [v][u]
    num_uavs: int
    hover_w: float
    noise_dbm: float
    same_bw_interference: bool = False

    @classmethod
    def from_env(cls, env: LoRaUavEnv) -> "WorldSnapshot":
        s = env.state
        return cls(
            assignment=tuple(int(a) for a in s.association.assignment),
            gains=tuple(tuple(float(x) for x in row) for row in s.gains),
            num_uavs=env.num_uavs,
            hover_w=env.hover_w,
            noise_dbm=env.channel.noise_dbm,
            same_bw_interference=env.channel.same_bw_interference,
        )


def allocation_ee(snapshot: WorldSnapshot, radio: RadioSets, allocation) -> float:
    """Per-step system EE (bits/J) of an index allocation, one ED at a time."""
    noise_mw = 10.0 ** (snapshot.noise_dbm / 10.0)
    served = [v for v, u in enumerate(snapshot.assignment) if u >= 0]
    sf, tp, bw, snr = {}, {}, {}, {}
    for v in served:
        n, j, m = (int(i) for i in allocation[v])
        sf[v], tp[v], bw[v] = radio.sf_set[n], radio.tp_set_dbm[j], radio.bw_set_khz[m]
        snr[v] = 10.0 ** (tp[v] / 10.0) * snapshot.gains[v][snapshot.assignment[v]] / noise_mw
    rate_u = [0.0] * snapshot.num_uavs
    power_u = [0.0] * snapshot.num_uavs
    for v in served:
        interference = 0.0
        for w in served:
            if w == v or sf[w] != sf[v]:
                continue
            if snapshot.same_bw_interference and bw[w] != bw[v]:
                continue
            interference += snr[w]
        sinr = snr[v] / (interference + 1.0)
        u = snapshot.assignment[v]
        rate_u[u] += bw[v] * 1e3 * math.log2(1.0 + sinr)
        power_u[u] += 10.0 ** ((tp[v] - 30.0) / 10.0)
    return sum(r / (p + snapshot.hover_w) for r, p in zip(rate_u, power_u))


@dataclass(frozen=True)
class OracleResult:
    allocation: np.ndarray  # (V, 3) indices; unassociated EDs left at 0
    ee: float
    evaluations: int


def search_space_size(snapshot: WorldSnapshot, radio: RadioSets) -> int:
    n_served = sum(1 for u in snapshot.assignment if u >= 0)
    return math.prod(radio.sizes) ** n_served


def exhaustive_oracle(snapshot: WorldSnapshot, radio: RadioSets, limit: int = MAX_ORACLE_SPACE) -> OracleResult:
    """Best single-step allocation over served EDs; first in lexicographic order wins ties."""
    size = search_space_size(snapshot, radio)
    if size > limit:
        raise SearchSpaceTooLarge(size, limit)
    served = [v for v, u in enumerate(snapshot.assignment) if u >= 0]
    combos = list(itertools.product(*(range(n) for n in radio.sizes)))
    allocation = np.zeros((len(snapshot.assignment), 3), dtype=np.int64)
    best_ee, best_alloc, count = -math.inf, allocation.copy(), 0
    for choice in itertools.product(combos, repeat=len(served)):
        for v, c in zip(served, choice):
            allocation[v] = c
        ee = allocation_ee(snapshot, radio, allocation)
        count += 1
        if ee > best_ee:
            best_ee, best_alloc = ee, allocation.copy()
    return OracleResult(allocation=best_alloc, ee=float(best_ee), evaluations=count)


def allocation_to_actions(env: LoRaUavEnv, allocation: np.ndarray) -> list[np.ndarray]:
    """Per-agent slot actions that reproduce a per-ED allocation in ``env``."""
    actions = []
    for u in range(env.num_uavs):
        act = np.zeros((env.num_slots, 3), dtype=np.int64)
        eds = env.state.association.served_by(u)
        act[: len(eds)] = allocation[eds]
        actions.append(act)
    return actions
