"""Channel-aware ED-to-UAV matching under range and quota limits."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

UNASSIGNED = -1


@dataclass(frozen=True)
class AssociationState:
    assignment: np.ndarray  # per ED: serving UAV index or UNASSIGNED
    num_uavs: int
    quota: int
    comm_range_m: float

    @property
    def matrix(self) -> np.ndarray:
        """Binary (U, V) view a[u, v]."""
        a = np.zeros((self.num_uavs, len(self.assignment)), dtype=np.int8)
        served = self.assignment >= 0
        a[self.assignment[served], np.flatnonzero(served)] = 1
        return a

    def served_by(self, uav: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == uav)

    def loads(self) -> np.ndarray:
        served = self.assignment[self.assignment >= 0]
        return np.bincount(served, minlength=self.num_uavs)


def match(distances, gains, quota: int, comm_range_m: float) -> AssociationState:
    """Greedy sequential matching in ascending ED order.

    Each ED takes the highest-gain UAV that is within range and still below
    quota; ties go to the lowest UAV index. ``distances`` and ``gains`` are
    (V, U) matrices.
    """
    if quota < 1:
        raise ValueError(f"quota must be >= 1, got {quota}")
    distances = np.asarray(distances, dtype=float)
    gains = np.asarray(gains, dtype=float)
    num_eds, num_uavs = gains.shape
    in_range = distances <= comm_range_m
    load = np.zeros(num_uavs, dtype=np.int64)
    assignment = np.full(num_eds, UNASSIGNED, dtype=np.int64)
    for v in range(num_eds):
        feasible = in_range[v] & (load < quota)
        if not feasible.any():
            continue
        u = int(np.argmax(np.where(feasible, gains[v], -np.inf)))
        assignment[v] = u
        load[u] += 1
    return AssociationState(assignment=assignment, num_uavs=num_uavs, quota=quota, comm_range_m=comm_range_m)


def write_snapshot(path: str | Path, state: AssociationState, distances, gains) -> None:
    """CSV snapshot: ed, uav (blank if unassigned), distance_m, gain."""
    distances = np.asarray(distances, dtype=float)
    gains = np.asarray(gains, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ed", "uav", "distance_m", "gain"])
        for v, u in enumerate(state.assignment):
            if u == UNASSIGNED:
                w.writerow([v, "", "", ""])
            else:
                w.writerow([v, int(u), repr(float(distances[v, u])), repr(float(gains[v, u]))])
