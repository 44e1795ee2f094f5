"""Multi-UAV LoRa uplink environment.

Each UAV gateway is an agent. Per step it observes the EDs it currently
serves and picks a (SF, TP, BW) triple per observation slot. All agents get
the same scalar reward. ED motion and re-association do not depend on the
actions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import association as assoc
from . import channel as ch
from . import mobility as mob
from .power import HoverParams, dbm_to_w, hover_power_w
from .rng import stream

GAIN_FEATURE_SCALE_DB = 100.0


@dataclass(frozen=True)
class WorldConfig:
    num_eds: int = 10
    num_uavs: int = 2
    horizon: int = 150
    quota: int | None = None  # None -> ceil(V / U)
    comm_range_m: float = 800.0
    # False: one triple per agent applied to every ED it serves
    per_ed_actions: bool = True

    def validate(self) -> None:
        if self.num_eds < 0:
            raise ValueError(f"num_eds must be >= 0, got {self.num_eds}")
        if self.num_uavs <= 0:
            raise ValueError(f"num_uavs must be > 0, got {self.num_uavs}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.quota is not None and self.quota < 1:
            raise ValueError(f"quota must be >= 1, got {self.quota}")
        if self.comm_range_m <= 0:
            raise ValueError(f"comm_range_m must be > 0, got {self.comm_range_m}")

    @property
    def effective_quota(self) -> int:
        if self.quota is not None:
            return self.quota
        return max(1, math.ceil(self.num_eds / self.num_uavs))

    @property
    def action_slots(self) -> int:
        return self.effective_quota if self.per_ed_actions else 1


@dataclass(frozen=True)
class RadioSets:
    sf_set: tuple[int, ...] = (7, 8, 9, 10, 11, 12)
    tp_set_dbm: tuple[float, ...] = (2.0, 5.0, 8.0, 11.0, 14.0)
    bw_set_khz: tuple[int, ...] = (125, 250, 500)

    def validate(self) -> None:
        for name in ("sf_set", "tp_set_dbm", "bw_set_khz"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.sf_set), len(self.tp_set_dbm), len(self.bw_set_khz)

    def values(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map an (..., 3) index array to (SF, TP dBm, BW kHz) value arrays."""
        idx = np.asarray(idx)
        return (
            np.asarray(self.sf_set)[idx[..., 0]],
            np.asarray(self.tp_set_dbm, dtype=float)[idx[..., 1]],
            np.asarray(self.bw_set_khz)[idx[..., 2]],
        )


@dataclass(frozen=True)
class RewardWeights:
    w_ee: float = 4e-4
    w_success: float = 5.0
    w_margin: float = 1.0
    # listed as negative; the magnitude is always subtracted as a penalty
    w_power: float = -1e-2
    margin_cap_db: float = 10.0
    margin_penalty: float = 10.0
    include_hover_in_power: bool = False


@dataclass
class WorldState:
    kinematics: mob.EdKinematics
    uav_positions: np.ndarray  # (U, 2)
    association: assoc.AssociationState
    radio: np.ndarray  # (V, 3) indices into RadioSets
    distances: np.ndarray  # (V, U)
    gains: np.ndarray  # (V, U)
    t: int = 0


@dataclass(frozen=True)
class Observation:
    matrix: np.ndarray  # (quota, 4) raw (x, y, d, G); zero rows are padding
    normalized: np.ndarray
    ed_ids: np.ndarray  # served EDs, in slot order

    @property
    def num_valid(self) -> int:
        return len(self.ed_ids)


@dataclass(frozen=True)
class LinkMetrics:
    """Per-ED link quantities; entries of unassociated EDs are zero."""

    associated: np.ndarray
    sf: np.ndarray
    tp_dbm: np.ndarray
    bw_khz: np.ndarray
    gain: np.ndarray
    snr: np.ndarray
    sinr: np.ndarray
    rate_bps: np.ndarray
    snr_db: np.ndarray
    threshold_db: np.ndarray
    margin_db: np.ndarray


@dataclass
class StepInfo:
    t: int
    step_ee: float
    episode_ee: float
    success_rate: float
    margin_term: float
    mean_margin_db: float
    p_total_w: float
    reward_terms: dict
    links: LinkMetrics
    per_uav_rate_bps: np.ndarray
    per_uav_uplink_w: np.ndarray
    assignment: np.ndarray
    radio: np.ndarray = field(repr=False)


def uav_layout(num_uavs: int, area_side: float) -> np.ndarray:
    """Evenly spaced along the horizontal mid-line: x_u = area * (u + 1) / (U + 1)."""
    x = area_side * np.arange(1, num_uavs + 1) / (num_uavs + 1)
    return np.stack([x, np.full(num_uavs, area_side / 2.0)], axis=-1)


def evaluate_links(
    assignment: np.ndarray,
    gains: np.ndarray,
    radio_idx: np.ndarray,
    radio: RadioSets,
    channel: ch.ChannelParams,
    table: ch.SnrThresholdTable = ch.DEFAULT_THRESHOLDS,
) -> LinkMetrics:
    num_eds = len(assignment)
    served = assignment >= 0
    sf, tp, bw = radio.values(radio_idx.reshape(num_eds, 3))
    g = np.zeros(num_eds)
    g[served] = gains[np.flatnonzero(served), assignment[served]]
    snr = np.where(served, ch.snr_linear(tp, g, channel.noise_dbm), 0.0)

    # interferers: other transmitting EDs on the same SF, counted at their own serving UAV
    same = (sf[:, None] == sf[None, :]) & served[None, :]
    if channel.same_bw_interference:
        same &= bw[:, None] == bw[None, :]
    np.fill_diagonal(same, False)
    interference = same.astype(float) @ snr
    sinr = np.where(served, snr / (interference + 1.0), 0.0)
    rate = np.where(served, ch.rate_bps(bw * 1e3, sinr), 0.0)

    thr = np.array([table.lookup(s, b) for s, b in zip(sf, bw)]) if num_eds else np.zeros(0)
    snr_db = np.where(served, ch.linear_to_db(np.where(served, snr, 1.0)), 0.0)
    margin = np.where(served, snr_db - thr, 0.0)
    return LinkMetrics(
        associated=served,
        sf=sf,
        tp_dbm=tp,
        bw_khz=bw,
        gain=g,
        snr=snr,
        sinr=sinr,
        rate_bps=rate,
        snr_db=snr_db,
        threshold_db=np.where(served, thr, 0.0),
        margin_db=margin,
    )


def uav_energy_terms(links: LinkMetrics, assignment: np.ndarray, num_uavs: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-UAV sum rate (bps) and uplink transmit power (W) of served EDs."""
    served = assignment >= 0
    rates = np.bincount(assignment[served], weights=links.rate_bps[served], minlength=num_uavs)
    uplink = np.bincount(assignment[served], weights=dbm_to_w(links.tp_dbm[served]), minlength=num_uavs)
    return rates.astype(float), uplink.astype(float)


def success_rate(margins_db) -> float:
    margins = np.asarray(margins_db, dtype=float)
    if margins.size == 0:
        return 0.0
    return float(np.mean(margins >= 0.0))


def margin_shaping(margins_db, cap_db: float = 10.0, penalty: float = 10.0) -> float:
    margins = np.asarray(margins_db, dtype=float)
    if margins.size == 0:
        return 0.0
    m = float(np.mean(margins))
    if m >= 0.0:
        return min(m, cap_db)
    return penalty * m


class LoRaUavEnv:
    """Single-instance environment. Not thread-safe; use one instance per worker."""

    def __init__(self, cfg, thresholds: ch.SnrThresholdTable | None = None, instance: int = 0):
        cfg.world.validate()
        cfg.mobility.validate()
        cfg.channel.validate()
        cfg.radio.validate()
        self.cfg = cfg
        self.world = cfg.world
        self.mobility = cfg.mobility
        self.channel = cfg.channel
        self.radio_sets = cfg.radio
        self.weights = cfg.reward
        self.thresholds = thresholds or ch.DEFAULT_THRESHOLDS
        self.instance = instance
        self.hover_w = hover_power_w(cfg.hover)
        self.quota = self.world.effective_quota
        self.num_slots = self.world.action_slots
        self.num_uavs = self.world.num_uavs
        self.num_eds = self.world.num_eds
        self.area = self.mobility.area_side
        self.gain_ref_db = float(ch.linear_to_db(ch.reference_gain(self.channel)))
        self.state: WorldState | None = None
        self.episode_ee = 0.0
        self._placement_rng = None
        self._mobility_rng = None

    # -- sizes used by learners
    @property
    def obs_dim(self) -> int:
        return self.quota * 4

    @property
    def state_dim(self) -> int:
        return self.num_eds * (4 + self.num_uavs + 3)

    def _links_geometry(self, positions: np.ndarray, uavs: np.ndarray):
        d = ch.horizontal_distances(positions, uavs)
        return d, ch.channel_gain(d, self.channel)

    def reset(self, seed: int | None = None) -> tuple[WorldState, list[Observation]]:
        if seed is not None:
            self._placement_rng = stream(seed, "placement", self.instance)
            self._mobility_rng = stream(seed, "mobility", self.instance)
        elif self._placement_rng is None:
            raise RuntimeError("first reset() needs a seed")
        kin = mob.initial_kinematics(self.num_eds, self.mobility, self._placement_rng)
        uavs = uav_layout(self.num_uavs, self.area)
        d, g = self._links_geometry(kin.position, uavs)
        association = assoc.match(d, g, self.quota, self.world.comm_range_m)
        self.state = WorldState(
            kinematics=kin,
            uav_positions=uavs,
            association=association,
            radio=np.zeros((self.num_eds, 3), dtype=np.int64),
            distances=d,
            gains=g,
            t=0,
        )
        self.episode_ee = 0.0
        return self.state, self.observations()

    def observe(self, uav: int, state: WorldState | None = None) -> Observation:
        s = state or self.state
        eds = s.association.served_by(uav)
        raw = np.zeros((self.quota, 4))
        norm = np.zeros((self.quota, 4))
        if len(eds):
            pos = s.kinematics.position[eds]
            d = s.distances[eds, uav]
            g = s.gains[eds, uav]
            n = len(eds)
            raw[:n] = np.column_stack([pos, d, g])
            g_feat = (ch.linear_to_db(g) - self.gain_ref_db) / GAIN_FEATURE_SCALE_DB
            norm[:n] = np.column_stack([pos / self.area, d / self.world.comm_range_m, g_feat])
        return Observation(matrix=raw, normalized=norm, ed_ids=eds)

    def observations(self, state: WorldState | None = None) -> list[Observation]:
        return [self.observe(u, state) for u in range(self.num_uavs)]

    def global_state_vector(self, state: WorldState | None = None) -> np.ndarray:
        """Centralised critic input; per ED (index order): x, y, d, gain, UAV one-hot, radio indices."""
        s = state or self.state
        V, U = self.num_eds, self.num_uavs
        a = s.association.assignment
        served = a >= 0
        d = np.zeros(V)
        g_feat = np.zeros(V)
        rows = np.flatnonzero(served)
        d[rows] = s.distances[rows, a[rows]] / self.world.comm_range_m
        g_feat[rows] = (ch.linear_to_db(s.gains[rows, a[rows]]) - self.gain_ref_db) / GAIN_FEATURE_SCALE_DB
        onehot = np.zeros((V, U))
        onehot[rows, a[rows]] = 1.0
        denom = np.maximum(np.array(self.radio_sets.sizes) - 1, 1)
        radio = s.radio / denom
        per_ed = np.column_stack([s.kinematics.position / self.area, d, g_feat, onehot, radio])
        return per_ed.reshape(-1)

    def decode_actions(self, joint_action: Sequence, state: WorldState | None = None) -> np.ndarray:
        """Apply per-slot triples to the served EDs; returns the new (V, 3) radio index array."""
        s = state or self.state
        if len(joint_action) != self.num_uavs:
            raise ValueError(f"expected {self.num_uavs} agent actions, got {len(joint_action)}")
        sizes = np.array(self.radio_sets.sizes)
        radio = s.radio.copy()
        for u, act in enumerate(joint_action):
            act = np.asarray(act, dtype=np.int64).reshape(-1, 3)
            if act.shape[0] != self.num_slots:
                raise ValueError(f"agent {u}: expected {self.num_slots} slots, got {act.shape[0]}")
            if (act < 0).any() or (act >= sizes).any():
                raise ValueError(f"agent {u}: action index out of range {act.tolist()}")
            eds = s.association.served_by(u)
            if self.world.per_ed_actions:
                radio[eds] = act[: len(eds)]
            else:
                radio[eds] = act[0]
        return radio

    def evaluate(self, radio: np.ndarray, state: WorldState | None = None):
        """Links, per-UAV energy terms and reward components for a radio assignment."""
        s = state or self.state
        a = s.association.assignment
        links = evaluate_links(a, s.gains, radio, self.radio_sets, self.channel, self.thresholds)
        rates, uplink = uav_energy_terms(links, a, self.num_uavs)
        ee = float(np.sum(rates / (uplink + self.hover_w)))
        margins = links.margin_db[links.associated]
        xi = success_rate(margins)
        beta = margin_shaping(margins, self.weights.margin_cap_db, self.weights.margin_penalty)
        p_total = float(np.sum(uplink))
        if self.weights.include_hover_in_power:
            p_total += self.hover_w * self.num_uavs
        w = self.weights
        terms = {
            "ee": w.w_ee * ee,
            "success": w.w_success * xi,
            "margin": w.w_margin * beta,
            "power": -abs(w.w_power) * p_total,
        }
        return links, rates, uplink, ee, xi, beta, p_total, terms

    def step(self, joint_action: Sequence) -> tuple[WorldState, list[Observation], float, bool, StepInfo]:
        s = self.state
        if s is None:
            raise RuntimeError("step() before reset()")
        if s.t >= self.world.horizon:
            raise RuntimeError("episode is over; call reset()")
        radio = self.decode_actions(joint_action, s)
        links, rates, uplink, ee, xi, beta, p_total, terms = self.evaluate(radio, s)
        reward = terms["ee"] + terms["success"] + terms["margin"] + terms["power"]
        self.episode_ee += ee
        margins = links.margin_db[links.associated]
        info = StepInfo(
            t=s.t,
            step_ee=ee,
            episode_ee=self.episode_ee,
            success_rate=xi,
            margin_term=beta,
            mean_margin_db=float(np.mean(margins)) if margins.size else 0.0,
            p_total_w=p_total,
            reward_terms=terms,
            links=links,
            per_uav_rate_bps=rates,
            per_uav_uplink_w=uplink,
            assignment=s.association.assignment.copy(),
            radio=radio,
        )

        kin = mob.advance(s.kinematics, self.mobility, self._mobility_rng)
        d, g = self._links_geometry(kin.position, s.uav_positions)
        association = assoc.match(d, g, self.quota, self.world.comm_range_m)
        self.state = WorldState(
            kinematics=kin,
            uav_positions=s.uav_positions,
            association=association,
            radio=radio,
            distances=d,
            gains=g,
            t=s.t + 1,
        )
        done = self.state.t == self.world.horizon
        return self.state, self.observations(), float(reward), done, info

    def rewards_for_agents(self, reward: float) -> list[float]:
        return [reward] * self.num_uavs
