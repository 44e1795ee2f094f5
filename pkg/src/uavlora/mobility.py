"""Gauss-Markov mobility for ground end devices.

All functions are pure: randomness (Gaussian noise, resampling draws) is
passed in by the caller so trajectories can be replayed exactly. Arrays may
hold a single device (shape ``(2,)``) or a population (shape ``(V, 2)``).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class MobilityParams:
    memory: float = 0.85
    randomness: float = 0.5
    dt: float = 0.5
    v_max: float = 1.0
    resample_prob: float = 0.01
    area_side: float = 1000.0
    # magnitude of the asymptotic mean velocity; direction drawn at random
    mean_speed: float = 0.005

    def validate(self) -> None:
        if not 0.0 <= self.memory <= 1.0:
            raise ValueError(f"memory must lie in [0, 1], got {self.memory}")
        if self.randomness < 0.0:
            raise ValueError(f"randomness must be >= 0, got {self.randomness}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.v_max <= 0.0:
            raise ValueError(f"v_max must be > 0, got {self.v_max}")
        if not 0.0 <= self.resample_prob <= 1.0:
            raise ValueError(f"resample_prob must lie in [0, 1], got {self.resample_prob}")
        if self.area_side <= 0.0:
            raise ValueError(f"area_side must be > 0, got {self.area_side}")
        if self.mean_speed < 0.0:
            raise ValueError(f"mean_speed must be >= 0, got {self.mean_speed}")


@dataclass(frozen=True)
class EdKinematics:
    position: np.ndarray
    velocity: np.ndarray
    mean_velocity: np.ndarray


def clamp_speed(velocity: np.ndarray, v_max: float) -> np.ndarray:
    """Rescale vectors longer than ``v_max`` to length ``v_max``, keeping direction."""
    velocity = np.asarray(velocity, dtype=float)
    speed = np.linalg.norm(velocity, axis=-1, keepdims=True)
    scale = np.where(speed > v_max, v_max / np.where(speed > 0.0, speed, 1.0), 1.0)
    return velocity * scale


def step_velocity(kin: EdKinematics, params: MobilityParams, noise: np.ndarray) -> np.ndarray:
    m = params.memory
    v = (
        m * kin.velocity
        + (1.0 - m) * kin.mean_velocity
        + params.randomness * np.sqrt(1.0 - m * m) * np.asarray(noise, dtype=float)
    )
    return clamp_speed(v, params.v_max)


def reflect(position: np.ndarray, velocity: np.ndarray, side: float) -> tuple[np.ndarray, np.ndarray]:
    """Fold positions back into ``[0, side]`` and flip the normal velocity component.

    Overshoot is mirrored about the crossed wall. A component that crossed an
    odd number of walls has its velocity negated.
    """
    pos = np.array(position, dtype=float)
    vel = np.array(velocity, dtype=float)
    while True:
        low = pos < 0.0
        high = pos > side
        if not (low.any() or high.any()):
            return pos, vel
        pos = np.where(low, -pos, pos)
        pos = np.where(high, 2.0 * side - pos, pos)
        vel = np.where(low | high, -vel, vel)


def step_position(kin: EdKinematics, params: MobilityParams) -> EdKinematics:
    pos = kin.position + kin.velocity * params.dt
    pos, vel = reflect(pos, kin.velocity, params.area_side)
    return replace(kin, position=pos, velocity=vel)


def maybe_resample_mean(
    kin: EdKinematics, params: MobilityParams, u: np.ndarray | float, fresh_mean: np.ndarray
) -> EdKinematics:
    hit = np.asarray(u) < params.resample_prob
    mean = np.where(np.expand_dims(hit, -1), fresh_mean, kin.mean_velocity)
    return replace(kin, mean_velocity=np.asarray(mean, dtype=float))


def initial_kinematics(num_eds: int, params: MobilityParams, rng: np.random.Generator) -> EdKinematics:
    """Uniform placement, uniform initial velocity in the speed box, random-direction mean velocity."""
    side = params.area_side
    position = rng.uniform(0.0, side, size=(num_eds, 2))
    velocity = clamp_speed(rng.uniform(-params.v_max, params.v_max, size=(num_eds, 2)), params.v_max)
    heading = rng.uniform(0.0, 2.0 * np.pi, size=num_eds)
    mean_velocity = params.mean_speed * np.stack([np.cos(heading), np.sin(heading)], axis=-1)
    return EdKinematics(position=position, velocity=velocity, mean_velocity=mean_velocity)


def advance(kin: EdKinematics, params: MobilityParams, rng: np.random.Generator) -> EdKinematics:
    """One full mobility step for every device.

    Draw order is fixed (resample uniforms, fresh means, Gaussian noise) so the
    stream consumption does not depend on the outcome of any draw.
    """
    n = kin.position.shape[0]
    u = rng.random(n)
    fresh = rng.uniform(-params.v_max, params.v_max, size=(n, 2))
    noise = rng.standard_normal((n, 2))
    kin = maybe_resample_mean(kin, params, u, fresh)
    kin = replace(kin, velocity=step_velocity(kin, params, noise))
    return step_position(kin, params)
