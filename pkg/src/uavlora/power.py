"""Multi-rotor hover power and system energy efficiency."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


@dataclass(frozen=True)
class HoverParams:
    """Hover model constants.

    The defaults are documented stand-ins for a small quad-rotor; downstream
    code treats the resulting hover power as an opaque positive constant.
    """

    rotor_count: int = 4
    rotor_weight_n: float = 20.0
    air_density: float = 1.225
    solidity: float = 0.05
    disc_area_m2: float = 0.503
    thrust_coeff: float = 0.008
    blade_drag_coeff: float = 0.012
    induced_power_factor: float = 0.1

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"hover parameter {f.name} must be > 0, got {getattr(self, f.name)}")


def hover_power_w(params: HoverParams, validate: bool = True) -> float:
    if validate:
        params.validate()
    rho, area = params.air_density, params.disc_area_m2
    profile = rho**-0.5 * params.solidity * area**-0.5 * params.thrust_coeff**-1.5 * params.blade_drag_coeff / 8.0
    induced = (1.0 + params.induced_power_factor) / np.sqrt(2.0 * rho * area)
    return float(params.rotor_count * params.rotor_weight_n**1.5 * (profile + induced))


def dbm_to_w(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def system_ee(per_uav_rates, per_uav_uplink_w, hover_w: float) -> float:
    """Bits per Joule summed over UAVs for one timestep."""
    rates = np.asarray(per_uav_rates, dtype=float)
    uplink = np.asarray(per_uav_uplink_w, dtype=float)
    if rates.shape != uplink.shape:
        raise ValueError(f"rates {rates.shape} and uplink powers {uplink.shape} are not aligned")
    return float(np.sum(rates / (uplink + hover_w)))
