"""Air-to-ground LoRa link model: LoS probability, path loss, SNR/SINR, rate.

Power arithmetic is linear (milliwatts) internally; dB/dBm appear only at the
function boundaries. Every function broadcasts over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

SF_VALUES = (7, 8, 9, 10, 11, 12)
BW_VALUES_KHZ = (125, 250, 500)

# rows: SF 7..12, columns: BW 125/250/500 kHz
LORA_SNR_THRESHOLDS_DB = np.array(
    [
        [-7.5, -9.0, -11.0],
        [-10.0, -12.0, -13.8],
        [-12.5, -14.5, -16.5],
        [-15.0, -17.0, -19.0],
        [-18.0, -20.0, -21.8],
        [-21.0, -23.0, -25.0],
    ]
)


@dataclass(frozen=True)
class ChannelParams:
    carrier_hz: float = 868e6
    light_speed: float = 3e8
    env_a: float = 4.88
    env_b: float = 0.43
    excess_los_db: float = 0.1
    excess_nlos_db: float = 21.0
    noise_dbm: float = -120.0
    uav_altitude_m: float = 90.0
    # use the horizontal distance (clamped at 1 m) in the free-space term instead of the slant range
    paper_literal_fspl: bool = False
    # restrict interference to transmitters sharing both SF and bandwidth
    same_bw_interference: bool = False

    def validate(self) -> None:
        for name in ("carrier_hz", "light_speed", "env_a", "env_b", "uav_altitude_m"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")


class SnrThresholdTable:
    """Minimum demodulation SNR (dB) per (SF, bandwidth)."""

    def __init__(self, thresholds=LORA_SNR_THRESHOLDS_DB, sf_values=SF_VALUES, bw_values_khz=BW_VALUES_KHZ):
        table = np.array(thresholds, dtype=float)
        if table.shape != (len(sf_values), len(bw_values_khz)):
            raise ValueError(
                f"threshold table must be {len(sf_values)}x{len(bw_values_khz)}, got {table.shape}"
            )
        self.thresholds = table
        self.sf_values = tuple(int(s) for s in sf_values)
        self.bw_values_khz = tuple(int(b) for b in bw_values_khz)
        self._sf_row = {sf: i for i, sf in enumerate(self.sf_values)}
        self._bw_col = {bw: j for j, bw in enumerate(self.bw_values_khz)}

    @classmethod
    def from_file(cls, path: str | Path) -> "SnrThresholdTable":
        """Load a whitespace/comma separated 6x3 table (rows SF7..SF12, columns 125/250/500 kHz)."""
        text = Path(path).read_text().replace(",", " ")
        rows = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
        return cls(np.array(rows, dtype=float))

    def lookup(self, sf, bw_khz) -> float:
        try:
            return float(self.thresholds[self._sf_row[int(sf)], self._bw_col[int(bw_khz)]])
        except KeyError:
            raise KeyError(f"no SNR threshold for SF{sf} at {bw_khz} kHz") from None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SnrThresholdTable)
            and self.sf_values == other.sf_values
            and self.bw_values_khz == other.bw_values_khz
            and np.array_equal(self.thresholds, other.thresholds)
        )


DEFAULT_THRESHOLDS = SnrThresholdTable()


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(np.asarray(mw, dtype=float))


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


def elevation_angle(horizontal_dist_m, altitude_m):
    d = np.maximum(np.asarray(horizontal_dist_m, dtype=float), 1.0)
    return np.degrees(np.arctan(altitude_m / d))


def p_los(theta_deg, params: ChannelParams):
    a, b = params.env_a, params.env_b
    return 1.0 / (1.0 + a * np.exp(-b * (np.asarray(theta_deg, dtype=float) - a)))


def fspl_db(distance_m, carrier_hz: float, light_speed: float = 3e8):
    return 20.0 * np.log10(4.0 * np.pi * carrier_hz * np.asarray(distance_m, dtype=float) / light_speed)


def path_loss_db(horizontal_dist_m, params: ChannelParams):
    d = np.asarray(horizontal_dist_m, dtype=float)
    h = params.uav_altitude_m
    if params.paper_literal_fspl:
        d_eff = np.maximum(d, 1.0)
    else:
        d_eff = np.sqrt(d * d + h * h)
    plos = p_los(elevation_angle(d, h), params)
    return (
        fspl_db(d_eff, params.carrier_hz, params.light_speed)
        + params.excess_los_db * plos
        + params.excess_nlos_db * (1.0 - plos)
    )


def gain_linear(path_loss_db_value):
    return 10.0 ** (-np.asarray(path_loss_db_value, dtype=float) / 10.0)


def channel_gain(horizontal_dist_m, params: ChannelParams):
    return gain_linear(path_loss_db(horizontal_dist_m, params))


def reference_gain(params: ChannelParams) -> float:
    """Gain at 1 m horizontal distance; used to normalise gain features."""
    return float(channel_gain(1.0, params))


def snr_linear(tp_dbm, gain, noise_dbm):
    return dbm_to_mw(tp_dbm) * np.asarray(gain, dtype=float) / dbm_to_mw(noise_dbm)


def sinr_linear(target_snr, interferer_snrs):
    return target_snr / (float(np.sum(interferer_snrs)) + 1.0)


def rate_bps(bw_hz, sinr):
    return np.asarray(bw_hz, dtype=float) * np.log2(1.0 + np.asarray(sinr, dtype=float))


def snr_threshold_db(sf, bw_khz, table: SnrThresholdTable = DEFAULT_THRESHOLDS) -> float:
    return table.lookup(sf, bw_khz)


def horizontal_distances(ed_positions, uav_positions) -> np.ndarray:
    """(V, U) matrix of ground-plane distances."""
    ed = np.asarray(ed_positions, dtype=float).reshape(-1, 2)
    uav = np.asarray(uav_positions, dtype=float).reshape(-1, 2)
    diff = ed[:, None, :] - uav[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))
