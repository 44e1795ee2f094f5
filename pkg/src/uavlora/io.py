"""On-disk formats: metrics CSV, episode trace JSONL, plot-data CSVs, run directories.

Metrics files start with a comment line ``# uavlora-metrics v1`` followed by
the column header. Floats are written with ``repr`` so a read gives back the
exact values that were written.

Trace files are JSON Lines. The first record is a header
``{"format": "uavlora-trace", "version": 1, ...}``; every later record is a
single environment step (see ``step_record``).
"""
from __future__ import annotations

import csv
import json
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .environment import StepInfo
from .mappo import METRICS_FIELDS

METRICS_MAGIC = "# uavlora-metrics"
METRICS_VERSION = 1
TRACE_FORMAT = "uavlora-trace"
TRACE_VERSION = 1
_INT_FIELDS = {"update_index", "env_steps"}


class FormatError(ValueError):
    pass


# -- metrics -------------------------------------------------------------------

class MetricsWriter:
    """Append-only metrics CSV; the header is written when the file is new."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        if not fresh:
            read_metrics(self.path)  # refuse to append to a foreign file
        self._fh = self.path.open("a", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if fresh:
            self._fh.write(f"{METRICS_MAGIC} v{METRICS_VERSION}\n")
            self._writer.writerow(METRICS_FIELDS)
            self._fh.flush()

    def write(self, row: dict) -> None:
        missing = [f for f in METRICS_FIELDS if f not in row]
        if missing:
            raise KeyError(f"metrics row lacks {missing}")
        self._writer.writerow([_fmt(row[f]) for f in METRICS_FIELDS])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_metrics(path: str | Path, rows: Iterable[dict]) -> None:
    with MetricsWriter(path) as w:
        for row in rows:
            w.write(row)


def read_metrics(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(METRICS_MAGIC):
        raise FormatError(f"{path}: line 1: missing '{METRICS_MAGIC} v{METRICS_VERSION}' marker")
    version = lines[0][len(METRICS_MAGIC):].strip()
    if version != f"v{METRICS_VERSION}":
        raise FormatError(f"{path}: line 1: metrics version {version!r} is not supported (expected v{METRICS_VERSION})")
    if len(lines) < 2 or tuple(lines[1].split(",")) != METRICS_FIELDS:
        raise FormatError(f"{path}: line 2: header must be {','.join(METRICS_FIELDS)}")
    rows = []
    for lineno, cells in enumerate(csv.reader(lines[2:]), start=3):
        if len(cells) != len(METRICS_FIELDS):
            raise FormatError(f"{path}: line {lineno}: expected {len(METRICS_FIELDS)} fields, got {len(cells)}")
        row = {}
        for name, cell in zip(METRICS_FIELDS, cells):
            try:
                row[name] = int(cell) if name in _INT_FIELDS else float(cell)
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: bad value {cell!r} for {name}") from None
        rows.append(row)
    return rows


# -- episode traces ------------------------------------------------------------

def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def trace_header(config_digest: str, seed: int, policy: str, num_eds: int, num_uavs: int) -> dict:
    return {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "config_digest": config_digest,
        "seed": int(seed),
        "policy": policy,
        "num_eds": int(num_eds),
        "num_uavs": int(num_uavs),
        "fields": ["t", "assignment", "sf", "tp_dbm", "bw_khz", "snr_db", "sinr_db", "rate_bps",
                   "margin_db", "step_ee", "success_rate", "reward", "reward_terms"],
    }


def _finite(values) -> list:
    """JSON has no infinities; unassociated EDs carry null instead."""
    return [float(v) if np.isfinite(v) else None for v in np.asarray(values, dtype=float)]


def step_record(info: StepInfo, reward: float) -> dict:
    links = info.links
    sinr_db = np.full(links.sinr.shape, -np.inf)
    pos = links.sinr > 0
    sinr_db[pos] = 10.0 * np.log10(links.sinr[pos])
    mask = links.associated
    return {
        "t": int(info.t),
        "assignment": [int(a) for a in info.assignment],
        "sf": [int(x) for x in links.sf],
        "tp_dbm": _finite(links.tp_dbm),
        "bw_khz": [int(x) for x in links.bw_khz],
        "snr_db": _finite(np.where(mask, links.snr_db, np.nan)),
        "sinr_db": _finite(np.where(mask, sinr_db, np.nan)),
        "rate_bps": _finite(links.rate_bps),
        "margin_db": _finite(np.where(mask, links.margin_db, np.nan)),
        "step_ee": float(info.step_ee),
        "success_rate": float(info.success_rate),
        "reward": float(reward),
        "reward_terms": {k: float(v) for k, v in info.reward_terms.items()},
    }


class TraceWriter:
    def __init__(self, path: str | Path, header: dict):
        self._fh = Path(path).open("w")
        self._fh.write(_dump(header) + "\n")

    def write(self, info: StepInfo, reward: float) -> None:
        self._fh.write(_dump(step_record(info, reward)) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path: str | Path) -> tuple[dict, list[dict]]:
    with Path(path).open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty trace")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line 1: {exc}") from None
    if header.get("format") != TRACE_FORMAT or header.get("version") != TRACE_VERSION:
        raise FormatError(f"{path}: line 1: not a {TRACE_FORMAT} v{TRACE_VERSION} header")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from None
    return header, records


# -- plot data -----------------------------------------------------------------

def write_table(path: str | Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    """Plain CSV with a header row; missing values are left empty."""
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n", restval="")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})


def read_table(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def reward_curve_rows(runs: dict[int, list[dict]], window: int = 10) -> list[dict]:
    """One row per (seed, update) with the raw and moving-average mean reward."""
    out = []
    for seed, rows in sorted(runs.items()):
        rewards = np.array([r["mean_reward"] for r in rows], dtype=float)
        for i, r in enumerate(rows):
            lo = max(0, i - window + 1)
            out.append({
                "seed": seed,
                "update_index": r["update_index"],
                "env_steps": r["env_steps"],
                "mean_reward": float(rewards[i]),
                "smoothed_reward": float(rewards[lo : i + 1].mean()),
            })
    return out


REWARD_CURVE_FIELDS = ("seed", "update_index", "env_steps", "mean_reward", "smoothed_reward")


# -- run directories -----------------------------------------------------------

def run_dir(root: str | Path, seed: int, digest: str, when: float | None = None) -> Path:
    """``<root>/<YYYYmmdd-HHMMSS>-s<seed>-<digest>``, created if missing."""
    stamp = time.strftime("%Y%m%d-%H%M%S", time.localtime(when))
    path = Path(root) / f"{stamp}-s{seed}-{digest}"
    suffix = 1
    while path.exists():
        path = Path(root) / f"{stamp}-s{seed}-{digest}-{suffix}"
        suffix += 1
    path.mkdir(parents=True)
    return path
