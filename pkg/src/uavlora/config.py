"""Scenario configuration: nested dataclasses, JSON round-trip, dotted overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelParams
from .environment import RadioSets, RewardWeights, WorldConfig
from .mappo import TrainConfig
from .mobility import MobilityParams
from .power import HoverParams

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    mobility: MobilityParams = field(default_factory=MobilityParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    radio: RadioSets = field(default_factory=RadioSets)
    hover: HoverParams = field(default_factory=HoverParams)
    reward: RewardWeights = field(default_factory=RewardWeights)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> list[str]:
        """Every problem found, as readable messages; empty when valid."""
        problems = []
        for name in ("world", "mobility", "channel", "radio", "hover", "train"):
            try:
                getattr(self, name).validate()
            except ValueError as exc:
                problems.append(f"{name}: {exc}")
        if len(set(self.radio.sf_set)) != len(self.radio.sf_set):
            problems.append("radio: duplicate SF values")
        unknown_sf = set(self.radio.sf_set) - {7, 8, 9, 10, 11, 12}
        unknown_bw = set(self.radio.bw_set_khz) - {125, 250, 500}
        if unknown_sf or unknown_bw:
            problems.append(f"radio: no SNR threshold for SF {sorted(unknown_sf)} / BW {sorted(unknown_bw)}")
        return problems

    def to_dict(self) -> dict:
        return {"version": CONFIG_VERSION, **dataclasses.asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:8]

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        version = data.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"config version {version} is not supported (expected {CONFIG_VERSION})")
        return _build(cls, data, "")

    def replace(self, **sections) -> "ScenarioConfig":
        """``cfg.replace(world={"num_eds": 20})`` style section updates."""
        updates = {name: dataclasses.replace(getattr(self, name), **vals) for name, vals in sections.items()}
        return dataclasses.replace(self, **updates)

    def with_overrides(self, overrides: list[str]) -> "ScenarioConfig":
        data = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            path = key.strip().split(".")
            node = data
            for part in path[:-1]:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"unknown config key {key!r}")
                node = node[part]
            if path[-1] not in node:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                node[path[-1]] = json.loads(raw)
            except json.JSONDecodeError:
                node[path[-1]] = raw
        return ScenarioConfig.from_dict(data)


def _build(tp, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    hints = typing.get_type_hints(tp)
    names = {f.name for f in dataclasses.fields(tp)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name in names & set(data):
        kwargs[name] = _coerce(hints[name], data[name], f"{where}.{name}" if where else name)
    return tp(**kwargs)


def _coerce(tp, value, where: str):
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(_coerce(args[0], v, where) for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> ScenarioConfig:
    cfg = ScenarioConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        cfg = ScenarioConfig.from_dict(data)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.to_json() + "\n")
