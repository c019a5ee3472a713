"""Single TOML configuration with one section per module."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from .array import PRESETS, ArrayConfig, CellPreset
from .device import TransistorModel
from .variation import SIGMA_R, SIGMA_VT
from .write import MagnetParams, PulseSchedule, WriteElectrical


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VariationConfig:
    sigma_r: float = SIGMA_R
    sigma_vt: float = SIGMA_VT
    n_mc: int = 1000
    workers: int = 1


@dataclass(frozen=True)
class SimConfig:
    magnet: MagnetParams = field(default_factory=MagnetParams)
    pulse: PulseSchedule = field(default_factory=PulseSchedule)
    write_electrical: WriteElectrical = field(default_factory=WriteElectrical)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    variation: VariationConfig = field(default_factory=VariationConfig)

    def to_dict(self) -> Dict[str, Any]:
        out = {}
        for f in fields(self):
            obj = getattr(self, f.name)
            if f.name == "array":
                d = {k.name: getattr(obj, k.name) for k in fields(obj)
                     if k.name not in ("transistor", "presets")}
                out["array"] = d
                out["transistor"] = dataclasses.asdict(obj.transistor)
                out["presets"] = {n: _preset_dict(p) for n, p in obj.presets.items()}
            else:
                out[f.name] = dataclasses.asdict(obj)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _preset_dict(p: CellPreset) -> Dict[str, Any]:
    d = dataclasses.asdict(p)
    d["fit"] = list(p.fit)
    if d["v_gate"] is None:
        d.pop("v_gate")
    d.pop("name")
    return d


def _build(cls, data: Dict[str, Any], where: str, base=None):
    names = {f.name for f in fields(cls)}
    bad = set(data) - names
    if bad:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(bad))}")
    try:
        return replace(base, **data) if base is not None else cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{where}]: {e}") from e


_SECTIONS = {"magnet": MagnetParams, "pulse": PulseSchedule,
             "write_electrical": WriteElectrical,
             "variation": VariationConfig}


def from_dict(data: Dict[str, Any]) -> SimConfig:
    known = set(_SECTIONS) | {"array", "transistor", "presets"}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(bad))}")
    kw = {}
    for name, cls in _SECTIONS.items():
        kw[name] = _build(cls, dict(data.get(name, {})), name, cls())
    tr = _build(TransistorModel, dict(data.get("transistor", {})), "transistor",
                TransistorModel())
    presets = dict(PRESETS)
    for pname, pd in data.get("presets", {}).items():
        pd = dict(pd)
        if "fit" in pd:
            pd["fit"] = tuple(pd["fit"])
        base = presets.get(pname, CellPreset(pname))
        presets[pname] = _build(CellPreset, pd, f"presets.{pname}", base)
    arr = dict(data.get("array", {}))
    for k in ("transistor", "presets"):
        if k in arr:
            raise ConfigError(f"[array] may not set {k}; use its own section")
    try:
        kw["array"] = _build(ArrayConfig, {**arr, "transistor": tr, "presets": presets},
                             "array")
    except KeyError as e:
        raise ConfigError(str(e)) from e
    return SimConfig(**kw)


def parse_value(text: str):
    """TOML scalar/array if it parses, else a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """``section.key=value`` (``presets.NAME.key=value``) on a raw config dict."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"override {key!r} needs a section prefix")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} walks into a value")
        node[parts[-1]] = parse_value(val.strip())
    return data


def read_toml(path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from e


def load_config(path=None, overrides: Iterable[str] = ()) -> SimConfig:
    data = read_toml(path) if path else {}
    return from_dict(apply_overrides(data, overrides))


def dumps(cfg: SimConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def save_config(cfg: SimConfig, path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default_config.toml"
