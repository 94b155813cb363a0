"""JSON configuration for model parameters.

Keys (all optional, defaults shown by ``ModelConfig().to_dict()``)::

    {
      "lambda_v": "1/6", "lambda_d": "1/20", "mu_v": "1/60", "mu_d": "1/10",
      "C": 10,
      "W_mode": "auto",            # "auto": largest k meeting the minimum; "fixed": use "W"
      "W": null,
      "min_wifi_throughput_mbps": 3.5,
      "R_LV_mbps": 0.02, "R_LD_mbps": 5.0,
      "wifi": {"model": "bianchi", "k_max": 30, "params": {...WifiParams fields...}}
               or {"model": "table", "table": [[1, 30.0], [2, 16.0], ...]}
    }

Rates may be given as numbers or as fraction strings such as ``"1/60"``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from .model import ModelParams, ValidationError
from .wifi import ThroughputCurve, WifiParams, bianchi_curve, compute_W, table_curve

__all__ = ["ConfigError", "WifiConfig", "ModelConfig", "load_config", "parse_number"]


class ConfigError(ValidationError):
    pass


def parse_number(value, name: str = "value") -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{name} must be a number or a fraction string, got {value!r}")


@dataclass(frozen=True)
class WifiConfig:
    model: str = "bianchi"
    params: WifiParams = field(default_factory=WifiParams)
    k_max: int = 30
    table: tuple | None = None

    def __post_init__(self):
        if self.model not in ("bianchi", "table"):
            raise ConfigError(f"wifi.model must be 'bianchi' or 'table', got {self.model!r}")
        if self.model == "table" and not self.table:
            raise ConfigError("wifi.model 'table' needs a non-empty wifi.table")
        if self.k_max < 1:
            raise ConfigError("wifi.k_max must be at least 1")

    def curve(self, k_max: int | None = None) -> ThroughputCurve:
        if self.model == "table":
            return table_curve(self.table)
        return bianchi_curve(self.params, max(self.k_max, k_max or 0))

    def to_dict(self) -> dict:
        d = {"model": self.model}
        if self.model == "table":
            d["table"] = [list(row) for row in self.table]
        else:
            d["k_max"] = self.k_max
            d["params"] = self.params.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WifiConfig":
        d = dict(d)
        unknown = set(d) - {"model", "params", "k_max", "table"}
        if unknown:
            raise ConfigError(f"unknown wifi keys: {sorted(unknown)}")
        try:
            wp = WifiParams(**d.get("params", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"wifi.params: {exc}") from None
        table = d.get("table")
        if table is not None:
            table = tuple((int(k), parse_number(v, f"wifi.table[{k}]")) for k, v in table)
        return cls(model=d.get("model", "bianchi" if table is None else "table"), params=wp,
                   k_max=int(d.get("k_max", 30)), table=table)


@dataclass(frozen=True)
class ModelConfig:
    lambda_v: float = 1 / 6
    lambda_d: float = 1 / 20
    mu_v: float = 1 / 60
    mu_d: float = 1 / 10
    C: int = 10
    W_mode: str = "auto"
    W: int | None = None
    min_wifi_throughput_mbps: float = 3.5
    R_LV_mbps: float = 0.02
    R_LD_mbps: float = 5.0
    wifi: WifiConfig = field(default_factory=WifiConfig)

    def __post_init__(self):
        if self.W_mode not in ("auto", "fixed"):
            raise ConfigError(f"W_mode must be 'auto' or 'fixed', got {self.W_mode!r}")
        if self.W_mode == "fixed" and self.W is None:
            raise ConfigError("W_mode 'fixed' needs W")

    def curve(self) -> ThroughputCurve:
        need = (self.W + 1) if self.W_mode == "fixed" and self.W else None
        return self.wifi.curve(need)

    def build(self) -> ModelParams:
        curve = self.curve()
        W = compute_W(curve, self.min_wifi_throughput_mbps) if self.W_mode == "auto" else int(self.W)
        return ModelParams(self.lambda_v, self.lambda_d, self.mu_v, self.mu_d, int(self.C), W,
                           self.R_LV_mbps, self.R_LD_mbps, curve)

    def replace(self, **changes) -> "ModelConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "wifi"}
        d["wifi"] = self.wifi.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        if not isinstance(d, dict):
            raise ConfigError("model configuration must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kw = {}
        for key in ("lambda_v", "lambda_d", "mu_v", "mu_d", "min_wifi_throughput_mbps", "R_LV_mbps", "R_LD_mbps"):
            if key in d:
                kw[key] = parse_number(d[key], key)
        for key in ("C", "W"):
            if d.get(key) is not None:
                val = d[key]
                if isinstance(val, bool) or not isinstance(val, int):
                    raise ConfigError(f"{key} must be an integer, got {val!r}")
                kw[key] = val
        if "W_mode" in d:
            kw["W_mode"] = d["W_mode"]
        elif "W" in kw:
            kw["W_mode"] = "fixed"
        if "wifi" in d:
            kw["wifi"] = WifiConfig.from_dict(d["wifi"])
        return cls(**kw)


def load_config(path) -> ModelConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ModelConfig.from_dict(data)
