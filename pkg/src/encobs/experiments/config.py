"""Experiment configuration: a YAML key/value tree loaded into a dataclass."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from ..quantizer import GainSchedule
from .plants import UnknownPlant, resolve_plant

__all__ = ["ConfigError", "ExperimentConfig", "CryptoConfig", "load_config", "preset_names",
           "KINDS"]

KINDS = ("feasibility", "lambda_min", "trajectories")


class ConfigError(ValueError):
    pass


@dataclass
class CryptoConfig:
    bits: int = 128
    n_key: int = 4
    omega: int = 2
    e_max: int = 1


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    plant: object = "dc_motor"
    h: list = field(default_factory=list)
    lam: object = None                 # list of gains, "from-certificate", or None (ideal)
    schedules: list = field(default_factory=lambda: ["k^2"])
    pairing: str = "product"           # or "zip" (length-1 lists broadcast)
    mode: str = "encrypted"
    horizon: float = 10.0
    x0: list | None = None
    chi0: list | None = None
    substeps: int = 50
    mrms_window: float | None = None
    mrms_at: float | None = None
    crypto: CryptoConfig = field(default_factory=CryptoConfig)
    seed: int = 0
    plots: bool = True
    transcripts: bool = False
    solver_tol: float = 1e-7
    gamma_ratio: float = 1.25

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.h:
            raise ConfigError("the h grid is empty")
        if any(not (isinstance(v, (int, float)) and v > 0) for v in self.h):
            raise ConfigError("every h must be a positive number")
        try:
            resolve_plant(self.plant)
        except UnknownPlant as exc:
            raise ConfigError(str(exc)) from None
        if self.kind != "trajectories":
            return self
        if self.mode not in ("encrypted", "quantized", "ideal"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.schedules:
            raise ConfigError("the schedule list is empty")
        for s in self.schedules:
            try:
                GainSchedule.from_dict(s)
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"bad schedule {s!r}: {exc}") from None
        if self.mode != "ideal":
            if self.lam is None:
                raise ConfigError("quantized and encrypted runs need lam")
            if self.lam != "from-certificate":
                if not isinstance(self.lam, list) or not self.lam:
                    raise ConfigError("lam must be a non-empty list or 'from-certificate'")
                if any(not (isinstance(v, (int, float)) and v > 0) for v in self.lam):
                    raise ConfigError("every lam must be a positive number")
        if self.pairing not in ("product", "zip"):
            raise ConfigError("pairing must be 'product' or 'zip'")
        if not self.horizon > 0 or self.substeps < 1:
            raise ConfigError("horizon and substeps must be positive")
        for h in self.h:
            steps = round(self.horizon / h)
            if abs(steps * h - self.horizon) > 1e-9 * self.horizon:
                raise ConfigError(f"horizon {self.horizon} is not a multiple of h={h}")
        if (self.mrms_window is None) != (self.mrms_at is None):
            raise ConfigError("mrms_window and mrms_at go together")
        if self.mrms_window is not None:
            if not 0 < self.mrms_window < self.mrms_at <= self.horizon + 1e-12:
                raise ConfigError("need 0 < mrms_window < mrms_at <= horizon")
        if self.crypto.bits < 8 or self.crypto.n_key < 1 or self.crypto.omega < 2:
            raise ConfigError("invalid crypto parameters")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _from_tree(tree: dict) -> ExperimentConfig:
    if not isinstance(tree, dict):
        raise ConfigError("config must be a mapping")
    tree = dict(tree)
    crypto = tree.pop("crypto", {}) or {}
    mrms = tree.pop("mrms", None)
    if mrms is not None:
        tree["mrms_window"] = mrms.get("window")
        tree["mrms_at"] = mrms.get("at")
    for key in ("h", "lam", "schedules"):
        if key in tree and isinstance(tree[key], (int, float, str)) and tree[key] != "from-certificate":
            tree[key] = [tree[key]]
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(tree) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "name" not in tree or "kind" not in tree:
        raise ConfigError("config needs 'name' and 'kind'")
    try:
        cfg = ExperimentConfig(**tree, crypto=CryptoConfig(**crypto))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    for key in ("horizon", "mrms_window", "mrms_at", "solver_tol", "gamma_ratio"):
        val = getattr(cfg, key)
        if val is not None and not (isinstance(val, (int, float)) and math.isfinite(val)):
            raise ConfigError(f"{key} must be a number")
    return cfg


def preset_names() -> list[str]:
    root = resources.files(__package__) / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _preset_text(name: str) -> str:
    path = resources.files(__package__) / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return path.read_text()


def load_config(path=None, preset: str | None = None, overrides: dict | None = None
                ) -> ExperimentConfig:
    """Load a YAML config file, a named preset, or a file layered over a preset."""
    tree: dict = {}
    try:
        if preset is not None:
            tree.update(yaml.safe_load(_preset_text(preset)) or {})
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file {p} does not exist")
            tree.update(yaml.safe_load(p.read_text()) or {})
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not tree:
        raise ConfigError("no configuration given")
    tree.update(overrides or {})
    return _from_tree(tree).validate()
