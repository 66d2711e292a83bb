"""Flat, typed run configuration.

A config file is a TOML (or JSON) table of the keys in ``DEFAULTS``. Values
are resolved in this order, later winning: defaults, file, ``EXPOSIM_<KEY>``
environment variables, ``--set key=value`` overrides.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .mf import MfHyperparams
from .rerank import RerankConfig
from .sim import SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "EXPOSIM_"

DEFAULTS = {
    "dataset": "data/ml-100k/ratings.dat",
    "dataset_format": "movielens-delimited",
    "separator": "::",
    "T": 600,
    "K": 10,
    "L": 40,
    "alpha": -0.5,
    "split_ratio": 0.8,
    "seed": 0,
    "pipeline": "mf",
    "d": 32,
    "learning_rate": 0.05,
    "regularization": 0.01,
    "epochs": 20,
    "negatives_per_positive": 4,
    "target_mode": "dynamic-normalized",
    "epsilon_exposure": 0.0,  # 0 means 1 / log2(1 + K)
    "discrepancy_weight": 0,  # 0 means n*K*L + 1
    "cap_to_degree": True,  # bound dynamic targets by long-list in-degree
    "freeze_test": False,
    "warm_start": False,
    "gini_population": "catalog",
    "dump_lists": True,
    "backend": "auto",
    "output_dir": "runs/{pipeline}",
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


def coerce(key: str, value):
    if key not in DEFAULTS:
        raise ConfigError(key, "unknown key")
    kind = type(DEFAULTS[key])
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(str(value).strip()) if isinstance(value, str) else int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        return str(value)
    except ValueError:
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}") from None


def preset_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("exposim").joinpath("presets").iterdir()
                  if p.name.endswith(".toml"))


def read_file(path) -> dict:
    """Read a config file; a bare preset name (``desk``, ``long``) selects a bundled one."""
    path = Path(path)
    if not path.exists() and str(path) in preset_names():
        path = Path(str(resources.files("exposim").joinpath("presets", f"{path}.toml")))
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
        else:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("config", f"file {path} not found") from None
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise ConfigError("config", "the config must be a flat key-value table")
    return data


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "override must look like key=value")
        out[key.strip()] = value
    return out


def resolve(file_values=None, overrides=None, environ=None) -> dict:
    cfg = dict(DEFAULTS)
    for key, value in (file_values or {}).items():
        cfg[key] = coerce(key, value)
    environ = os.environ if environ is None else environ
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX) and name[len(ENV_PREFIX):] in DEFAULTS:
            key = name[len(ENV_PREFIX):]
            cfg[key] = coerce(key, value)
    for key, value in (overrides or {}).items():
        cfg[key] = coerce(key, value)
    cfg["output_dir"] = cfg["output_dir"].format(pipeline=cfg["pipeline"].replace("+", "_"))
    to_sim_config(cfg)  # validates value ranges
    return cfg


def to_sim_config(cfg: dict) -> SimConfig:
    def build(key, factory, **kwargs):
        try:
            return factory(**kwargs)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None

    mf_hp = build("d", MfHyperparams, d=cfg["d"], learning_rate=cfg["learning_rate"],
                  regularization=cfg["regularization"], epochs=cfg["epochs"],
                  negatives_per_positive=cfg["negatives_per_positive"])
    rerank_cfg = build("target_mode", RerankConfig, K=cfg["K"], L=cfg["L"],
                       discrepancy_weight=cfg["discrepancy_weight"], target_mode=cfg["target_mode"],
                       epsilon_exposure=cfg["epsilon_exposure"] or None,
                       cap_to_degree=cfg["cap_to_degree"])
    if cfg["gini_population"] not in ("catalog", "recommended"):
        raise ConfigError("gini_population", "expected 'catalog' or 'recommended'")
    if cfg["backend"] not in ("auto", "compiled", "python"):
        raise ConfigError("backend", "expected 'auto', 'compiled' or 'python'")
    if not 0.0 < cfg["split_ratio"] < 1.0:
        raise ConfigError("split_ratio", "must lie in (0, 1)")
    return build("pipeline", SimConfig, T=cfg["T"], K=cfg["K"], L=cfg["L"], alpha=cfg["alpha"],
                 split_ratio=cfg["split_ratio"], seed=cfg["seed"], pipeline=cfg["pipeline"],
                 mf_hp=mf_hp, rerank_cfg=rerank_cfg, output_dir=cfg["output_dir"],
                 freeze_test=cfg["freeze_test"], warm_start=cfg["warm_start"],
                 gini_population=cfg["gini_population"], dump_lists=cfg["dump_lists"],
                 backend=None if cfg["backend"] == "auto" else cfg["backend"])


def config_hash(cfg: dict) -> str:
    """Hash of the resolved values; independent of key order and formatting."""
    canonical = json.dumps({k: cfg[k] for k in sorted(cfg)}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def file_fingerprint(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
