"""Run configuration: YAML file + command-line overrides, fully resolved.

Every omitted field is filled from the defaults below and the resolved
mapping is what gets echoed into outputs. Relative dataset and table paths
are taken relative to the config file; ``bundled:<name>`` refers to data
shipped with the package.
"""

from __future__ import annotations

import copy
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import yaml

from . import __version__
from .classifiers import DEFAULT_HYPER, KINDS, STACK_MODES, ClassifierSpec
from .encoding import (ENCODER_ORDER, EncoderConfigs, FourierConfig, PseAacConfig, SparseConfig,
                       bundled_table, default_table_sets, load_property_table)
from .evaluation import BALANCE_MODES, ExperimentConfig
from .gan import PUBLISHED_LEARNING_RATE, GanConfig


class ConfigError(ValueError):
    pass


def _defaults() -> dict:
    sets = default_table_sets()
    return {
        "datasets": [],
        "encoders": {
            "enabled": list(ENCODER_ORDER),
            "sparse": {"max_len": 100},
            "pseaac": {"lambda": 5, "weight": 0.05, "properties": list(sets["pseaac"])},
            "physchem": {"tables": list(sets["physchem"])},
            "fourier": {"table": sets["fourier"], "n_fft": 128, "normalize_by_length": True},
        },
        "balance": "per_fold",
        "classifiers": {"kinds": list(KINDS), "ensemble": True, "stacking_mode": "paper", "hyper": {}},
        "gan": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(GanConfig()).items()
                if k != "seed"},
        "cv": {"n_folds": 5, "test_fraction": 0.2},
        "seed": 0,
        "out": "results",
        "paper_faithful": False,
    }


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict) and key != "hyper":
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a mapping")
            out[key] = _merge(base[key], value, path + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def default_config_path() -> Path:
    return Path(str(resources.files("ampgan.data").joinpath("toy.yaml")))


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Read, merge with defaults, apply overrides, validate. Returns a plain dict."""
    path = Path(path) if path else default_config_path()
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = _merge(_defaults(), raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    if cfg["paper_faithful"]:
        cfg["balance"] = "paper_faithful"
        cfg["gan"]["learning_rate"] = PUBLISHED_LEARNING_RATE
    cfg["config_dir"] = str(path.parent.resolve())
    validate(cfg)
    # absolute paths keep the echoed config re-runnable from anywhere
    for entry in cfg["datasets"]:
        if not entry["path"].startswith("bundled:"):
            entry["path"] = str(resolve_path(cfg, entry["path"]).resolve())
    e = cfg["encoders"]
    e["pseaac"]["properties"] = [_absolute_table(cfg, t) for t in e["pseaac"]["properties"]]
    e["physchem"]["tables"] = [_absolute_table(cfg, t) for t in e["physchem"]["tables"]]
    e["fourier"]["table"] = _absolute_table(cfg, e["fourier"]["table"])
    return cfg


def _is_table_file(ref: str) -> bool:
    return ref.endswith(".tsv") or "/" in ref


def _absolute_table(cfg, ref):
    return str(resolve_path(cfg, ref).resolve()) if _is_table_file(ref) else ref


def validate(cfg: dict) -> None:
    if not cfg["datasets"]:
        raise ConfigError("no datasets configured")
    names = set()
    for entry in cfg["datasets"]:
        if not isinstance(entry, dict) or set(entry) != {"name", "path"}:
            raise ConfigError(f"dataset entries need exactly 'name' and 'path': {entry!r}")
        if entry["name"] in names:
            raise ConfigError(f"duplicate dataset name {entry['name']!r}")
        names.add(entry["name"])
    enabled = cfg["encoders"]["enabled"]
    if not enabled or set(enabled) - set(ENCODER_ORDER):
        raise ConfigError(f"encoders.enabled must be a non-empty subset of {list(ENCODER_ORDER)}")
    if cfg["balance"] not in BALANCE_MODES:
        raise ConfigError(f"balance must be one of {BALANCE_MODES}")
    c = cfg["classifiers"]
    if not c["kinds"] or set(c["kinds"]) - set(KINDS) or len(set(c["kinds"])) != len(c["kinds"]):
        raise ConfigError(f"classifiers.kinds must be distinct members of {list(KINDS)}")
    if c["stacking_mode"] not in STACK_MODES:
        raise ConfigError(f"classifiers.stacking_mode must be one of {STACK_MODES}")
    if c["ensemble"] and len(c["kinds"]) < 2:
        raise ConfigError("the ensemble needs at least 2 base classifiers")
    for kind, hyper in c["hyper"].items():
        if kind == "meta":
            kind = "logistic"
        if kind not in DEFAULT_HYPER:
            raise ConfigError(f"classifiers.hyper: unknown classifier {kind!r}")
        ClassifierSpec(kind, dict(hyper))
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    # building the typed objects runs their own range checks
    encoder_configs(cfg)
    gan_config(cfg)
    experiment_config(cfg)


def resolve_path(cfg: dict, ref: str) -> Path:
    if ref.startswith("bundled:"):
        return Path(str(resources.files("ampgan.data.toy").joinpath(ref[len("bundled:"):])))
    p = Path(ref)
    return p if p.is_absolute() else Path(cfg["config_dir"]) / p


def _table(cfg, ref):
    if _is_table_file(ref):
        return load_property_table(resolve_path(cfg, ref).read_text(encoding="utf-8"))
    return bundled_table(ref)


def encoder_configs(cfg: dict) -> EncoderConfigs:
    e = cfg["encoders"]
    return EncoderConfigs(
        sparse=SparseConfig(int(e["sparse"]["max_len"])),
        pseaac=PseAacConfig(int(e["pseaac"]["lambda"]), float(e["pseaac"]["weight"]),
                            tuple(_table(cfg, t) for t in e["pseaac"]["properties"])),
        physchem=tuple(_table(cfg, t) for t in e["physchem"]["tables"]),
        fourier=FourierConfig(_table(cfg, e["fourier"]["table"]), int(e["fourier"]["n_fft"]),
                              bool(e["fourier"]["normalize_by_length"])),
    )


def gan_config(cfg: dict, seed: int | None = None) -> GanConfig:
    return GanConfig(**cfg["gan"], seed=cfg["seed"] if seed is None else seed)


def experiment_config(cfg: dict) -> ExperimentConfig:
    c = cfg["classifiers"]
    return ExperimentConfig(list(c["kinds"]), bool(c["ensemble"]), c["stacking_mode"],
                            {k: dict(v) for k, v in c["hyper"].items()}, gan_config(cfg),
                            int(cfg["cv"]["n_folds"]), float(cfg["cv"]["test_fraction"]))


def echo(cfg: dict) -> dict:
    """The resolved config as embedded in outputs, with the toolkit version."""
    out = {k: v for k, v in cfg.items() if k != "config_dir"}
    return {"toolkit_version": __version__, "config": out}


def dump(cfg: dict) -> str:
    """YAML that :func:`load_config` accepts as-is."""
    body = yaml.safe_dump(echo(cfg)["config"], sort_keys=False)
    return f"# resolved by ampgan {__version__}\n" + body
