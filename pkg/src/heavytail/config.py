"""Flat ``key = value`` config files with one section per module.

Example::

    [data]
    num_classes = 20
    imbalance_factor = 50

    [train]
    epochs = 100
    method = ours

Overrides use ``section.key=value`` and win over file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

from .sampler import AugmentConfig
from .trainer import ConfigError, TrainConfig


@dataclass(frozen=True)
class DataConfig:
    train: str | None = None
    test: str | None = None
    num_classes: int = 20
    n_max: int = 100
    imbalance_factor: float = 50.0
    feature_dim: int = 16
    separation: float = 3.0
    test_per_class: int = 50
    seed: int = 0


@dataclass(frozen=True)
class Settings:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = (0,)
    jobs: int = 1


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(p) for p in v.replace(",", " ").split())


def _optional_float(v: str) -> float | None:
    return None if v.strip().lower() in ("", "none") else float(v)


def _optional_str(v: str) -> str | None:
    return None if v.strip().lower() in ("", "none") else v.strip()


# (section, key) -> (target, attribute, parser)
_KEYS = {
    ("data", "train"): ("data", "train", _optional_str),
    ("data", "test"): ("data", "test", _optional_str),
    ("data", "num_classes"): ("data", "num_classes", int),
    ("data", "n_max"): ("data", "n_max", int),
    ("data", "imbalance_factor"): ("data", "imbalance_factor", float),
    ("data", "feature_dim"): ("data", "feature_dim", int),
    ("data", "separation"): ("data", "separation", float),
    ("data", "test_per_class"): ("data", "test_per_class", int),
    ("data", "seed"): ("data", "seed", int),
    ("train", "epochs"): ("train", "epochs", int),
    ("train", "batch_size"): ("train", "batch_size", int),
    ("train", "lr"): ("train", "lr", float),
    ("train", "momentum"): ("train", "momentum", float),
    ("train", "weight_decay"): ("train", "weight_decay", float),
    ("train", "method"): ("train", "method", str),
    ("train", "eis"): ("train", "eis", _bool),
    ("train", "cn"): ("train", "cn", _bool),
    ("train", "iloss"): ("train", "iloss", _bool),
    ("train", "tau_min"): ("train", "tau_min", _optional_float),
    ("model", "widths"): ("train", "widths", _ints),
    ("partition", "rule"): ("train", "rule", str),
    ("partition", "k"): ("train", "head_k", int),
    ("augment", "alpha"): ("augment", "alpha", float),
    ("augment", "sigma"): ("augment", "sigma", float),
    ("augment", "lam_min"): ("augment", "lam_min", float),
    ("run", "seeds"): ("run", "seeds", _ints),
    ("run", "jobs"): ("run", "jobs", int),
}


def parse_override(text: str) -> tuple[str, str, str]:
    key, sep, value = text.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    return section.strip(), name.strip(), value.strip()


def load_settings(path: str | Path | None = None, overrides: Sequence[str] = ()) -> Settings:
    """Read ``path`` (optional), apply overrides, validate everything up front."""
    items: list[tuple[str, str, str]] = []
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}".splitlines()[0]) from None
        for section in cp.sections():
            for name, value in cp.items(section):
                items.append((section, name, value))
    items.extend(parse_override(o) for o in overrides)

    buckets: dict[str, dict] = {"data": {}, "train": {}, "augment": {}, "run": {}}
    for section, name, value in items:
        entry = _KEYS.get((section, name))
        if entry is None:
            raise ConfigError(f"unknown config key {section}.{name}")
        target, attr, parse = entry
        try:
            buckets[target][attr] = parse(value)
        except ValueError as e:
            raise ConfigError(f"{section}.{name}: {e}") from None

    try:
        data = DataConfig(**buckets["data"])
        aug = AugmentConfig(**buckets["augment"])
        train = TrainConfig(**buckets["train"], augment=aug)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    run = buckets["run"]
    return Settings(data, train, tuple(run.get("seeds", (0,))), int(run.get("jobs", 1)))


def dump_settings(s: Settings) -> str:
    """Render settings back into the file format (round-trips through ``load_settings``)."""
    t = s.train
    none = lambda v: "none" if v is None else v  # noqa: E731
    out = {
        "data": {f.name: none(getattr(s.data, f.name)) for f in fields(s.data)},
        "train": {
            "epochs": t.epochs, "batch_size": t.batch_size, "lr": t.lr, "momentum": t.momentum,
            "weight_decay": t.weight_decay, "method": t.method, "eis": t.eis, "cn": t.cn,
            "iloss": t.iloss, "tau_min": none(t.tau_min),
        },
        "model": {"widths": ",".join(str(w) for w in t.widths)},
        "partition": {"rule": t.rule, "k": t.head_k},
        "augment": {"alpha": t.augment.alpha, "sigma": t.augment.sigma, "lam_min": t.augment.lam_min},
        "run": {"seeds": ",".join(str(x) for x in s.seeds), "jobs": s.jobs},
    }
    lines = []
    for section, kv in out.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in kv.items()]
        lines.append("")
    return "\n".join(lines)


def with_seed(s: Settings, seed: int) -> TrainConfig:
    return replace(s.train, seed=seed)
