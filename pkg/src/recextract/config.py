"""Experiment configuration: YAML files, dotted overrides, validation and hashing.

A config is a nested mapping with the sections below. Every key has a
default, so a preset only lists what differs. Unknown keys are errors.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import yaml

from .models import ARCHITECTURES

DATA_ROOT_ENV = "RECEXTRACT_DATA_ROOT"
PRESET_DIR = Path(__file__).parent / "presets"

DEFAULTS = {
    "name": "run",
    "seed": 0,
    "dataset": {
        "source": "toy",          # toy | csv
        "path": None,             # csv file, relative paths resolve against $RECEXTRACT_DATA_ROOT
        "delimiter": ",",
        "names": None,            # column names for headerless files
        "user_col": "user_id",
        "item_col": "item_id",
        "time_col": "timestamp",
        "kcore": None,
        "min_len": 3,
        "max_len": 50,
        "toy": {"n_users": 200, "n_items": 50, "seed": 0},
    },
    "victim": {
        "arch": "narm",
        "hidden": 64,
        "n_layers": 2,
        "n_heads": 2,
        "dropout": 0.1,
        "mask_prob": 0.2,
        "epochs": 50,
        "batch_size": 128,
        "lr": 1e-3,
        "weight_decay": 0.01,
        "warmup_steps": 100,
        "patience": 10,
    },
    "oracle": {"topk": 100, "budget": None, "accounting": "sequence"},
    "generate": {
        "method": "autoregressive",
        "budget": 5000,
        "length": None,           # None: dataset max_len
        "sampler": "uniform",
        "length_policy": "fixed",
    },
    "extract": {
        "arch": None,             # None: same architecture as the victim
        "hidden": None,
        "n_layers": None,
        "n_heads": None,
        "dropout": None,
        "epochs": 100,
        "batch_size": 128,
        "lr": 1e-3,
        "weight_decay": 0.01,
        "warmup_steps": 100,
        "margin_rank": 0.5,
        "margin_neg": 1.0,
        "patience": 10,
        "val_fraction": 0.1,
        "resample_negatives": True,
    },
    "attack": {
        "n_targets": 25,
        "n_append": 2,
        "eps": 1.0,
        "n_candidates": 10,
        "poison_fraction": 0.01,
        "profile_length": None,   # None: dataset max_len
    },
    "eval": {"n_negatives": 100},
}

CHOICES = {
    "dataset.source": ("toy", "csv"),
    "victim.arch": tuple(ARCHITECTURES),
    "extract.arch": (None,) + tuple(ARCHITECTURES),
    "oracle.accounting": ("sequence", "query"),
    "generate.method": ("random", "autoregressive"),
    "generate.sampler": ("uniform", "geometric"),
    "generate.length_policy": ("fixed", "uniform"),
}
POSITIVE = ["dataset.max_len", "dataset.min_len", "victim.hidden", "victim.n_layers", "victim.n_heads",
            "victim.epochs", "victim.batch_size", "oracle.topk", "extract.epochs", "extract.batch_size",
            "attack.n_targets", "attack.n_candidates", "eval.n_negatives", "generate.budget"]
NON_NEGATIVE = ["victim.lr", "victim.weight_decay", "victim.warmup_steps", "victim.patience",
                "extract.lr", "extract.weight_decay", "extract.warmup_steps", "extract.margin_rank",
                "extract.margin_neg", "extract.patience", "attack.n_append"]
FRACTIONS = ["victim.dropout", "victim.mask_prob", "extract.val_fraction", "attack.poison_fraction"]


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _merge(base, extra, path, problems):
    for key, value in extra.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            problems.append(f"{where}: unknown key")
        elif isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, where, problems)
        elif isinstance(base[key], dict):
            problems.append(f"{where}: expected a mapping")
        else:
            base[key] = value


def get(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    return node


def parse_override(text):
    """``a.b=value`` with a YAML-parsed value -> nested dict."""
    if "=" not in text:
        raise ConfigError([f"override {text!r} is not of the form key.path=value"])
    key, raw = text.split("=", 1)
    out = node = {}
    parts = key.strip().split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = yaml.safe_load(raw)
    return out


def preset_path(name):
    return PRESET_DIR / f"{name}.yaml"


def list_presets():
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def load_config(path=None, preset=None, overrides=()):
    """Defaults <- preset <- file <- overrides, then validate. Raises ConfigError listing every problem."""
    cfg = copy.deepcopy(DEFAULTS)
    problems = []
    layers = []
    if preset is not None:
        p = preset_path(preset)
        if not p.exists():
            raise ConfigError([f"unknown preset {preset!r}; available: {', '.join(list_presets())}"])
        layers.append(yaml.safe_load(p.read_text()) or {})
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError([f"config file {p} does not exist"])
        try:
            layers.append(yaml.safe_load(p.read_text()) or {})
        except yaml.YAMLError as err:
            raise ConfigError([f"{p}: not valid YAML ({err})"]) from None
    layers += [parse_override(o) for o in overrides]
    for layer in layers:
        if not isinstance(layer, dict):
            problems.append("top level must be a mapping")
            continue
        _merge(cfg, layer, "", problems)
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg):
    problems = []
    for key, allowed in CHOICES.items():
        if get(cfg, key) not in allowed:
            problems.append(f"{key}: {get(cfg, key)!r} not in {[a for a in allowed if a is not None]}")

    def number(key):
        v = get(cfg, key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            problems.append(f"{key}: expected a number, got {v!r}")
            return None
        return v

    for key in POSITIVE:
        v = number(key)
        if v is not None and v <= 0:
            problems.append(f"{key}: must be > 0, got {v}")
    for key in NON_NEGATIVE:
        v = number(key)
        if v is not None and v < 0:
            problems.append(f"{key}: must be >= 0, got {v}")
    for key in FRACTIONS:
        v = number(key)
        if v is not None and not 0 <= v < 1:
            problems.append(f"{key}: must lie in [0, 1), got {v}")
    v = number("attack.eps")
    if v is not None and v <= 0:
        problems.append(f"attack.eps: must be > 0, got {v}")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        problems.append(f"seed: expected a non-negative integer, got {cfg['seed']!r}")
    ds = cfg["dataset"]
    if ds["source"] == "csv" and not ds["path"]:
        problems.append("dataset.path: required when dataset.source is csv")
    if ds["kcore"] is not None and (not isinstance(ds["kcore"], int) or ds["kcore"] < 1):
        problems.append(f"dataset.kcore: must be a positive integer or null, got {ds['kcore']!r}")
    if cfg["oracle"]["budget"] is not None and (not isinstance(cfg["oracle"]["budget"], int)
                                                or cfg["oracle"]["budget"] < 0):
        problems.append(f"oracle.budget: must be a non-negative integer or null, got {cfg['oracle']['budget']!r}")
    for key in ("generate.length", "attack.profile_length"):
        v = get(cfg, key)
        if v is not None and (not isinstance(v, int) or v < 1):
            problems.append(f"{key}: must be a positive integer or null, got {v!r}")
    for key in ("hidden", "n_layers", "n_heads"):
        v = cfg["extract"][key]
        if v is not None and (not isinstance(v, int) or v < 1):
            problems.append(f"extract.{key}: must be a positive integer or null, got {v!r}")
    for sec in ("victim", "extract"):
        hid, heads = cfg[sec]["hidden"] or cfg["victim"]["hidden"], cfg[sec]["n_heads"] or cfg["victim"]["n_heads"]
        if isinstance(hid, int) and isinstance(heads, int) and heads > 0 and hid % heads:
            problems.append(f"{sec}: hidden {hid} is not divisible by n_heads {heads}")
    return problems


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True)


def resolve_data_path(path):
    p = Path(path).expanduser()
    if p.is_absolute():
        return p
    root = os.environ.get(DATA_ROOT_ENV)
    return Path(root) / p if root else p


# ----------------------------------------------------------------- derived objects


def victim_hparams(cfg, n_items, max_len):
    v = cfg["victim"]
    return dict(n_items=n_items, hidden=v["hidden"], n_layers=v["n_layers"], n_heads=v["n_heads"],
                dropout=v["dropout"], mask_prob=v["mask_prob"], max_len=max_len, seed=cfg["seed"])


def whitebox_arch(cfg):
    return cfg["extract"]["arch"] or cfg["victim"]["arch"]


def whitebox_hparams(cfg, max_len):
    v, e = cfg["victim"], cfg["extract"]
    pick = lambda k: v[k] if e[k] is None else e[k]  # noqa: E731
    return dict(hidden=pick("hidden"), n_layers=pick("n_layers"), n_heads=pick("n_heads"),
                dropout=pick("dropout"), mask_prob=v["mask_prob"], max_len=max_len)


def train_config(cfg):
    from .models.train import TrainConfig

    v = cfg["victim"]
    return TrainConfig(epochs=v["epochs"], batch_size=v["batch_size"], lr=v["lr"], weight_decay=v["weight_decay"],
                       warmup_steps=v["warmup_steps"], patience=v["patience"],
                       eval_negatives=cfg["eval"]["n_negatives"], seed=cfg["seed"])


def distill_config(cfg):
    from .distill import DistillConfig

    e = cfg["extract"]
    return DistillConfig(epochs=e["epochs"], batch_size=e["batch_size"], lr=e["lr"], weight_decay=e["weight_decay"],
                         warmup_steps=e["warmup_steps"], margin_rank=e["margin_rank"], margin_neg=e["margin_neg"],
                         patience=e["patience"], val_fraction=e["val_fraction"],
                         resample_negatives=e["resample_negatives"], seed=cfg["seed"])
