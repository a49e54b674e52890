"""Nested JSON run configuration with dotted-path overrides."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .audio import MelConfig
from .encoder import EncoderConfig
from .patcher import PatchConfig
from .specmask import SpecMaskConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "frontend": {
        "sample_rate": 16000,
        "n_mels": 128,
        "frame_shift_ms": 10.0,
        "frame_length_ms": 25.0,
        "n_frames": 100,
    },
    "patch": {"patch_f": 128, "patch_t": 4, "stride_f": 128, "stride_t": 2, "mode": "fftp"},
    "mask": {
        "type": "none",
        "budget_area": 1024,
        "max_h": 128,
        "max_w": 16,
        "full_freq_prob": 0.7,
        "fill": "mean",
        "attempts": 100,
        "global_attempt_cap": 1000,
        "max_t": 15,
        "max_f": 5,
        "n_t": 2,
        "n_f": 2,
    },
    "model": {"depth": 4, "dim": 128, "heads": 4, "mlp_ratio": 4.0},
    "train": {
        "epochs": 10,
        "batch_size": 32,
        "peak_lr": 1e-3,
        "warmup_steps": None,
        "weight_decay": 0.01,
        "task": None,
        "mixup_lambda": 0.5,
        "mixup_prob": 1.0,
    },
    "paths": {"data": None, "out": "out", "val_fraction": 0.2},
}

# flat command-line spellings of common keys
ALIASES = {
    "lr": "train.peak_lr",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "budget": "mask.budget_area",
    "mask_type": "mask.type",
    "data": "paths.data",
}


def _merge(base: dict, update: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        key = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(key, "unknown key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(key, "expected an object")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def set_path(cfg: dict, dotted: str, value) -> None:
    node = cfg
    parts = dotted.split(".")
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            raise ConfigError(".".join(parts[: i + 1]), "unknown section")
        node = node[part]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(dotted, "unknown key")
    node[parts[-1]] = value


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"{path} does not exist") from None
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON: {e}") from None
        cfg = _merge(cfg, user)
    for key, value in overrides:
        set_path(cfg, ALIASES.get(key, key), value)
    return cfg


def _build(key: str, factory, **kw):
    try:
        return factory(**kw)
    except TypeError as e:
        raise ConfigError(key, str(e)) from None
    except ValueError as e:
        raise ConfigError(key, str(e)) from None


def _check_int(cfg: dict, key: str, minimum: int = 1) -> None:
    section, name = key.split(".")
    v = cfg[section][name]
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(key, f"must be an integer >= {minimum}, got {v!r}")


def mel_config(cfg: dict) -> MelConfig:
    fe = cfg["frontend"]
    return _build("frontend", MelConfig, sample_rate=fe["sample_rate"], n_mels=fe["n_mels"],
                  frame_shift_ms=fe["frame_shift_ms"], frame_length_ms=fe["frame_length_ms"])


def patch_config(cfg: dict) -> PatchConfig:
    return _build("patch", PatchConfig, **cfg["patch"])


def specmask_config(cfg: dict) -> SpecMaskConfig:
    m = cfg["mask"]
    return _build("mask", SpecMaskConfig, budget_area=m["budget_area"], max_h=m["max_h"], max_w=m["max_w"],
                  full_freq_prob=m["full_freq_prob"], fill=m["fill"], per_mask_attempts=m["attempts"],
                  global_attempt_cap=m["global_attempt_cap"])


def encoder_config(cfg: dict, n_classes: int = 1, max_tokens: int = 1024) -> EncoderConfig:
    return _build("model", EncoderConfig, **cfg["model"], n_classes=n_classes, max_tokens=max_tokens)


def train_config(cfg: dict, task: str) -> TrainConfig:
    t = dict(cfg["train"])
    t["task"] = t["task"] or task
    m = cfg["mask"]
    aug = m["type"]
    return _build("train", TrainConfig, **t, seed=cfg["seed"], augmentation=aug,
                  specmask=specmask_config(cfg) if aug == "specmask" else None,
                  specaug_max_t=m["max_t"], specaug_max_f=m["max_f"], specaug_n_t=m["n_t"], specaug_n_f=m["n_f"])


def validate(cfg: dict, need_data: bool = False) -> dict:
    """Cross-field checks; raises ConfigError naming the offending key path."""
    for key in ("frontend.n_mels", "frontend.n_frames", "patch.patch_f", "patch.patch_t",
                "patch.stride_f", "patch.stride_t", "model.depth", "model.dim", "model.heads",
                "train.epochs", "train.batch_size", "mask.max_h", "mask.max_w"):
        _check_int(cfg, key)
    _check_int(cfg, "mask.budget_area", 0)
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed", "must be an integer")
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        raise ConfigError("threads", "must be an integer >= 1")
    if cfg["mask"]["type"] not in ("none", "specmask", "specaugment"):
        raise ConfigError("mask.type", f"must be none, specmask or specaugment, got {cfg['mask']['type']!r}")
    lr = cfg["train"]["peak_lr"]
    if not isinstance(lr, (int, float)) or lr < 0:
        raise ConfigError("train.peak_lr", f"must be a non-negative number, got {lr!r}")
    mel_config(cfg)
    patch = patch_config(cfg)
    n_mels, n_frames = cfg["frontend"]["n_mels"], cfg["frontend"]["n_frames"]
    if patch.patch_f > n_mels:
        raise ConfigError("patch.patch_f", f"{patch.patch_f} exceeds frontend.n_mels={n_mels}")
    if patch.patch_t > n_frames:
        raise ConfigError("patch.patch_t", f"{patch.patch_t} exceeds frontend.n_frames={n_frames}")
    if patch.mode == "fftp" and (patch.patch_f != n_mels or patch.stride_f != n_mels):
        raise ConfigError("patch.patch_f", f"fftp patches must span all {n_mels} mel bins")
    if cfg["model"]["dim"] % cfg["model"]["heads"]:
        raise ConfigError("model.heads", "model.dim must be divisible by model.heads")
    specmask_config(cfg)
    if cfg["mask"]["type"] == "specmask":
        if cfg["mask"]["max_h"] > n_mels:
            raise ConfigError("mask.max_h", f"exceeds frontend.n_mels={n_mels}")
        if cfg["mask"]["max_w"] > n_frames:
            raise ConfigError("mask.max_w", f"exceeds frontend.n_frames={n_frames}")
        if cfg["mask"]["budget_area"] > n_mels * n_frames:
            raise ConfigError("mask.budget_area", "exceeds the spectrogram area")
    data = cfg["paths"]["data"]
    if need_data:
        if data is None:
            raise ConfigError("paths.data", "required")
        if not Path(data).exists():
            raise ConfigError("paths.data", f"{data} does not exist")
    vf = cfg["paths"]["val_fraction"]
    if not isinstance(vf, (int, float)) or not 0 <= vf < 1:
        raise ConfigError("paths.val_fraction", "must lie in [0, 1)")
    return cfg
