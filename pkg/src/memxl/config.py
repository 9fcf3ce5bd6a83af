"""Flat key = value run configuration with typed coercion, override
handling, and strict unknown-key rejection."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .model import ModelConfig
from .skip import SkipSchedule
from .train import TrainConfig


@dataclass
class RunConfig:
    """Paths and run plumbing that sit outside the model/optimizer maths."""

    corpus: str | None = None
    level: str = "char"
    checkpoint: str | None = None
    log: str | None = None
    checkpoint_every: int = 0
    eval_split: float = 0.0

    def __post_init__(self):
        if self.level not in ("char", "word"):
            raise ValueError(f"level must be char or word, got {self.level!r}")
        if not 0.0 <= self.eval_split < 1.0:
            raise ValueError(f"eval_split must be in [0, 1), got {self.eval_split}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be nonnegative, got {self.checkpoint_every}")


def parse_kv(text: str) -> dict[str, str]:
    """``key = value`` per line; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ValueError(f"config line {lineno}: empty key or value in {raw.strip()!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def apply_overrides(kv: dict[str, str], overrides: list[str]) -> dict[str, str]:
    out = dict(kv)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ValueError(f"override must look like key=value, got {item!r}")
        out[key] = value
    return out


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


MODEL_KEYS = {
    "n_layers": int,
    "d_model": int,
    "d_inner": int,
    "n_heads": int,
    "d_head": int,
    "mem_len": int,
    "block_len": int,
    "vocab_size": int,
    "dropout": float,
    "beta": float,
    "init_std": float,
    "param_dtype": str,
}

MODEL_DEFAULTS = {
    "n_layers": 4,
    "d_model": 64,
    "d_inner": 256,
    "n_heads": 4,
    "d_head": 16,
    "mem_len": 32,
    "block_len": 32,
}

TRAIN_KEYS = {
    "steps": int,
    "batch_size": int,
    "base_lr": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "cosine_max_iters": int,
    "clip_norm": float,
    "seed": int,
    "eval_interval": int,
    "eval_context": int,
    "eval_block": int,
    "window": int,
    "threshold": float,
}

SCHEDULE_KEYS = {"schedule": str, "schedule_p": float}

RUN_KEYS = {
    "corpus": str,
    "level": str,
    "checkpoint": str,
    "log": str,
    "checkpoint_every": int,
    "eval_split": float,
}

KNOWN_KEYS = {**MODEL_KEYS, **TRAIN_KEYS, **SCHEDULE_KEYS, **RUN_KEYS}


def _coerce(kv: dict[str, str], keys: dict[str, type]) -> dict:
    out = {}
    for key, kind in keys.items():
        if key not in kv:
            continue
        try:
            out[key] = _bool(kv[key]) if kind is bool else kind(kv[key])
        except ValueError as e:
            raise ValueError(f"config key {key}: {e}") from None
    return out


def build_schedule(kv: dict[str, str]) -> SkipSchedule:
    values = _coerce(kv, SCHEDULE_KEYS)
    variant = values.get("schedule", "none")
    return SkipSchedule(variant=variant, p=values.get("schedule_p"))


def build_configs(
    kv: dict[str, str],
    vocab_size: int | None = None,
) -> tuple[ModelConfig, TrainConfig, RunConfig]:
    """Materialize all three configs from one flat mapping.

    ``vocab_size`` supplies the corpus-derived vocabulary when the file
    does not pin one explicitly.
    """
    unknown = sorted(set(kv) - set(KNOWN_KEYS))
    if unknown:
        raise ValueError(f"unknown config keys {unknown}; known keys: {sorted(KNOWN_KEYS)}")

    model_kwargs = {**MODEL_DEFAULTS, **_coerce(kv, MODEL_KEYS)}
    if "vocab_size" not in model_kwargs:
        if vocab_size is None:
            raise ValueError("vocab_size missing: set it in the config or load a corpus first")
        model_kwargs["vocab_size"] = vocab_size
    model_cfg = ModelConfig(**model_kwargs)

    train_kwargs = _coerce(kv, TRAIN_KEYS)
    train_kwargs.setdefault("steps", 1000)
    train_cfg = TrainConfig(schedule=build_schedule(kv), **train_kwargs)

    run_cfg = RunConfig(**_coerce(kv, RUN_KEYS))
    return model_cfg, train_cfg, run_cfg
