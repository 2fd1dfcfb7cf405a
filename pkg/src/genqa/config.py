"""Layered run configuration: flags > environment > config file > defaults.

One flat key namespace covers model dimensions, training hyperparameters,
and decoding knobs. The config file is plain ``key = value`` text with ``#``
comments; environment variables use the ``GENQA_`` prefix; unknown keys are
rejected wherever they appear.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Mapping

from .model import ModelConfig
from .training import TrainingConfig

ENV_PREFIX = "GENQA_"

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _bool(raw: str) -> bool:
    try:
        return _BOOL_WORDS[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {raw!r}") from None


def _choice(*options: str):
    def parse(raw: str) -> str:
        value = raw.strip()
        if value not in options:
            raise ValueError(f"expected one of {options}, got {raw!r}")
        return value

    return parse


# key -> (parser, default)
KEYS: dict[str, tuple[Any, Any]] = {
    "learning_rate": (float, 0.1),
    "l2": (float, 1e-6),
    "batch_size": (int, 80),
    "epochs": (int, 10),
    "seed": (int, 0),
    "precision": (_choice("float64", "float32"), "float64"),
    "grad_clip": (float, 5.0),
    "enquirer": (_choice("bilinear", "cnn"), "bilinear"),
    "hidden_size": (int, 64),
    "embed_size": (int, 32),
    "question_vocab_size": (int, 2000),
    "answer_vocab_size": (int, 2000),
    "candidate_cap": (int, 256),
    "beam_width": (int, 5),
    "max_answer_len": (int, 40),
    "share_vocab": (_bool, False),
    "cnn_filter_width": (int, 3),
    "cnn_feature_maps": (int, 64),
    "cnn_mlp_hidden": (int, 64),
    "ranking_margin": (float, 0.5),
    "ranking_negatives": (int, 5),
    "threads": (int, 1),
}


class ConfigError(ValueError):
    pass


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; unknown keys are an error."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = raw.strip()
    return out


def resolve(
    config_path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Merge all sources into one fully typed mapping."""
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    raws: dict[str, tuple[str, str]] = {}  # key -> (source, raw string)
    if config_path is not None:
        for key, raw in parse_config_file(config_path).items():
            raws[key] = (f"config file {config_path}", raw)
    for key in KEYS:
        env_name = ENV_PREFIX + key.upper()
        if env_name in env:
            raws[key] = (f"environment {env_name}", env[env_name])
    for name in env:
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX) :].lower()
            if key not in KEYS:
                raise ConfigError(f"unknown configuration key in environment: {name}")
    for key, (parser, default) in KEYS.items():
        if key in raws:
            source, raw = raws[key]
            try:
                values[key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {key}: {exc}") from None
        else:
            values[key] = default
    if overrides:
        for key, value in overrides.items():
            if key not in KEYS:
                raise ConfigError(f"unknown configuration key: {key}")
            if value is not None:
                values[key] = value
    return values


def model_config(values: Mapping[str, Any]) -> ModelConfig:
    return ModelConfig(
        hidden_size=values["hidden_size"],
        embed_size=values["embed_size"],
        question_vocab_size=values["question_vocab_size"],
        answer_vocab_size=values["answer_vocab_size"],
        enquirer=values["enquirer"],
        precision=values["precision"],
        candidate_cap=values["candidate_cap"],
        cnn_filter_width=values["cnn_filter_width"],
        cnn_feature_maps=values["cnn_feature_maps"],
        cnn_mlp_hidden=values["cnn_mlp_hidden"],
        share_vocab=values["share_vocab"],
        beam_width=values["beam_width"],
        max_answer_len=values["max_answer_len"],
    )


def training_config(values: Mapping[str, Any]) -> TrainingConfig:
    return TrainingConfig(
        learning_rate=values["learning_rate"],
        l2=values["l2"],
        batch_size=values["batch_size"],
        epochs=values["epochs"],
        seed=values["seed"],
        precision=values["precision"],
        grad_clip=values["grad_clip"],
        enquirer=values["enquirer"],
    )
