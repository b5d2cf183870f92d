"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Precedence, lowest first:
built-in defaults, config file, ``GNSS_SENTRY_SEED`` (seed only), CLI flags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from gnss_sentry.detector import DEFAULT_GNSS_ERROR_M, DetectionConfig
from gnss_sentry.errors import FormatError, InvalidInputError
from gnss_sentry.geodesy import MEAN_EARTH_RADIUS_M, EarthModel
from gnss_sentry.lstm import TrainConfig
from gnss_sentry.streams import DEFAULT_FEATURES, KNOWN_FEATURES

SEED_ENV = "GNSS_SENTRY_SEED"
DEFAULT_SEED = 42


@dataclass(frozen=True)
class AppConfig:
    earth_radius_m: float = MEAN_EARTH_RADIUS_M
    features: tuple[str, ...] = DEFAULT_FEATURES
    hidden_size: int = 50
    epochs: int = 100
    batch_size: int = 50
    learning_rate: float = 0.01
    window_len: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n_train: int | None = None
    n_val: int | None = None
    gnss_error_m: float = DEFAULT_GNSS_ERROR_M
    residual_mode: str = "diff"
    bin_width_m: float = 0.005
    seed: int = DEFAULT_SEED
    output_dir: str = "."

    @property
    def earth(self) -> EarthModel:
        return EarthModel(self.earth_radius_m)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_size=self.hidden_size,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            window_len=self.window_len,
            seed=self.seed,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )

    def detection_config(self, prediction_error_m: float) -> DetectionConfig:
        return DetectionConfig(self.gnss_error_m, prediction_error_m, self.residual_mode)


_TYPES = {f.name: f.type for f in fields(AppConfig)}


def parse_features(value: str) -> tuple[str, ...]:
    names = tuple(v.strip() for v in value.split(",") if v.strip())
    unknown = [n for n in names if n not in KNOWN_FEATURES]
    if unknown or not names:
        raise InvalidInputError(
            f"unknown feature list {value!r}; choose from {', '.join(KNOWN_FEATURES)}"
        )
    return names


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if key == "features":
        return parse_features(raw)
    if "None" in kind and raw.lower() in ("", "none"):
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected key = value", line=lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise FormatError(f"unknown config key {key!r}", line=lineno)
        try:
            values[key] = _coerce(key, raw)
        except ValueError:
            raise FormatError(f"bad value for {key}: {raw!r}", line=lineno) from None
    return values


def load_config(path: str | Path | None = None, **overrides) -> AppConfig:
    """Build an :class:`AppConfig`; ``None``-valued overrides are ignored."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        values.update(parse_config_text(text))
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and env_seed.strip():
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise InvalidInputError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = replace(AppConfig(), **values)
    EarthModel(cfg.earth_radius_m)
    return cfg
