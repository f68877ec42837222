"""Experiment configuration from key=value files, manifests and flag overrides."""

from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping

from .engine import ExperimentConfig
from .errors import ConfigError

# Config keys differ from attribute names only where Python reserves the word.
KEY_TO_FIELD = {"lambda": "lam"}
FIELD_TO_KEY = {v: k for k, v in KEY_TO_FIELD.items()}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
CONFIG_KEYS = tuple(FIELD_TO_KEY.get(name, name) for name in _FIELD_TYPES)


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {raw!r}")


def _coerce(key: str, value: Any) -> Any:
    name = KEY_TO_FIELD.get(key, key)
    kind = _FIELD_TYPES[name]
    try:
        if kind == "bool":
            return value if isinstance(value, bool) else _parse_bool(key, str(value))
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "str":
            return str(value).strip()
        if kind.startswith("tuple[int"):
            items = value.split(",") if isinstance(value, str) else value
            return tuple(int(v) for v in items if str(v).strip())
        if kind.startswith("tuple[str"):
            items = value.split(",") if isinstance(value, str) else value
            return tuple(str(v).strip() for v in items if str(v).strip())
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {value!r} as {kind}") from None
    raise ConfigError(key, f"unsupported type {kind}")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    values: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def read_manifest_config(path: str | Path) -> dict[str, Any]:
    manifest = json.loads(Path(path).read_text())
    if "config" not in manifest:
        raise ConfigError("config", f"{path} is not a run manifest")
    return dict(manifest["config"])


def _normalise_key(key: str) -> str:
    key = key.replace("-", "_")
    if key == "lam":
        key = "lambda"
    return key


def parse_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Resolve a config: defaults, then file (key=value or manifest JSON), then overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        raw = read_manifest_config(path) if path.suffix == ".json" else read_config_file(path)
        values.update({_normalise_key(k): v for k, v in raw.items()})
    if overrides:
        values.update({_normalise_key(k): v for k, v in overrides.items() if v is not None})
    kwargs = {}
    for key, value in values.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(key, "unknown configuration key")
        kwargs[KEY_TO_FIELD.get(key, key)] = _coerce(key, value)
    return ExperimentConfig(**kwargs)


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """Fully resolved config keyed by config-file names."""
    return {FIELD_TO_KEY.get(k, k): v for k, v in config.to_dict().items()}
