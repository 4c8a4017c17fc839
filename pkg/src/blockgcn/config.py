"""Flat ``key = value`` run configuration.

A config file holds one assignment per line; ``#`` starts a comment. The
special key ``preset`` (``tiny``, ``desk`` or ``paper``) picks the starting
point; every other key names a field of :class:`ModelConfig` or
:class:`TrainConfig`. Tuples are written comma-separated::

    preset = desk
    groups = 2
    channels = 16, 16, 32, 32
    base_lr = 0.05
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, UnknownPresetError
from .model import ModelConfig, branch_to_str, desk_config, paper_config, tiny_config
from .training import TrainConfig, paper_train_config

PRESETS = ("tiny", "desk", "paper")

_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    preset: str = "desk"

    def items(self) -> list[tuple[str, str]]:
        """Effective settings as ``(key, text)`` pairs, in a stable order."""
        out = [("preset", self.preset)]
        for obj in (self.model, self.train):
            for f in fields(obj):
                out.append((f.name, format_value(getattr(obj, f.name))))
        return out

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(branch_to_str(x) if hasattr(x, "kind") else str(x) for x in v)
    return str(v)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str, default):
    """Convert ``text`` to the type of ``default``."""
    text = text.strip()
    try:
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if key == "branches":
                return tuple(parts)
            return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def parse_assignments(lines) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def preset_config(name: str) -> RunConfig:
    if name == "tiny":
        return RunConfig(tiny_config(), TrainConfig(total_epochs=10, decay_epochs=(7, 9), batch_size=16), name)
    if name == "desk":
        return RunConfig(desk_config(), TrainConfig(), name)
    if name == "paper":
        return RunConfig(paper_config(), paper_train_config(), name)
    raise UnknownPresetError(f"unknown preset {name!r}; choose from {PRESETS}")


def build_config(assignments: dict[str, str]) -> RunConfig:
    """Apply ``assignments`` on top of the preset they name (``desk`` by default)."""
    assignments = dict(assignments)
    name = assignments.pop("preset", "desk")
    base = preset_config(name)
    unknown = set(assignments) - _MODEL_KEYS - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    model_kw = base.model.to_dict()
    train_kw = base.train.to_dict()
    for key, text in assignments.items():
        if key in _MODEL_KEYS:
            model_kw[key] = parse_value(key, text, getattr(base.model, key))
        else:
            train_kw[key] = parse_value(key, text, getattr(base.train, key))
    return RunConfig(ModelConfig.from_dict(model_kw), TrainConfig.from_dict(train_kw), name)


def load_config(source: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """``source`` is a preset name or a config file path; ``overrides`` win over both."""
    assignments: dict[str, str] = {}
    if source is not None:
        if str(source) in PRESETS:
            assignments["preset"] = str(source)
        else:
            path = Path(source)
            if not path.exists():
                raise ConfigError(f"no preset or config file named {source!r}")
            assignments.update(parse_assignments(path.read_text().splitlines()))
    assignments.update(overrides or {})
    return build_config(assignments)
