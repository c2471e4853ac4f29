"""Configurable input generation on top of parameter streams.

A generator config carries three knob families for one target grammar:
production weights, structure toggles, and size bounds. The config plus
a byte stream fully determine the generated payload, so replaying a
stream under the same config reproduces the input exactly. Configs
serialize to a small JSON object and carry a content fingerprint so
refinement steps can tell whether anything actually changed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import ConfigParseError, InvalidWeights, ProfileNotFound, UnknownKnob
from .targets import get_target


@dataclass(frozen=True)
class GeneratedInput:
    """One decoded payload plus the bookkeeping needed to audit it."""

    payload: bytes
    decisions_consumed: int
    config_fingerprint: str


@dataclass
class GeneratorConfig:
    target_id: str
    profile: str = "custom"
    weights: dict[str, float] = field(default_factory=dict)
    toggles: dict[str, bool] = field(default_factory=dict)
    bounds: dict[str, int] = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "target": self.target_id,
            "profile": self.profile,
            "weights": dict(sorted(self.weights.items())),
            "toggles": dict(sorted(self.toggles.items())),
            "bounds": dict(sorted(self.bounds.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2) + "\n"

    def fingerprint(self) -> str:
        """Content hash over everything that affects generation.

        The profile label is excluded: two configs that generate
        identically fingerprint identically.
        """
        payload = json.dumps(
            {
                "target": self.target_id,
                "weights": self.weights,
                "toggles": self.toggles,
                "bounds": self.bounds,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def copy(self) -> "GeneratorConfig":
        return GeneratorConfig(
            self.target_id,
            self.profile,
            dict(self.weights),
            dict(self.toggles),
            dict(self.bounds),
        )


def validate_config(config: GeneratorConfig) -> GeneratorConfig:
    """Check knob names and values against the target's schema.

    Unknown names raise UnknownKnob. Missing names are filled in from
    the schema defaults, so a partial config is a delta on top of them.
    """
    schema = get_target(config.target_id).knobs
    for kind, given, known in (
        ("weight", config.weights, schema.weights),
        ("toggle", config.toggles, schema.toggles),
        ("bound", config.bounds, schema.bounds),
    ):
        for name in given:
            if name not in known:
                raise UnknownKnob(f"{config.target_id} has no {kind} named {name!r}")
    for name, value in config.weights.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
            raise InvalidWeights(f"weight {name} must be a non-negative number")
    for name, value in config.toggles.items():
        if not isinstance(value, bool):
            raise ConfigParseError(f"toggle {name} must be true or false")
    for name, value in config.bounds.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigParseError(f"bound {name} must be a positive integer")
    config.weights = {**schema.weights, **config.weights}
    config.toggles = {**schema.toggles, **config.toggles}
    config.bounds = {**schema.bounds, **config.bounds}
    return config


def default_config(target_id: str) -> GeneratorConfig:
    return validate_config(GeneratorConfig(target_id, profile="default"))


def config_from_obj(obj: dict) -> GeneratorConfig:
    if not isinstance(obj, dict) or "target" not in obj:
        raise ConfigParseError("config object must have a 'target' field")
    for key in ("weights", "toggles", "bounds"):
        if key in obj and not isinstance(obj[key], dict):
            raise ConfigParseError(f"config field {key!r} must be an object")
    config = GeneratorConfig(
        target_id=obj["target"],
        profile=obj.get("profile", "custom"),
        weights=dict(obj.get("weights", {})),
        toggles=dict(obj.get("toggles", {})),
        bounds=dict(obj.get("bounds", {})),
    )
    return validate_config(config)


def load_config(text: str) -> GeneratorConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as bad:
        raise ConfigParseError(f"config is not valid JSON: {bad}") from None
    return config_from_obj(obj)


def save_config(config: GeneratorConfig) -> str:
    return config.to_json()


def load_config_file(path) -> GeneratorConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return load_config(handle.read())


def save_config_file(config: GeneratorConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(config.to_json())


def builtin_config(target_id: str, profile: str) -> GeneratorConfig:
    """Load one of the profiles shipped with a target (naive, structured)."""
    get_target(target_id)  # surface TargetNotFound before the file lookup
    name = f"{target_id}_{profile}.json"
    ref = resources.files("predfuzz.targets").joinpath("profiles", name)
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise ProfileNotFound(f"no builtin profile {profile!r} for {target_id}") from None
    config = load_config(text)
    if config.target_id != target_id:
        raise ConfigParseError(f"profile {name} names target {config.target_id!r}")
    config.profile = profile
    return config


def generate(config: GeneratorConfig, stream) -> GeneratedInput:
    """Decode one payload from the stream under this config."""
    payload = get_target(config.target_id).decode(config, stream)
    return GeneratedInput(payload, stream.cursor, config.fingerprint())
