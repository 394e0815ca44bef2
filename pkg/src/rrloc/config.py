"""INI-style configuration for the benchmark and CLI.

The file format is flat ``key = value`` pairs grouped into typed sections;
every key maps one-to-one onto an :class:`~rrloc.harness.ExperimentConfig`
field.  Unknown sections or keys are rejected (typos must not silently fall
back to defaults).  See ``configs/schema.md`` for the documented key set
and ``configs/desk.cfg`` for the default desk-scale benchmark.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .harness import ALL_FAMILIES, ExperimentConfig
from .indices import IndexFamily
from .matcore import ContractViolation


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input (CLI exit code 1)."""


# section -> key -> (ExperimentConfig field, parser)
_INT = int
_FLOAT = float


def _BOOL(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(p) for p in items)


def _family_list(text: str) -> tuple[IndexFamily, ...]:
    items = [p.strip().lower() for p in text.split(",") if p.strip()]
    if not items:
        raise ValueError("empty list")
    if items == ["all"]:
        return ALL_FAMILIES
    return tuple(IndexFamily(p) for p in items)


SCHEMA = {
    "experiment": {
        "m": ("m", _INT),
        "s": ("s", _INT),
        "l0": ("l0", _INT),
        "n_fixed_close": ("n_fixed_close", _INT),
        "snr_grid_db": ("snr_grid_db", _float_list),
        "runs": ("runs", _INT),
        "samples_pre": ("samples_pre", _INT),
        "samples_post": ("samples_post", _INT),
        "delta": ("delta", _FLOAT),
        "seed_base": ("seed_base", _INT),
    },
    "generator": {
        "coherence": ("coherence", _FLOAT),
        "leadfield_seed": ("leadfield_seed", _INT),
        "radius": ("radius", _FLOAT),
        "scale_mm": ("scale_mm", _FLOAT),
    },
    "signals": {
        "mvar_order": ("mvar_order", _INT),
        "background_sources": ("background_sources", _INT),
        "sensor_noise_db": ("sensor_noise_db", _FLOAT),
        "ridge_rel": ("ridge_rel", _FLOAT),
        "source_coupling_density": ("source_coupling_density", _FLOAT),
        "source_coupling_strength": ("source_coupling_strength", _FLOAT),
        "close_source_gain": ("close_source_gain", _FLOAT),
        "exact_covariances": ("exact_covariances", _BOOL),
        "source_power": ("source_power", str),
    },
    "indices": {
        "families": ("indices", _family_list),
    },
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text into an ExperimentConfig; unknown keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    kwargs = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(
                f"unknown section [{section}]; expected one of "
                f"{sorted(SCHEMA)}"
            )
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; expected one of "
                    f"{sorted(SCHEMA[section])}"
                )
            field_name, conv = SCHEMA[section][key]
            try:
                kwargs[field_name] = conv(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {raw!r} ({exc})"
                ) from exc
    try:
        return ExperimentConfig(**kwargs)
    except ContractViolation as exc:
        raise ConfigError(f"inconsistent configuration: {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def default_config_text() -> str:
    """The desk-scale defaults, rendered as a complete config file."""
    cfg = ExperimentConfig()
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (field_name, _) in keys.items():
            value = getattr(cfg, field_name)
            if field_name == "indices":
                value = ",".join(f.value for f in value)
            elif field_name == "snr_grid_db":
                value = ",".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
