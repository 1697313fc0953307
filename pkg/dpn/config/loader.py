"""
Run configuration loading.

A config file is sectioned `key = value` text:

    [run]
    name = copy-m9
    preset = tiny
    ablation = M9

    [model]
    d = 64

    [train]
    lr = 0.25

Layers are applied in order: schema defaults, preset, file sections, ablation
switches, command-line flags, `--set section.key=value` overrides. The merged
result is validated once; unknown sections or keys are rejected by name.
"""

import configparser
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from pydantic import ValidationError

from dpn.config.presets import get_preset
from dpn.config.schema import RunConfig
from dpn.errors import ConfigError

logger = logging.getLogger(__name__)

SECTIONS = ("model", "train", "decode", "data")
RUN_KEYS = ("name", "preset", "ablation")


def _merge(target: Dict[str, Any], layer: Dict[str, Dict[str, Any]]):
    for section, values in layer.items():
        target.setdefault(section, {}).update(values)


def read_config_file(path: str) -> Dict[str, Any]:
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"Config file not found: {path}")

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(file_path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"Could not parse config file {path}: {e}") from e

    raw: Dict[str, Any] = {}
    for section in parser.sections():
        if section == "run":
            for key, value in parser.items(section):
                if key not in RUN_KEYS:
                    raise ConfigError(f"run.{key}: unknown key in {path}")
                raw[key] = value
        elif section in SECTIONS:
            raw[section] = dict(parser.items(section))
        else:
            raise ConfigError(f"[{section}]: unknown section in {path}")
    return raw


def parse_override(item: str):
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"Override must look like section.key=value, got: {item}")
    dotted, value = item.split("=", 1)
    section, key = dotted.strip().split(".", 1)
    return section, key.strip(), value.strip()


def _format_validation(error: ValidationError) -> str:
    parts = []
    for err in error.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def build_run_config(
    config_path: Optional[str] = None,
    overrides: Iterable[str] = (),
    preset: Optional[str] = None,
    ablation: Optional[str] = None,
    task: Optional[str] = None,
    name: Optional[str] = None,
) -> RunConfig:
    from dpn.models.ablation import build_ablation

    file_values = read_config_file(config_path) if config_path else {}
    preset = preset or file_values.get("preset")
    ablation = ablation or file_values.get("ablation")

    merged: Dict[str, Any] = {}
    if preset:
        _merge(merged, get_preset(preset))
    _merge(merged, {s: file_values[s] for s in SECTIONS if s in file_values})
    if task:
        _merge(merged, {"data": {"task": task}})

    for item in overrides:
        section, key, value = parse_override(item)
        if section == "run":
            if key not in RUN_KEYS:
                raise ConfigError(f"run.{key}: unknown key")
            if key == "preset":
                raise ConfigError("run.preset cannot be overridden after presets are applied")
            if key == "ablation":
                ablation = value
            else:
                name = value
            continue
        if section not in SECTIONS:
            raise ConfigError(f"{section}.{key}: unknown section '{section}'")
        merged.setdefault(section, {})[key] = value

    payload: Dict[str, Any] = dict(merged)
    payload["name"] = name or file_values.get("name") or "run"
    payload["preset"] = preset
    payload["ablation"] = ablation

    try:
        if ablation:
            # switches must be applied before the depth/path validation runs
            model_values = RunConfig.model_fields["model"].default.model_dump()
            model_values.update(payload.get("model", {}))
            payload["model"] = build_ablation(ablation, model_values).model_dump()
        config = RunConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(_format_validation(e)) from e

    logger.info(
        f"Run config '{config.name}': preset={config.preset} ablation={config.ablation} "
        f"task={config.data.task}"
    )
    return config
