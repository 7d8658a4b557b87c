__all__ = [
    "SemikexError",
    "ConfigError",
    "dir_path",
    "load_config",
    "configure_logging",
    "attack_budget",
]

# Standard Library
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

# Dependencies
from jsonschema import validate, ValidationError
from rich.console import Console
from rich.logging import RichHandler


dir_path = Path(os.path.dirname(os.path.realpath(__file__)))

BUDGET_ENV = "SEMIKEX_MAX_BUDGET"


class SemikexError(Exception):
    """Root of every domain failure. The CLI turns these into exit code 1."""


class ConfigError(SemikexError):
    pass


def _merge(default: dict, user: dict) -> dict:
    merged = dict(default)
    for section, values in user.items():
        if isinstance(values, dict) and isinstance(merged.get(section), dict):
            merged[section] = {**merged[section], **values}
        else:
            merged[section] = values
    return merged


def validate_config(config: dict) -> None:
    """
    Ensures a merged configuration has every section and key the library reads.

    On success, returns None. On failure, throws.
    """
    schema_file = dir_path / "schema" / "config.schema.json"
    with schema_file.open("rb") as f:
        schema = json.load(f)
    try:
        validate(instance=config, schema=schema)
    except ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"Invalid configuration at {where}: {e.message}") from e


def load_config(path: str | Path | None = None) -> dict:
    default_config_path = dir_path / "default_config.toml"
    with default_config_path.open("rb") as f:
        config = tomllib.load(f)

    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as f:
                user_config = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file {path} not found") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid TOML: {e}") from e
        config = _merge(config, user_config)

    if (raw := os.environ.get(BUDGET_ENV)) is not None:
        try:
            config["attacks"]["budget"] = int(raw)
        except ValueError as e:
            raise ConfigError(f"{BUDGET_ENV}={raw!r} is not an integer") from e

    validate_config(config)
    return config


def attack_budget(config: dict | None = None) -> int:
    if config is None:
        config = load_config()
    return config["attacks"]["budget"]


def configure_logging(config: dict) -> None:
    program = config["program"]
    level = logging.DEBUG if program["debug_mode"] else getattr(logging, program["log_level"])

    root = logging.getLogger()
    # Re-configuring replaces our handler rather than stacking another one
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)

    handler = RichHandler(
        console=Console(stderr=True),
        show_path=program["debug_mode"],
        rich_tracebacks=True
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
