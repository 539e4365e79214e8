"""
Experiment plan loading: JSON files validated against the bundled schema, merged over the default
plan, with seed and parallelism overridable from the environment and then from the command line.
"""

import copy
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Union

from jsonschema import Draft202012Validator


__all__ = ["ConfigError", "load_schema", "default_plan", "validate_plan", "load_config", "plan_hash"]


RESOURCES = Path(__file__).parent / "resources"

SEED_ENV = "WALLFLIP_SEED"
PARALLELISM_ENV = "WALLFLIP_PARALLELISM"


class ConfigError(ValueError):
    """Malformed or schema-violating experiment plan."""


def load_schema() -> Dict:
    with open(RESOURCES / "plan_schema.json") as f:
        return json.load(f)


def default_plan() -> Dict:
    with open(RESOURCES / "default_plan.json") as f:
        return json.load(f)


def validate_plan(plan: Dict, schema: Optional[Dict] = None):
    """
    Raises:
        ConfigError: naming the first offending key and the schema message.
    """
    validator = Draft202012Validator(schema or load_schema())
    errors = sorted(validator.iter_errors(plan), key=lambda e: list(e.absolute_path))
    if errors:
        where = "/".join(str(p) for p in errors[0].absolute_path) or "<root>"
        raise ConfigError(f"invalid plan at {where}: {errors[0].message}")


def _deep_merge(base: Dict, override: Dict) -> Dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _env_int(name: str) -> Optional[int]:
    value = os.environ.get(name)
    if value is None or value == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got {value!r}")


def load_config(
    path: Union[str, Path, None] = None,
    seed: Optional[int] = None,
    parallelism: Optional[int] = None,
) -> Dict:
    """
    Resolves an experiment plan. Precedence is: arguments, then the ``WALLFLIP_SEED`` and
    ``WALLFLIP_PARALLELISM`` environment variables, then the file, then the default plan.

    Args:
        path (str): JSON plan, possibly partial. Defaults to None (the default plan).
        seed (int): seed override.
        parallelism (int): worker count override.

    Returns:
        Dict: the validated, fully resolved plan.

    Raises:
        ConfigError
    """
    schema = load_schema()
    plan = default_plan()

    if path is not None:
        try:
            with open(path) as f:
                user = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {path}: {e}")
        except OSError as e:
            raise ConfigError(f"cannot read plan {path}: {e}")
        if not isinstance(user, dict):
            raise ConfigError("a plan must be a JSON object")
        validate_plan(user, schema)
        plan = _deep_merge(plan, user)
        logging.info(f"Loaded plan {path}")

    for key, flag, env in (("seed", seed, SEED_ENV), ("parallelism", parallelism, PARALLELISM_ENV)):
        value = flag if flag is not None else _env_int(env)
        if value is not None:
            plan[key] = value

    validate_plan(plan, schema)
    return plan


def plan_hash(plan: Dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved plan."""
    payload = json.dumps(plan, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(payload).hexdigest()
