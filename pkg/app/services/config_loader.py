"""Plain-text run configuration: ``section.key = value`` lines over a named profile."""

import copy
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

from app.errors import InvalidArgumentError
from app.schemas.config import PROFILES, RunConfig

PathLike = Union[str, Path]


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _assign(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise InvalidArgumentError(f"'{key}' in '{dotted}' is a value, not a section")
        node = child
    node[keys[-1]] = value


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_config_text(text: str) -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InvalidArgumentError(f"config line {number}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise InvalidArgumentError(f"config line {number}: empty key")
        _assign(tree, key, _parse_value(raw))
    return tree


def _flatten(tree: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def _validate(tree: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise InvalidArgumentError(f"invalid config at '{location}': {first['msg']}") from exc


def dump_run_config(cfg: RunConfig) -> str:
    flat = _flatten(cfg.model_dump(mode="json"))
    return "".join(f"{key} = {json.dumps(flat[key])}\n" for key in sorted(flat))


def load_run_config(
    path: Optional[PathLike] = None,
    text: Optional[str] = None,
    profile: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Profile defaults, then the file, then dotted ``overrides``; validated as a RunConfig."""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from exc
    from_file = parse_config_text(text or "")
    name = profile or from_file.get("profile") or "paper"
    if name not in PROFILES:
        raise InvalidArgumentError(f"unknown profile '{name}', expected one of {sorted(PROFILES)}")
    tree = _merge(PROFILES[name], from_file)
    if profile:
        tree["profile"] = profile
    for dotted, value in (overrides or {}).items():
        _assign(tree, dotted, _parse_value(value) if isinstance(value, str) else value)
    return _validate(tree)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Re-seed the array draw, every dataset and the trainer from one value."""
    tree = cfg.model_dump()
    tree["array"]["seed"] = seed
    tree["train"]["seed"] = seed
    for split in ("train", "val", "test"):
        tree["data"][split]["seed"] = seed
    return _validate(tree)
