"""
Config loader: YAML loading, env variable injection, Pydantic validation.

- One document per pipeline, sources inline (see config/pipeline.yaml).
- Environment variable injection: ${ENV_VAR} replacement in YAML string values other than regexes.
- Every failure surfaces as ConfigError naming the source/feature and the position.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from pathlib import Path
from typing import Any

import structlog
import yaml
from pydantic import ValidationError

from mbda.config.schemas import PipelineConfig
from mbda.errors import ConfigError

logger = structlog.get_logger(__name__)

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
# Regex values keep every "$" as written
_VERBATIM_KEYS = frozenset({"pattern", "timestamp_pattern"})


def _substitute_env(value: Any) -> Any:
    """Replace ${VAR} in strings; recurse into dict/list. Unset variables stay verbatim."""
    if isinstance(value, str):
        return _ENV_PATTERN.sub(lambda m: os.environ.get(m.group(1), m.group(0)), value)
    if isinstance(value, dict):
        return {k: v if k in _VERBATIM_KEYS else _substitute_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_substitute_env(v) for v in value]
    return value


def _describe_location(loc: tuple[Any, ...], data: Any) -> str:
    """Render a pydantic error location, naming sources/features instead of bare indices."""
    parts: list[str] = []
    node = data
    for key in loc:
        if isinstance(key, int) and isinstance(node, list) and 0 <= key < len(node):
            item = node[key]
            name = item.get("name") if isinstance(item, dict) else None
            label = f"[{key}]" + (f"({name})" if name else "")
            if parts:
                parts[-1] += label
            else:
                parts.append(label)
            node = item
            continue
        parts.append(str(key))
        node = node.get(key) if isinstance(node, dict) else None
    return ".".join(parts) or "<root>"


def _validation_message(err: ValidationError, data: Any) -> str:
    lines = []
    for e in err.errors():
        msg = e.get("msg", "invalid")
        lines.append(f"{_describe_location(tuple(e.get('loc', ())), data)}: {msg}")
    return "; ".join(lines)


def load_config(document: str) -> PipelineConfig:
    """
    Parse and validate a pipeline config document.

    Args:
        document: YAML text in the pipeline grammar.

    Returns:
        Validated PipelineConfig with every regex compiled.

    Raises:
        ConfigError: Malformed YAML, schema violation, duplicate names, invalid regex,
            or a common interval that is not a multiple of a source interval.
    """
    try:
        data = yaml.safe_load(document)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
        raise ConfigError(f"malformed config document at {where}: {e.problem}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config document: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("malformed config document: top level must be a mapping")
    data = _substitute_env(data)
    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_validation_message(e, data)) from e
    logger.debug("config_loaded", sources=[s.name for s in config.sources], features=config.n_features)
    return config


def load_config_file(path: str | Path) -> PipelineConfig:
    """Read and validate a config file (UTF-8)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e.strerror or e}") from e
    return load_config(text)


def config_digest(config: PipelineConfig) -> str:
    """SHA-256 of the canonical JSON form; identical documents give identical digests."""
    canonical = json.dumps(config.model_dump(mode="json", by_alias=True), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
