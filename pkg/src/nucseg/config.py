"""Pipeline configuration: one JSON document with a versioned schema.

Unknown keys are rejected (they are almost always typos in threshold names).
Every section is optional; command-line flags override whatever the file
provides.
"""

import json
from pathlib import Path

from .augment import JitterParams
from .costloss import COST_RULES
from .errors import ConfigError
from .postprocess import PostprocessParams

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema_version", "postprocess", "jitter", "cost_rule", "workers", "paths"}
_POSTPROCESS_KEYS = {"np_threshold", "marker_threshold", "min_instance_area"}
_JITTER_KEYS = {"max_translation", "max_rotation", "seed", "collision_policy"}
_PATH_KEYS = {"masks", "images", "predictions", "ground_truth", "out"}


def _reject_unknown(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def load_config(path) -> dict:
    """Load and validate a pipeline config file.

    Returns a dict with ``postprocess`` (PostprocessParams), ``jitter``
    (JitterParams), ``cost_rule``, ``workers`` and ``paths`` entries, using
    defaults for absent sections.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {raw.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )

    post_raw = raw.get("postprocess", {})
    _reject_unknown(post_raw, _POSTPROCESS_KEYS, "postprocess")
    jitter_raw = raw.get("jitter", {})
    _reject_unknown(jitter_raw, _JITTER_KEYS, "jitter")
    paths_raw = raw.get("paths", {})
    _reject_unknown(paths_raw, _PATH_KEYS, "paths")
    for key, value in paths_raw.items():
        if not Path(value).exists():
            raise ConfigError(f"paths.{key}: {value!r} does not exist")

    cost_rule = raw.get("cost_rule", "max-ratio")
    if cost_rule not in COST_RULES:
        raise ConfigError(f"unknown cost_rule {cost_rule!r}")
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be an integer >= 1")

    try:
        postprocess = PostprocessParams(**post_raw)
        jitter = JitterParams(**jitter_raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return {
        "postprocess": postprocess,
        "jitter": jitter,
        "cost_rule": cost_rule,
        "workers": workers,
        "paths": {key: Path(value) for key, value in paths_raw.items()},
    }
