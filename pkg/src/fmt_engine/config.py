"""Run-configuration loading and schema validation."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_ID = "fmt-engine/1"
TASKS = ("measures", "weights-check", "excluded-volume", "virial", "eos", "profile", "identity-suite")
MC_TASKS = ("excluded-volume", "virial", "identity-suite")


class ConfigError(ValueError):
    """Schema or semantic violation; ``errors`` lists ``(path, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        msg = "; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors)
        super().__init__(msg)


_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["schema", "task"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "task": {"enum": list(TASKS)},
        "bodies": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["shape"],
                "properties": {
                    "shape": {"enum": ["sphere", "spheroid", "mesh"]},
                    "name": {"type": "string"},
                    "radius": _pos,
                    "a": _pos,
                    "c": _pos,
                    "path": {"type": "string"},
                },
                "additionalProperties": False,
                "allOf": [
                    {"if": {"properties": {"shape": {"const": "sphere"}}},
                     "then": {"required": ["radius"]}},
                    {"if": {"properties": {"shape": {"const": "spheroid"}}},
                     "then": {"required": ["a", "c"]}},
                    {"if": {"properties": {"shape": {"const": "mesh"}}},
                     "then": {"required": ["path"]}},
                ],
            },
        },
        "model": {
            "type": "object",
            "properties": {
                "variant": {"enum": ["rosenfeld", "tarazona", "generalized"]},
                "preset": {"enum": ["rosenfeld", "tarazona"]},
                "coefficients": {"type": "object", "additionalProperties": {"type": "number"}},
                "dimension": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "mc": {
            "type": "object",
            "required": ["seed"],
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1000},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "kernel": {"enum": ["tarazona", "rosenfeld", "euler_product"]},
                "L_max": {"type": "integer", "minimum": 0},
                "resolution": {"type": "integer", "minimum": 32},
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "dz": _pos,
                "extent_diameters": {"type": "number", "minimum": 10},
            },
            "additionalProperties": False,
        },
        "eos": {
            "type": "object",
            "properties": {
                "eta": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                        "minItems": 1},
            },
            "additionalProperties": False,
        },
        "profile": {
            "type": "object",
            "properties": {
                "eta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "radius": _pos,
                "wall": {"enum": ["hard", "none"]},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "tol": _pos,
                "max_iter": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "identity": {
            "type": "object",
            "properties": {
                "n_configs": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"format": {"enum": ["csv", "json"]}},
            "additionalProperties": False,
        },
    },
}

DEFAULTS = {
    "bodies": [{"shape": "sphere", "radius": 1.0}],
    "model": {"variant": "rosenfeld"},
    "mc": {"n_samples": 1_000_000, "kernel": "tarazona", "L_max": 2, "resolution": 4096},
    "grid": {"extent_diameters": 20.0},
    "eos": {"eta": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]},
    "profile": {"eta": 0.3, "radius": 0.5, "wall": "hard", "alpha": 0.05, "tol": 1e-8,
                "max_iter": 100_000},
    "identity": {"n_configs": 1_000_000},
    "output": {"format": "csv"},
}


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts)


def validate(cfg):
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errs:
        raise ConfigError([(_path(e), e.message) for e in errs])
    if cfg["task"] in MC_TASKS and "seed" not in cfg.get("mc", {}):
        raise ConfigError([("mc.seed", f"task {cfg['task']!r} requires an explicit seed")])


def normalize(cfg):
    """Validate and fill defaults; returns a new dict."""
    validate(cfg)
    out = copy.deepcopy(cfg)
    for k, d in DEFAULTS.items():
        if k not in out:
            out[k] = copy.deepcopy(d)
        elif isinstance(d, dict):
            merged = copy.deepcopy(d)
            merged.update(out[k])
            out[k] = merged
    return out


def load(path, task=None):
    """Load a TOML config or a JSON manifest (replay) and normalise it.

    Parameters
    ----------
    path : str or Path
    task : str, optional
        Task named on the command line; must agree with the file if both
        are given.
    """
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError([("", f"cannot read config {path}: {exc}")]) from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
            if "config" in data and "config_sha256" in data:
                data = data["config"]
        else:
            data = tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError([("", f"parse error: {exc}")]) from exc
    if task is not None:
        if "task" in data and data["task"] != task:
            raise ConfigError([("task", f"config declares {data['task']!r} but {task!r} was requested")])
        data.setdefault("task", task)
    return normalize(data)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
