"""Versioned TOML scenario files for the command-line front end."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ScenarioError

SCHEMA_VERSION = 1

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "system"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "system": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["pendubot", "vtol", "spider"]},
                "params": {"type": "object", "additionalProperties": _num},
                "q_star": _vec,
            },
        },
        "md": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["design", "identity", "matrix"]},
                "a": _vec,
                "b": _vec,
                "lam": _num,
                "matrix": {"type": "array", "items": _vec},
            },
        },
        "vd": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["exact", "printed", "quadratic", "invariant"]},
                "c": _num,
                "w": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "k1": _num,
                "k2": _num,
            },
        },
        "kv": {
            "type": "object",
            "required": ["diag"],
            "additionalProperties": False,
            "properties": {"diag": _vec},
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q0": _vec,
                "p0": _vec,
                "T": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "record_every": {"type": "integer", "minimum": 1},
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "domain": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "points": {"type": "integer", "minimum": 2},
                "samples": {"type": "integer", "minimum": 1},
            },
        },
    },
}

# per-system defaults, merged under whatever the file provides
DEFAULTS = {
    "pendubot": {
        "md": {"kind": "design", "a": [1.0], "b": [-5.0], "lam": 1.0},
        "vd": {"preset": "quadratic", "c": 10.0},
        "kv": {"diag": [1.0]},
        "sim": {"q0": [0.1, -0.1], "p0": [0.0, 0.0], "T": 10.0, "dt": 1e-3, "record_every": 10},
        "grids": {"domain": [-1.2, 1.2], "points": 1001, "samples": 200},
    },
    "vtol": {
        "md": {"kind": "design"},
        "vd": {"preset": "exact", "w": [0.0, 28.0, 0.0]},
        "kv": {"diag": [1.0, 0.5]},
        "sim": {"q0": [6.0, -5.0, -1.0], "p0": [0.0, 0.0, 0.0], "T": 30.0, "dt": 1e-3, "record_every": 10},
        "grids": {"points": 50, "samples": 200},
    },
    "spider": {
        "md": {"kind": "design"},
        "vd": {"preset": "invariant", "k1": 1.0, "k2": 1.0},
        "kv": {"diag": [1.0, 1.0]},
        "sim": {"q0": [0.3, 1.2, 0.4], "p0": [0.0, 0.0, 0.0], "T": 10.0, "dt": 1e-3, "record_every": 10},
        "grids": {"points": 10, "samples": 200},
    },
}


@dataclass
class Scenario:
    system: str
    params: dict
    q_star: list | None
    md: dict
    vd: dict
    kv: list
    sim: dict
    grids: dict
    seed: int = 0
    source: str = field(default="", compare=False)


def parse_scenario(data: dict, source: str = "") -> Scenario:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{source or 'scenario'}: {where}: {exc.message}") from None
    name = data["system"]["name"]
    merged = {}
    for key, default in DEFAULTS[name].items():
        merged[key] = {**default, **data.get(key, {})}
    return Scenario(
        system=name,
        params=dict(data["system"].get("params", {})),
        q_star=data["system"].get("q_star"),
        md=merged["md"], vd=merged["vd"], kv=list(merged["kv"]["diag"]),
        sim=merged["sim"], grids=merged["grids"],
        seed=int(data.get("seed", 0)), source=source,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return parse_scenario(data, str(path))
