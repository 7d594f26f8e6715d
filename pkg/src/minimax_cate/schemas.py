"""JSON input schemas and a round-trip-safe writer."""

from __future__ import annotations

import json
import math
from typing import Any

import jsonschema
import numpy as np

from .errors import ParseError

_number_list = {"type": "array", "items": {"type": "number"}}

PROBLEM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["p", "variances", "B"],
    "properties": {
        "p": {**_number_list, "minItems": 1},
        "variances": {
            "type": "object",
            "additionalProperties": False,
            "required": ["values"],
            "properties": {
                "scale": {"enum": ["sigma", "absolute"]},
                "values": _number_list,
            },
        },
        "covariances": {"type": "array", "items": _number_list},
        "B": {"anyOf": [{"type": "number"}, {"const": "inf"}]},
        "sigma": {"type": "number"},
    },
}

RCT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["strata"],
    "properties": {
        "strata": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["n0", "n1"],
                "properties": {"n0": {"type": "integer"}, "n1": {"type": "integer"}},
            },
        }
    },
}

DID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["T", "units"],
    "properties": {
        "T": {"type": "integer"},
        "units": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "t_first"],
                "properties": {
                    "id": {"type": ["string", "integer"]},
                    "t_first": {"anyOf": [{"type": "integer"}, {"const": "never"}]},
                },
            },
        },
        "control_rule": {"enum": ["never", "notyet"]},
        "covariance_mode": {"enum": ["linear", "paper"]},
    },
}


def load_json(path: str, schema: dict | None = None) -> Any:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if schema is not None:
        try:
            jsonschema.validate(data, schema)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
            raise ParseError(f"{path}: {where}: {exc.message}") from exc
    return data


def _fmt(x: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if x is None or isinstance(x, (bool, str)):
        return json.dumps(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        if math.isnan(x):
            return "null"
        return format(x, ".17g")
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_fmt(v, indent, level + 1)}" for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(x, (list, tuple)):
        if not x:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in x):
            return "[" + ", ".join(_fmt(v, indent, level + 1) for v in x) + "]"
        items = [pad + _fmt(v, indent, level + 1) for v in x]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits; infinities become ``"inf"``."""
    return _fmt(obj, indent, 0) + "\n"
