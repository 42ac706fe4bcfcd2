"""Instance files: JSON schema, loading and writing."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .criteria import SrCriterion, criterion_from_json
from .errors import ValidationError
from .model import TabularCaMDP, validate_camdp

_NUM = {"type": "number"}


def _nested(depth: int) -> dict:
    node = _NUM
    for _ in range(depth):
        node = {"type": "array", "items": node}
    return node


CONSTRAINT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "budget"],
    "properties": {
        "kind": {"enum": ["expectation", "chance", "almost_sure"]},
        "budget": _NUM,
        "anytime": {"type": "boolean"},
        "delta": {"type": "number", "minimum": 0, "maximum": 1},
        "grid_unit": {"type": "number", "exclusiveMinimum": 0},
    },
}

INSTANCE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["horizon", "num_states", "num_actions", "initial_state", "transitions", "rewards", "costs",
                 "constraints", "epsilon", "mode"],
    "properties": {
        "horizon": {"type": "integer", "minimum": 1},
        "num_states": {"type": "integer", "minimum": 1},
        "num_actions": {"type": "integer", "minimum": 1},
        "initial_state": {"type": "integer", "minimum": 0},
        "transitions": _nested(4),
        "rewards": _nested(3),
        "costs": _nested(4),
        "valid_actions": {"type": "array", "items": {"type": "array", "items": {
            "type": "array", "items": {"type": "integer", "minimum": 0}}}},
        "constraints": {"type": "array", "minItems": 1, "items": CONSTRAINT_SCHEMA},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["additive", "relative"]},
    },
}


def json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


@dataclass(frozen=True)
class Instance:
    model: TabularCaMDP
    criterion: SrCriterion
    epsilon: float
    mode: str
    name: str = ""


def _array(data, key, shape):
    try:
        arr = np.asarray(data[key], dtype=float)
    except ValueError:
        raise ValidationError("shape", f"{key} is ragged", f"$.{key}") from None
    if arr.shape != shape:
        raise ValidationError("shape", f"{key} has shape {arr.shape}, expected {shape}", f"$.{key}")
    return arr


def parse_instance(data: dict, name: str = "") -> Instance:
    """Schema check, then shape and probability checks; errors carry a JSON path."""
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(INSTANCE_SCHEMA).iter_errors(data))
    if err is not None:
        raise ValidationError("schema", err.message, json_path(err.absolute_path))
    H, S, A = data["horizon"], data["num_states"], data["num_actions"]
    m = len(data["constraints"])
    P = _array(data, "transitions", (H, S, A, S))
    r = _array(data, "rewards", (H, S, A))
    c = _array(data, "costs", (H, S, A, m))
    va = data.get("valid_actions")
    model = validate_camdp(TabularCaMDP(P, r, c, data["initial_state"], va))
    crit = criterion_from_json(data["constraints"])
    return Instance(model, crit, float(data["epsilon"]), data["mode"], name)


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("json", f"{exc.msg} (line {exc.lineno})", "$") from None
    return parse_instance(data, path.stem)


def instance_to_json(model: TabularCaMDP, criterion: SrCriterion, epsilon: float = 0.1, mode: str = "additive") -> dict:
    out = {
        "horizon": model.horizon,
        "num_states": model.num_states,
        "num_actions": model.num_actions,
        "initial_state": int(model.initial_state),
        "transitions": model.transitions.tolist(),
        "rewards": model.rewards.tolist(),
        "costs": model.costs.tolist(),
        "constraints": [d.to_json() for d in criterion.dims],
        "epsilon": float(epsilon),
        "mode": mode,
    }
    if model.valid_actions is not None:
        out["valid_actions"] = [[list(map(int, a)) for a in row] for row in model.valid_actions]
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
