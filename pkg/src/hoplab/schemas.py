"""JSON schemas for every file format read or written by the toolkit."""

from __future__ import annotations

from typing import Mapping

import jsonschema

SCHEMA_VERSION = "1"


class SchemaError(ValueError):
    """A record does not match its published schema."""


_STATE = {
    "type": "object",
    "required": ["traj", "frame", "views"],
    "properties": {
        "traj": {"type": "string"},
        "frame": {"type": "integer", "minimum": 0},
        "views": {"type": "array", "items": {"type": "string"}},
    },
}

TRAJECTORY_SCHEMA = {
    "type": "object",
    "required": ["id", "task", "views", "frame_count", "keyframes"],
    "properties": {
        "id": {"type": "string"},
        "task": {"type": "string"},
        "views": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "frame_count": {"type": "integer", "minimum": 1},
        "keyframes": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2},
        "frames": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "string"}},
        },
    },
}

_BIN = {"oneOf": [{"type": "integer", "minimum": 0}, {"const": "zero"}]}

HOP_SAMPLE_SCHEMA = {
    "type": "object",
    "required": ["task", "init", "goal", "before", "after", "hop", "hop_bin", "dist_bin"],
    "properties": {
        "task": {"type": "string"},
        "init": _STATE,
        "goal": _STATE,
        "before": _STATE,
        "after": _STATE,
        "hop": {"type": "number", "minimum": -1, "maximum": 1},
        "hop_bin": _BIN,
        "dist_bin": _BIN,
    },
}

HOP_REQUEST_SCHEMA = {
    "type": "object",
    "required": ["task", "init", "goal", "before", "after", "anchor"],
    "properties": {
        "task": {"type": "string"},
        "init": _STATE,
        "goal": _STATE,
        "before": _STATE,
        "after": _STATE,
        "anchor": {"enum": ["incremental", "forward", "backward"]},
    },
    "additionalProperties": False,
}

_POINT3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_BOX = {
    "type": "object",
    "required": ["min", "max"],
    "properties": {"min": _POINT3, "max": _POINT3},
}

TRACE_SCHEMA = {
    "type": "object",
    "required": ["id", "points"],
    "properties": {
        "id": {"type": "string"},
        "points": {"type": "array", "items": _POINT3},
    },
}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["target_points", "dest_box", "start_radius", "end_margin", "clearance"],
    "properties": {
        "target_points": {"type": "array", "items": _POINT3},
        "dest_box": _BOX,
        "obstacles": {"type": "array", "items": _BOX},
        "start_radius": {"type": "number", "exclusiveMinimum": 0},
        "end_margin": {"type": "number", "minimum": 0},
        "clearance": {"type": "number", "minimum": 0},
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["tool", "version", "schema_version", "command", "outputs", "seed"],
    "properties": {
        "tool": {"const": "hoplab"},
        "version": {"type": "string"},
        "schema_version": {"type": "string"},
        "command": {"type": "string"},
        "outputs": {"type": "array", "items": {"type": "string"}},
        "seed": {"type": ["integer", "null"]},
        "params": {"type": "object"},
    },
}

PROGRESS_COLUMNS = (
    "trajectory_id",
    "direction",
    "t",
    "hop_inc",
    "hop_fwd",
    "hop_bwd",
    "phi_inc",
    "phi_fwd",
    "phi_bwd",
    "phi_fused",
    "phi_conservative",
    "delta_norm",
    "weight",
    "phi",
)

VOC_COLUMNS = (
    "trajectory_id",
    "n_states",
    "voc_forward",
    "voc_reverse",
    "tie_fraction",
    "degenerate",
    "mae",
    "terminal_drift",
)

TRACE_REPORT_COLUMNS = ("id", "start_ok", "end_ok", "collision_free", "success", "rmse")


def validate_record(obj: object, schema: Mapping, where: str = "record") -> None:
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{where}: {exc.message}") from None
