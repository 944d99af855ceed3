"""Wire protocol and file-schema validation.

Newline-delimited JSON frames over a socket: clients send command
frames, the service replies with hello/state/ack/error frames. The JSON
schemas shipped under schemas/ are the published contract; the same
files validate scenario scripts.
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema

from .errors import ConfigError

PROTOCOL_VERSION = "1"
LOG_SCHEMA_VERSION = "wirebot-log v1"


def _load_schema(name: str) -> dict:
    ref = resources.files("wirebot").joinpath("schemas").joinpath(name)
    return json.loads(ref.read_text(encoding="utf-8"))


SCENARIO_SCHEMA = _load_schema("scenario.schema.json")
COMMAND_FRAME_SCHEMA = _load_schema("command_frame.schema.json")
SERVER_FRAME_SCHEMA = _load_schema("server_frame.schema.json")

_scenario_validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
_command_validator = jsonschema.Draft7Validator(COMMAND_FRAME_SCHEMA)
_server_validator = jsonschema.Draft7Validator(SERVER_FRAME_SCHEMA)


def validate_scenario(doc: dict) -> dict:
    errors = sorted(_scenario_validator.iter_errors(doc), key=str)
    if errors:
        first = errors[0]
        path = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise ConfigError(f"scenario schema violation at {path}: {first.message}")
    return doc


def validate_command_frame(frame: dict) -> dict:
    errors = list(_command_validator.iter_errors(frame))
    if errors:
        raise ValueError(errors[0].message)
    return frame


def validate_server_frame(frame: dict) -> dict:
    errors = list(_server_validator.iter_errors(frame))
    if errors:
        raise ValueError(errors[0].message)
    return frame


def encode_frame(frame: dict) -> bytes:
    return (json.dumps(frame, separators=(",", ":")) + "\n").encode("utf-8")


def decode_frame(line: str | bytes) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    doc = json.loads(line)
    if not isinstance(doc, dict):
        raise ValueError("frame must be a JSON object")
    return doc
