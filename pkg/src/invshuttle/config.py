"""JSON protocol configuration with explicit units.

Every physical quantity is written as ``{"value": <number>, "unit": <str>}``.
Errors carry the line of the offending entry so they can be fixed in place.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import jsonschema

from .protocols import SeparationSpec

SCHEMA_VERSION = 1

FREQUENCY_UNITS = {"Hz": 2 * math.pi, "kHz": 2e3 * math.pi, "MHz": 2e6 * math.pi, "rad/s": 1.0}
LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
MASS_UNITS = {"amu": 1.0}
DURATION_UNITS = {"1/omega_t": None, "s": None}


def _quantity(units) -> dict:
    return {
        "type": "object",
        "properties": {
            "value": {"type": "number"},
            "unit": {"enum": sorted(units)},
        },
        "required": ["value", "unit"],
        "additionalProperties": False,
    }


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "omega_t": _quantity(FREQUENCY_UNITS),
        "omega_r": _quantity(FREQUENCY_UNITS),
        "omega_z": _quantity(FREQUENCY_UNITS),
        "ion": {
            "type": "object",
            "properties": {
                "mass": _quantity(MASS_UNITS),
                "charge": {"type": "number"},
            },
            "required": ["mass"],
            "additionalProperties": False,
        },
        "separation": _quantity(LENGTH_UNITS),
        "transverse_offset": _quantity(LENGTH_UNITS),
        "duration": _quantity(DURATION_UNITS),
        "dimension": {"type": "integer"},
        "coulomb_scale": {"type": "number"},
        "grid": {
            "type": "object",
            "properties": {
                "steps": {"type": ["integer", "null"]},
                "fock_cutoff": {"type": "integer", "minimum": 0},
                "quadrature_nodes": {"type": ["integer", "null"], "minimum": 2},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {"durations": {"type": "array", "items": {"type": "number"}}},
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"directory": {"type": "string"}},
            "additionalProperties": False,
        },
        "deterministic": {"const": True},
    },
    "required": ["omega_t", "omega_r", "ion", "separation", "duration"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` is ``path:line: message``."""

    def __init__(self, message: str, source: str = "<config>", line: Optional[int] = None):
        self.message = message
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _locate(text: str, path: Sequence[Union[str, int]]) -> Optional[int]:
    """Best-effort line number of the JSON value at ``path``."""
    pos = 0
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


@dataclass(frozen=True)
class ProtocolConfig:
    """A validated configuration together with the text it came from."""

    data: Dict[str, Any]
    source: str = "<config>"
    text: str = ""

    @property
    def digest(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def output_directory(self) -> Optional[str]:
        return self.data.get("output", {}).get("directory")

    @property
    def durations(self) -> Optional[List[float]]:
        d = self.data.get("sweep", {}).get("durations")
        return None if d is None else [float(x) for x in d]

    def error(self, path: Sequence[Union[str, int]], message: str) -> ConfigError:
        return ConfigError(message, self.source, _locate(self.text, path) if self.text else None)

    def to_spec(self) -> SeparationSpec:
        d = self.data
        omega_t = _convert(d["omega_t"], FREQUENCY_UNITS)
        omega_r = _convert(d["omega_r"], FREQUENCY_UNITS)
        omega_z = _convert(d["omega_z"], FREQUENCY_UNITS) if "omega_z" in d else None
        mass = _convert(d["ion"]["mass"], MASS_UNITS)
        charge = float(d["ion"].get("charge", 1.0))
        separation = _convert(d["separation"], LENGTH_UNITS)
        offset = _convert(d["transverse_offset"], LENGTH_UNITS) if "transverse_offset" in d else 100e-6
        dur = d["duration"]
        duration = float(dur["value"]) * (omega_t if dur["unit"] == "s" else 1.0)
        grid = d.get("grid", {})
        dimension = int(d.get("dimension", 2))
        scale = float(d.get("coulomb_scale", 1.0))

        checks = [
            (["omega_t"], omega_t > 0, "omega_t must be positive (omega_r > omega_t > 0)"),
            (["omega_r"], omega_r > omega_t, "omega_r must exceed omega_t (omega_r > omega_t > 0)"),
            (["ion", "mass"], mass > 0, "ion mass must be positive"),
            (["ion", "charge"], charge > 0, "ion charge must be positive"),
            (["separation"], separation > 0, "separation must be positive (d > 0)"),
            (["duration"], duration > 0, "duration must be positive (T > 0)"),
            (["dimension"], dimension in (2, 3), f"unsupported dimension {dimension}; expected 2 or 3"),
            (["coulomb_scale"], scale >= 0, "coulomb_scale must be non-negative"),
        ]
        if omega_z is not None:
            checks.append((["omega_z"], omega_z > 0, "omega_z must be positive"))
        steps = grid.get("steps")
        if steps is not None:
            checks.append((["grid", "steps"], steps >= 2 and steps % 2 == 0, "grid.steps must be an even integer >= 2"))
        for path, ok, msg in checks:
            if not ok:
                raise self.error(path, msg)
        if any(not t > 0 for t in self.durations or []):
            raise self.error(["sweep", "durations"], "sweep durations must be positive")

        return SeparationSpec(
            omega_t=omega_t,
            omega_r=omega_r,
            ion_mass_amu=mass,
            ion_charge=charge,
            separation=separation,
            transverse_offset=offset,
            duration=duration,
            dimension=dimension,
            omega_z=omega_z,
            steps=steps,
            fock_cutoff=int(grid.get("fock_cutoff", 4)),
            quadrature_nodes=grid.get("quadrature_nodes"),
            coulomb_scale=scale,
        )


def _convert(q: Dict[str, Any], table: Dict[str, float]) -> float:
    return float(q["value"]) * table[q["unit"]]


def parse_config(text: str, source: str = "<config>") -> Tuple[ProtocolConfig, SeparationSpec]:
    """Parse, schema-check and physically check a configuration document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", source, exc.lineno) from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        label = ".".join(str(p) for p in path) or "<root>"
        line = _locate(text, path) if path else 1
        raise ConfigError(f"{label}: {err.message}", source, line)
    cfg = ProtocolConfig(copy.deepcopy(data), source, text)
    return cfg, cfg.to_spec()


def load_config(path: Union[str, Path]) -> Tuple[ProtocolConfig, SeparationSpec]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from None
    return parse_config(text, str(path))


def example_config() -> Dict[str, Any]:
    """The reference two-ion separation configuration."""
    from importlib.resources import files

    return json.loads(files("invshuttle").joinpath("data/separation.json").read_text())
