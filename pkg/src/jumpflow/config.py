"""JSON run configuration: schema, parsing and construction of model objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import jsonschema
import numpy as np

from .almostperiodic import JumpSequence, quasiperiodic_generator
from .model import (ActionDomain, FrequencyField, InitialDensity, Observable, ProductDensity, TransitionSchedule,
                    TrigPolynomial)

SCHEMA_VERSION = "jumpflow/1"

_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MATRIX = {"type": "array", "items": _VECTOR, "minItems": 1}
_INTS = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema", "domain", "frequency", "density", "observables"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "domain": {"type": "object", "required": ["lower", "upper"], "additionalProperties": False,
                   "properties": {"lower": _VECTOR, "upper": _VECTOR}},
        "schedule": {"type": "object", "required": ["period", "times", "jumps"], "additionalProperties": False,
                     "properties": {"period": {"type": "number"}, "times": _VECTOR, "jumps": _MATRIX}},
        "almost_periodic": {
            "type": "object", "required": ["generator"], "additionalProperties": False,
            "properties": {
                "generator": {"enum": ["quasiperiodic", "cycle", "constant"]},
                "amplitude": _VECTOR,
                "rotation": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "phase": {"type": "number"},
                "cycle": _MATRIX,
                "n": {"type": "integer", "minimum": 1},
            },
        },
        "frequency": {
            "type": "object", "required": ["name"], "additionalProperties": False,
            "properties": {
                "name": {"enum": ["linear", "constant", "separable-polynomial"]},
                "matrix": _MATRIX, "offset": _VECTOR, "value": _VECTOR, "coefficients": _MATRIX,
            },
        },
        "density": {
            "type": "object", "required": ["name", "lower", "upper"], "additionalProperties": False,
            "properties": {
                "name": {"enum": ["uniform-box", "truncated-gaussian"]},
                "lower": _VECTOR, "upper": _VECTOR, "mean": _VECTOR,
                "std": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "kappa": _VECTOR, "mu": _VECTOR,
            },
        },
        "observables": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["name", "kind", "terms"], "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "kind": {"const": "trigpoly"},
                    "terms": {"type": "array", "minItems": 1, "items": {
                        "type": "object", "required": ["mode"], "additionalProperties": False,
                        "properties": {"mode": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                                       "cos": {"type": "array"}, "sin": {"type": "array"}}}},
                },
            },
        },
        "backend": {"enum": ["mc", "fourier", "both"]},
        "limit": {"type": "number"},
        "numerics": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "cutoff": {"type": "integer", "minimum": 1},
                "time_order": {"type": "integer", "minimum": 1},
                "grid_resolution": {"type": "integer", "minimum": 2},
                "l_max": {"type": "integer", "minimum": 1},
                "l_values": _INTS,
                "N_values": _INTS,
                "probe_N": _INTS,
                "rl_l_values": _INTS,
                "rl_factor": {"type": "number", "exclusiveMinimum": 0},
                "rl_mode": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                "t_grid": {"type": "object", "required": ["start", "stop", "count"], "additionalProperties": False,
                           "properties": {"start": {"type": "number", "minimum": 0}, "stop": {"type": "number"},
                                          "count": {"type": "integer", "minimum": 1}}},
            },
        },
        "output": {"type": "object", "additionalProperties": False, "properties": {"dir": {"type": "string"}}},
    },
    "oneOf": [{"required": ["schedule"], "not": {"required": ["almost_periodic"]}},
              {"required": ["almost_periodic"], "not": {"required": ["schedule"]}}],
}

DEFAULT_NUMERICS = {
    "samples": 20000,
    "seed": 0,
    "cutoff": 16,
    "time_order": 8,
    "grid_resolution": 21,
    "l_max": 200,
    "N_values": [200, 500, 1000, 2000],
    "probe_N": [1, 10, 100, 1000],
    "rl_l_values": [20, 200],
    "rl_factor": 5.0,
    "t_grid": {"start": 0.0, "stop": 5.0, "count": 51},
}


class ConfigError(ValueError):
    """Configuration could not be parsed; ``location`` is a JSON path or ``line:col``."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


@dataclass
class RunConfig:
    domain: ActionDomain
    field: FrequencyField
    density: InitialDensity
    observables: dict[str, Observable]
    schedule: Optional[TransitionSchedule] = None
    sequence: Optional[JumpSequence] = None
    backend: str = "both"
    limit: Optional[float] = None
    numerics: dict = field(default_factory=dict)
    output_dir: Optional[str] = None

    @property
    def backends(self) -> tuple[str, ...]:
        return ("fourier", "mc") if self.backend == "both" else (self.backend,)

    @property
    def n(self) -> int:
        return self.domain.n


def _dim(value, n: int, where: str, rows: bool = False) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, "ragged or non-numeric array") from None
    ok = arr.ndim == 2 and arr.shape[1] == n if rows else arr.shape == (n,)
    if not ok:
        raise ConfigError(where, f"expected {'rows of' if rows else 'a vector of'} length {n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(where, "non-finite number")
    return arr


def _frequency(spec: dict, n: int) -> FrequencyField:
    name = spec["name"]
    if name == "linear":
        if "matrix" not in spec:
            raise ConfigError("$.frequency", "linear frequency needs 'matrix'")
        mat = np.asarray(spec["matrix"], dtype=float)
        if mat.shape != (n, n):
            raise ConfigError("$.frequency.matrix", f"expected a {n}x{n} matrix, got shape {mat.shape}")
        off = _dim(spec["offset"], n, "$.frequency.offset") if "offset" in spec else None
        return FrequencyField.linear(mat, off)
    if name == "constant":
        if "value" not in spec:
            raise ConfigError("$.frequency", "constant frequency needs 'value'")
        return FrequencyField.constant(_dim(spec["value"], n, "$.frequency.value"))
    coeffs = spec.get("coefficients")
    if coeffs is None or len(coeffs) != n:
        raise ConfigError("$.frequency.coefficients", f"need one coefficient list per coordinate ({n})")
    return FrequencyField.separable_polynomial(coeffs)


def _density(spec: dict, n: int) -> InitialDensity:
    box = ActionDomain(_dim(spec["lower"], n, "$.density.lower"), _dim(spec["upper"], n, "$.density.upper"))
    kind = "uniform" if spec["name"] == "uniform-box" else "truncated-gaussian"
    kw = {k: _dim(spec[k], n, f"$.density.{k}") for k in ("mean", "std", "kappa", "mu") if k in spec}
    return ProductDensity(box, kind, **kw)


def _observable(spec: dict, n: int, index: int) -> Observable:
    for j, term in enumerate(spec["terms"]):
        if len(term["mode"]) != n:
            raise ConfigError(f"$.observables[{index}].terms[{j}].mode", f"mode must have {n} entries")
    try:
        return TrigPolynomial.from_spec(spec["terms"], n, name=spec["name"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"$.observables[{index}].terms", str(exc)) from None


def _sequence(spec: dict, n: int) -> JumpSequence:
    gen = spec["generator"]
    if gen == "quasiperiodic":
        if "amplitude" not in spec or "rotation" not in spec:
            raise ConfigError("$.almost_periodic", "quasiperiodic generator needs 'amplitude' and 'rotation'")
        return quasiperiodic_generator(_dim(spec["amplitude"], n, "$.almost_periodic.amplitude"),
                                       spec["rotation"], spec.get("phase", 0.0))
    if gen == "cycle":
        if "cycle" not in spec:
            raise ConfigError("$.almost_periodic", "cycle generator needs 'cycle'")
        return JumpSequence.from_cycle(_dim(spec["cycle"], n, "$.almost_periodic.cycle", rows=True))
    return JumpSequence.constant(n)


def build_config(doc: dict) -> RunConfig:
    """Validate ``doc`` against :data:`CONFIG_SCHEMA` and build the model objects."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err.absolute_path), err.message)
    n = len(doc["domain"]["lower"])
    domain = ActionDomain(_dim(doc["domain"]["lower"], n, "$.domain.lower"),
                          _dim(doc["domain"]["upper"], n, "$.domain.upper"))
    schedule = sequence = None
    if "schedule" in doc:
        s = doc["schedule"]
        times = _dim(s["times"], len(s["times"]), "$.schedule.times")
        jumps = _dim(s["jumps"], n, "$.schedule.jumps", rows=True)
        if jumps.shape[0] != times.size:
            raise ConfigError("$.schedule.jumps", "need one jump per jump time")
        schedule = TransitionSchedule(float(s["period"]), times, jumps)
    else:
        sequence = _sequence(doc["almost_periodic"], n)
    observables = {}
    for i, spec in enumerate(doc["observables"]):
        if spec["name"] in observables:
            raise ConfigError(f"$.observables[{i}].name", "duplicate observable name")
        observables[spec["name"]] = _observable(spec, n, i)
    numerics = {**DEFAULT_NUMERICS, **doc.get("numerics", {})}
    try:
        field_ = _frequency(doc["frequency"], n)
        density = _density(doc["density"], n)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("$", str(exc)) from None
    return RunConfig(domain, field_, density, observables, schedule, sequence, doc.get("backend", "both"),
                     doc.get("limit"), numerics, doc.get("output", {}).get("dir"))


def load_config(source: Union[str, dict]) -> RunConfig:
    """Parse a JSON file path (or an already-decoded document)."""
    if isinstance(source, dict):
        return build_config(source)
    try:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from None
    except OSError as exc:
        raise ConfigError(str(source), exc.strerror or str(exc)) from None
    return build_config(doc)


__all__ = ["CONFIG_SCHEMA", "SCHEMA_VERSION", "ConfigError", "RunConfig", "build_config", "load_config"]
