"""Run configuration: YAML/JSON documents validated against a strict schema.

Example::

    grid: {dim: 1, points: 8, length: 8.0}
    mixture: {N: [4], include_self_cross: false}
    potentials:
      matrix:
        - [{kind: gaussian, amplitude: 0.5, range: 1.0}]
    initial:
      orbitals:
        - {kind: gaussian, width: 1.0, kick: 1}
    evolution: {dt: 0.001, t_final: 1.0, measure_times: [0.25, 0.5]}
    study: {N_sweep: [[2], [4], [6], [8], [10]]}
    output: {directory: out}

Potential specs take the keys of :class:`hartreemix.potentials.PotentialSpec`.
``potentials.uniform`` may replace ``matrix`` to use one spec for every pair.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from hartreemix.grid import PeriodicGrid, make_grid
from hartreemix.hartree import MixtureSpec, gaussian_orbital, plane_wave
from hartreemix.potentials import KINDS, PotentialMatrix, PotentialSpec


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_num_list = {"type": "array", "items": _num}

_potential = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "amplitude": _num,
        "range": {"type": "number", "minimum": 0},
        "exponent": _num,
        "softening": {"type": "number", "exclusiveMinimum": 0},
        "samples": _num_list,
    },
}

_orbital = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["gaussian", "plane_wave"]},
        "center": {"oneOf": [_num, _num_list]},
        "width": {"type": "number", "exclusiveMinimum": 0},
        "kick": {"oneOf": [_num, _num_list]},
        "mode": {"oneOf": [_int, {"type": "array", "items": _int}]},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim", "points", "length"],
            "properties": {"dim": {"enum": [1, 2, 3]}, "points": {"type": "integer", "minimum": 2},
                           "length": {"type": "number", "exclusiveMinimum": 0}},
        },
        "mixture": {
            "type": "object",
            "additionalProperties": False,
            "required": ["N"],
            "properties": {
                "p": _pos_int,
                "N": {"type": "array", "items": _pos_int, "minItems": 1},
                "c_cross": {"type": "array", "items": _num_list},
                "include_self_cross": {"type": "boolean"},
            },
        },
        "potentials": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "matrix": {"type": "array", "items": {"type": "array", "items": _potential}},
                "uniform": _potential,
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"orbitals": {"type": "array", "items": _orbital}},
        },
        "evolution": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_final": {"type": "number", "minimum": 0},
                "measure_times": _num_list,
                "krylov_tol": {"type": "number", "exclusiveMinimum": 0},
                "krylov_dim": {"type": "integer", "minimum": 2},
                "stride": _pos_int,
            },
        },
        "study": {
            "type": "object",
            "additionalProperties": False,
            "required": ["N_sweep"],
            "properties": {
                "N_sweep": {"type": "array", "items": {"type": "array", "items": _pos_int}},
                "basis_cap": _pos_int,
            },
        },
        "checks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "which": {"type": "array", "items": {"type": "string"}},
                "seed": _int,
                "trials": _pos_int,
                "n_max": _pos_int,
                "modes": _pos_int,
                "weyl_z": _num_list,
                "shift_k_support": {"type": "integer", "minimum": 0},
                "sector_N": {"type": "array", "items": _pos_int},
                "certify_K": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
                "record_runtime": {"type": "boolean"},
            },
        },
    },
}

DEFAULTS = {
    "evolution": {"dt": 1e-3, "t_final": 1.0, "measure_times": [0.25, 0.5, 1.0],
                  "krylov_tol": 1e-9, "krylov_dim": 30, "stride": 10},
    "checks": {"which": ["relbN", "weyl", "coherent_weights", "sector_bounds", "d_constant",
                         "parity", "potential_cert"],
               "seed": 0, "trials": 10_000, "n_max": 64, "modes": 1, "weyl_z": [0.0, 0.5, 1.0],
               "shift_k_support": 8, "sector_N": [4, 8, 12]},
    "output": {"directory": "out", "formats": ["csv", "json"], "record_runtime": False},
}

CHECK_NAMES = {"relbN", "weyl", "coherent_weights", "sector_bounds", "d_constant", "parity",
               "potential_cert"}


def load(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return resolve(doc or {})


def resolve(doc: dict) -> dict:
    """Validate against the schema and fill defaults; returns a new dict."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    out = copy.deepcopy(doc)
    for section, defaults in DEFAULTS.items():
        merged = dict(defaults)
        merged.update(out.get(section, {}))
        out[section] = merged
    unknown = set(out["checks"]["which"]) - CHECK_NAMES
    if unknown:
        raise ConfigError(f"unknown checks {sorted(unknown)}")
    return out


def require(cfg: dict, *sections: str) -> None:
    for s in sections:
        if s not in cfg:
            raise ConfigError(f"missing required section '{s}'")


def build_grid(cfg: dict) -> PeriodicGrid:
    require(cfg, "grid")
    g = cfg["grid"]
    try:
        return make_grid(g["dim"], g["points"], g["length"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_potentials(cfg: dict, p: int) -> PotentialMatrix:
    pot = cfg.get("potentials", {})
    try:
        if "matrix" in pot:
            m = PotentialMatrix.from_list(pot["matrix"])
        elif "uniform" in pot:
            m = PotentialMatrix.uniform(p, PotentialSpec.from_dict(pot["uniform"]))
        else:
            m = PotentialMatrix.zero(p)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"potentials: {exc}") from None
    if m.p != p:
        raise ConfigError(f"potentials: matrix is {m.p}x{m.p}, mixture has {p} components")
    return m


def build_mixture(cfg: dict) -> MixtureSpec:
    require(cfg, "mixture")
    mx = cfg["mixture"]
    N = tuple(mx["N"])
    if "p" in mx and mx["p"] != len(N):
        raise ConfigError(f"mixture: p = {mx['p']} but N has {len(N)} entries")
    pots = build_potentials(cfg, len(N))
    try:
        return MixtureSpec(N, pots, mx.get("c_cross"), mx.get("include_self_cross", False))
    except ValueError as exc:
        raise ConfigError(f"mixture: {exc}") from None


def build_initial(cfg: dict, grid: PeriodicGrid, p: int) -> np.ndarray:
    specs = cfg.get("initial", {}).get("orbitals")
    if specs is None:
        specs = [{"kind": "gaussian", "width": grid.length / 8, "kick": 1}] * p
    if len(specs) != p:
        raise ConfigError(f"initial: {len(specs)} orbitals given for {p} components")
    out = []
    for s in specs:
        if s["kind"] == "gaussian":
            out.append(gaussian_orbital(grid, s.get("center"), s.get("width", 1.0), s.get("kick", 0)))
        else:
            out.append(plane_wave(grid, s.get("mode", 0)))
    return np.stack(out)
