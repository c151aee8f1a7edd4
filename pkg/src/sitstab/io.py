"""Run documents (YAML) and CSV outputs.

A run document holds a ``schema_version``, an optional ``params`` block and at
most one study block (``scenario``, ``comparison``, ``robustness``,
``evidence`` or ``certify``). Units: rates in 1/day, times in days, densities
per ha. ``params`` starts from ``base`` (``table1`` or ``comparison``, the
latter being the nominal set with ``beta_E = 8``) and overrides individual fields::

    schema_version: "1"
    params: {base: table1, K: 22200}
    scenario:
      controller: {type: wild_males, lam: 22}
      z0: persistence
      t_final: 400

Validation collects every problem before failing, so a document with several
bad keys reports all of them at once.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .certificates import CertifySpec
from .controllers import Backstepping, Constant, LinearTotalMales, LinearWildMales
from .experiments import (
    COMPARISON_PARAMS,
    PRESETS,
    ComparisonRow,
    ComparisonSpec,
    EvidenceSpec,
    RobustnessSpec,
    ScenarioConfig,
)
from .integrate import IntegratorConfig, Trajectory
from .model import TABLE1, ModelParams

__all__ = [
    "SCHEMA_VERSION",
    "SCHEMA",
    "ConfigError",
    "RunDocument",
    "load_document",
    "validate_document",
    "parse_document",
    "emit_document",
    "dump_document",
    "preset_document",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_table_csv",
    "read_table_csv",
    "write_columns_csv",
]

SCHEMA_VERSION = "1"
PARAM_NAMES = ("beta_E", "gamma_s", "nu_E", "delta_E", "delta_F", "delta_M", "delta_s", "nu", "K")
BASES = {"table1": TABLE1, "comparison": COMPARISON_PARAMS}
STUDIES = ("scenario", "comparison", "robustness", "evidence", "certify")


class ConfigError(ValueError):
    """A run document is unreadable or invalid; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


# --------------------------------------------------------------------------
# schema

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}
_seed = {"type": "integer", "minimum": 0}

_params = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"base": {"enum": list(BASES)}, "strict": {"type": "boolean"},
                   **{name: _pos for name in PARAM_NAMES},
                   "nu": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                   "gamma_s": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
}

_gain_keys = {"constant": ["ubar"], "backstepping": ["theta", "alpha", "beta_s"], "total_males": ["k"],
              "wild_males": ["lam"]}
_controller = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"enum": list(_gain_keys)},
        "ubar": _nonneg, "theta": _pos, "alpha": _pos, "beta_s": _pos, "k": _nonneg, "lam": _nonneg,
    },
    "allOf": [
        {"if": {"properties": {"type": {"const": kind}}, "required": ["type"]}, "then": {"required": keys}}
        for kind, keys in _gain_keys.items()
    ],
}

_step = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "params": _params,
        "design_params": _params,
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "required": ["controller", "t_final"],
            "properties": {
                "controller": _controller,
                "z0": {"oneOf": [{"const": "persistence"},
                                 {"type": "array", "items": _nonneg, "minItems": 4, "maxItems": 4}]},
                "t_final": _nonneg, "step": _step, "record_stride": _count,
                "positivity_clamp": {"type": "boolean"}, "seed": _seed,
            },
        },
        "comparison": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family", "grid"],
            "properties": {
                "family": {"enum": ["lambda", "theta"]},
                "grid": {"type": "array", "items": _pos, "minItems": 1},
                "alpha": _pos, "beta_s": _pos, "step": _step, "t_max": _pos,
            },
        },
        "robustness": {
            "type": "object",
            "additionalProperties": False,
            "required": ["controller"],
            "properties": {
                "controller": _controller,
                "truth_intervals": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {name: {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}
                                   for name in PARAM_NAMES},
                },
                "n_runs": _count, "ic_box_upper": _nonneg, "t_final": _pos, "step": _step,
                "record_stride": _count, "seed": _seed, "chunk_size": _count,
                "initial": {"enum": ["random", "persistence"]},
            },
        },
        "evidence": {
            "type": "object",
            "additionalProperties": False,
            "required": ["controller"],
            "properties": {
                "controller": _controller, "n_ics": _count, "ic_box_upper": _nonneg, "t_final": _pos,
                "step": _step, "record_stride": _count, "seed": _seed,
            },
        },
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_states": _count, "n_trajectories": _count, "theta": _pos, "alpha": _pos, "beta_s": _pos,
                "k": _pos, "lam": _pos, "t_final": _pos, "step": _step, "seed": _seed,
            },
        },
    },
}


@dataclass(frozen=True)
class RunDocument:
    """Parsed document: the parameters plus the study object for ``kind``.

    ``study`` is a :class:`ScenarioConfig`, a :class:`ComparisonSpec`, a
    ``(RobustnessSpec, controller)`` or ``(EvidenceSpec, controller)`` pair, a
    :class:`CertifySpec`, or None when ``kind`` is None.
    """

    params: ModelParams
    kind: str | None = None
    study: object = None
    schema_version: str = SCHEMA_VERSION


# --------------------------------------------------------------------------
# parsing


def load_document(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML: {exc}"]) from exc
    if doc is None:
        raise ConfigError(["document is empty: 'schema_version' is required"])
    return doc


def _where(err) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<document>"


def validate_document(doc) -> None:
    """Raise :class:`ConfigError` listing every schema violation."""
    if not isinstance(doc, dict):
        raise ConfigError(["document must be a mapping"])
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [f"{_where(e)}: {e.message}" for e in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))]
    studies = [s for s in STUDIES if s in doc]
    if len(studies) > 1:
        errors.append(f"<document>: at most one study block allowed, found {studies}")
    if errors:
        raise ConfigError(errors)


def _build_params(block):
    block = dict(block or {})
    base = BASES[block.pop("base", "table1")]
    strict = block.pop("strict", True)
    return ModelParams(**{**base.as_dict(), **{k: float(v) for k, v in block.items()}}, strict=strict)


def _build_controller(block):
    kind = block["type"]
    gains = [float(block[k]) for k in _gain_keys[kind]]
    return {"constant": Constant, "backstepping": Backstepping, "total_males": LinearTotalMales,
            "wild_males": LinearWildMales}[kind](*gains)


def _pick(block, keys):
    return {k: block[k] for k in keys if k in block}


def parse_document(doc) -> RunDocument:
    """Validate ``doc`` and build the objects it describes."""
    validate_document(doc)
    try:
        return _parse(doc)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def _parse(doc):
    kind = next((s for s in STUDIES if s in doc), None)
    default_base = "comparison" if kind == "comparison" else "table1"
    params = _build_params({"base": default_base, **(doc.get("params") or {})})
    block = doc.get(kind) or {}
    if kind == "scenario":
        design = _build_params(doc["design_params"]) if "design_params" in doc else None
        z0 = block.get("z0", "persistence")
        study = ScenarioConfig(
            params,
            _build_controller(block["controller"]),
            z0 if isinstance(z0, str) else tuple(float(v) for v in z0),
            IntegratorConfig(**_pick(block, ("t_final", "step", "record_stride", "positivity_clamp"))),
            int(block.get("seed", 0)),
            design,
        )
    elif kind == "comparison":
        study = ComparisonSpec(block["family"], tuple(float(g) for g in block["grid"]), params,
                               **_pick(block, ("alpha", "beta_s", "step", "t_max")))
    elif kind == "robustness":
        fields = _pick(block, ("n_runs", "ic_box_upper", "t_final", "step", "record_stride", "seed", "chunk_size",
                               "initial"))
        if "truth_intervals" in block:
            fields["truth_intervals"] = {k: (float(lo), float(hi)) for k, (lo, hi) in block["truth_intervals"].items()}
        study = (RobustnessSpec(design_params=params, **fields), _build_controller(block["controller"]))
    elif kind == "evidence":
        fields = _pick(block, ("n_ics", "ic_box_upper", "t_final", "step", "record_stride", "seed"))
        study = (EvidenceSpec(params=params, **fields), _build_controller(block["controller"]))
    elif kind == "certify":
        study = CertifySpec(**block)
    else:
        study = None
    return RunDocument(params, kind, study, doc["schema_version"])


# --------------------------------------------------------------------------
# emission


def _emit_params(p: ModelParams) -> dict:
    out = {name: float(getattr(p, name)) for name in PARAM_NAMES}
    if not p.strict:
        out["strict"] = False
    return out


def _emit_controller(c) -> dict:
    if isinstance(c, Constant):
        return {"type": "constant", "ubar": float(c.ubar)}
    if isinstance(c, Backstepping):
        return {"type": "backstepping", "theta": float(c.theta), "alpha": float(c.alpha), "beta_s": float(c.beta_s)}
    if isinstance(c, LinearTotalMales):
        return {"type": "total_males", "k": float(c.k)}
    return {"type": "wild_males", "lam": float(c.lam)}


def emit_document(rd: RunDocument) -> dict:
    """Inverse of :func:`parse_document`, with every field spelled out."""
    doc = {"schema_version": rd.schema_version, "params": _emit_params(rd.params)}
    s = rd.study
    if rd.kind == "scenario":
        if s.design is not None:
            doc["design_params"] = _emit_params(s.design)
        cfg = s.integrator
        doc["scenario"] = {
            "controller": _emit_controller(s.controller),
            "z0": s.z0 if isinstance(s.z0, str) else [float(v) for v in s.z0],
            "t_final": float(cfg.t_final), "step": float(cfg.step), "record_stride": int(cfg.record_stride),
            "positivity_clamp": bool(cfg.positivity_clamp), "seed": int(s.seed),
        }
    elif rd.kind == "comparison":
        doc["comparison"] = {"family": s.family, "grid": [float(g) for g in s.grid], "alpha": float(s.alpha),
                             "beta_s": float(s.beta_s), "step": float(s.step), "t_max": float(s.t_max)}
    elif rd.kind == "robustness":
        spec, c = s
        doc["robustness"] = {
            "controller": _emit_controller(c),
            "truth_intervals": {k: [float(lo), float(hi)] for k, (lo, hi) in sorted(spec.truth_intervals.items())},
            "n_runs": spec.n_runs, "ic_box_upper": float(spec.ic_box_upper), "t_final": float(spec.t_final),
            "step": float(spec.step), "record_stride": spec.record_stride, "seed": spec.seed,
            "chunk_size": spec.chunk_size, "initial": spec.initial,
        }
    elif rd.kind == "evidence":
        spec, c = s
        doc["evidence"] = {
            "controller": _emit_controller(c), "n_ics": spec.n_ics, "ic_box_upper": float(spec.ic_box_upper),
            "t_final": float(spec.t_final), "step": float(spec.step), "record_stride": spec.record_stride,
            "seed": spec.seed,
        }
    elif rd.kind == "certify":
        doc["certify"] = dataclasses.asdict(s)
    return doc


def dump_document(rd: RunDocument) -> str:
    return yaml.safe_dump(emit_document(rd), sort_keys=False)


def _preset_run(name) -> RunDocument:
    obj = PRESETS[name]
    if isinstance(obj, ScenarioConfig):
        return RunDocument(obj.params, "scenario", obj)
    if isinstance(obj, ComparisonSpec):
        return RunDocument(obj.params, "comparison", obj)
    spec, c = obj
    if isinstance(spec, RobustnessSpec):
        return RunDocument(spec.design_params, "robustness", obj)
    return RunDocument(spec.params, "evidence", obj)


def preset_document(name: str) -> dict:
    """Document equivalent to a built-in preset."""
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; choose from {sorted(PRESETS)}"])
    return emit_document(_preset_run(name))


# --------------------------------------------------------------------------
# CSV

TRAJECTORY_HEADER = ["t", "E", "M", "F", "Ms", "u"]
TABLE_HEADER = ["gain", "T_days", "cost"]


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """One row per recorded sample; floats in shortest round-trip form."""
    if traj.states.ndim != 2:
        raise ValueError("only single-run trajectories can be written")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for t, z, u in zip(traj.times, traj.states, traj.controls):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in z), repr(float(u))])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: expected header {','.join(TRAJECTORY_HEADER)}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 6)
    return Trajectory(data[:, 0].copy(), data[:, 1:5].copy(), data[:, 5].copy())


def _cell(x):
    return "" if x is None else repr(float(x))


def write_table_csv(path, rows: list[ComparisonRow]) -> None:
    """``gain,T_days,cost``; intervention times at 0.1-day resolution, blank if never reached."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for r in rows:
            w.writerow([_cell(r.gain), _cell(None if r.T_days is None else round(r.T_days, 1)), _cell(r.cost)])


def read_table_csv(path) -> list[ComparisonRow]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TABLE_HEADER:
        raise ValueError(f"{path}: expected header {','.join(TABLE_HEADER)}")
    return [ComparisonRow(*(None if v == "" else float(v) for v in r)) for r in rows[1:]]


def write_columns_csv(path, header, columns) -> None:
    """Plain column-oriented CSV; NaN and infinities are written as ``nan``/``inf``/``-inf``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([v if isinstance(v, str) else repr(float(v)) if not isinstance(v, (bool, np.bool_))
                        else str(bool(v)).lower() for v in row])

