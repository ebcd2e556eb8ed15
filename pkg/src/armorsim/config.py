"""Versioned JSON scenario documents.

A document has the sections ``projectile``, ``facing``, ``backing``, ``impact``,
``solver`` and ``output`` plus ``version: 1``. Keys carry SI unit suffixes.
Materials can be named from the catalog (``"id"``) with individual fields
overridden, or given inline. Unknown keys and wrong types are rejected with
the key path and, when it can be found, the line in the source text.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .errors import ConfigError, UnknownMaterialError
from .materials import (FabricSpec, ProjectileSpec, StrengthProfile, StressStrainCurve, ThickFacingSpec,
                        ThinFacingSpec, catalog_lookup, kevlar29)
from .pipeline import HandoffOverrides, Scenario, SolverSettings

VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_opt_pos = {"type": ["number", "null"], "exclusiveMinimum": 0}
_bool = {"type": "boolean"}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "version": {"const": VERSION},
    "name": {"type": "string"},
    "projectile": _obj({
        "id": {"type": "string"}, "name": {"type": "string"},
        "mass_kg": _pos, "diameter_m": _pos, "length_m": _pos, "radius_m": _pos, "density_kgm3": _pos,
        "yield_Pa": _pos, "dynamic_Pa": _pos, "perforation_factor": _opt_pos, "residual_diameter_ratio": _pos,
    }),
    "facing": _obj({
        "kind": {"enum": ["thin", "thick"]},
        "h_m": _opt_pos, "BH": _pos, "mass_retention": _pos, "perforation_factor": _opt_pos,
        "id": {"type": "string"}, "name": {"type": "string"}, "density_kgm3": _pos,
        "profile": _obj({
            "kind": {"enum": ["constant", "linear-ramp"]},
            "yield_Pa": _pos, "dynamic_Pa": _pos, "yield_terminal_Pa": _opt_pos,
            "dynamic_terminal_Pa": _opt_pos, "ramp_depth_m": _opt_pos,
        }, required=("kind", "yield_Pa", "dynamic_Pa")),
    }, required=("kind",)),
    "backing": {"oneOf": [{"type": "null"}, _obj({
        "id": {"type": "string"}, "name": {"type": "string"},
        "plies": {"type": "integer", "minimum": 0, "maximum": 200},
        "areal_density_kgm2": {"type": "number", "minimum": 0},
        "E_t_Pa": _pos,
        "curve": _obj({"strains": {"type": "array", "items": _num, "minItems": 2},
                       "stresses_Pa": {"type": "array", "items": _num, "minItems": 2}},
                      required=("strains", "stresses_Pa")),
        "sigma_t_lim_Pa": _pos, "E_s_Pa": _pos, "sigma_s_lim_Pa": _pos, "E_z_Pa": _pos,
        "sigma_z_lim_Pa": _pos, "h_a_m": _opt_pos, "ply_density_kgm3": _pos,
    })]},
    "impact": _obj({
        "V0_mps": _pos,
        "handoff_override": _obj({"Vr_mps": {"type": ["number", "null"], "minimum": 0},
                                  "mr_kg": _opt_pos, "dr_m": _opt_pos}),
    }, required=("V0_mps",)),
    "solver": _obj({
        "jet_dt_s": _pos, "jet_t_max_s": _pos, "record_every": {"type": "integer", "minimum": 1},
        "warm_start": _bool, "lambda_variant": {"enum": ["geometric", "mirrored"]},
        "rtol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "max_iter": {"type": "integer", "minimum": 1}, "handoff_on_breakdown": _bool,
        "fabric_dt_s": _opt_pos, "fabric_t_max_s": _pos, "n_r": {"type": "integer", "minimum": 50},
        "R_max_m": _opt_pos, "snapshot_every_s": _opt_pos,
    }),
    "output": _obj({"facing_csv": _bool, "normalized_csv": _bool, "backing_csv": _bool, "snapshots": _bool}),
}, required=("version", "projectile", "facing", "impact"))


@dataclass(frozen=True)
class OutputSelection:
    facing_csv: bool = True
    normalized_csv: bool = False
    backing_csv: bool = True
    snapshots: bool = True


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    output: OutputSelection = field(default_factory=OutputSelection)


# ---------------------------------------------------------------------------
# locating keys in the source text

def _dotted(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def locate_line(text: str | None, path) -> int | None:
    """Best-effort 1-based line of the last key of ``path`` in JSON ``text``."""
    if not text:
        return None
    pos = 0
    found = None
    for p in path:
        if isinstance(p, int):
            continue
        k = text.find(json.dumps(p), pos)
        if k < 0:
            return found
        pos = k + 1
        found = text.count("\n", 0, k) + 1
    return found


def _fail(text, path, message):
    raise ConfigError(_dotted(path), message, locate_line(text, path))


# ---------------------------------------------------------------------------
# document -> objects

def parse_config(doc: dict, text: str | None = None) -> RunConfig:
    """Validate ``doc`` and build the scenario; ``text`` only improves diagnostics."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            path = path + extra[:1]
            _fail(text, path, f"unknown key {extra[0]!r}" if extra else err.message)
        if err.validator == "oneOf" and isinstance(err.instance, dict):
            # report the inner object error rather than the union failure
            inner = sorted(jsonschema.Draft202012Validator(SCHEMA["properties"]["backing"]["oneOf"][1])
                           .iter_errors(err.instance), key=lambda e: len(e.absolute_path))
            if inner:
                e2 = inner[0]
                p2 = path + list(e2.absolute_path)
                if e2.validator == "additionalProperties":
                    extra = sorted(set(e2.instance) - set(e2.schema.get("properties", {})))
                    _fail(text, p2 + extra[:1], f"unknown key {extra[0]!r}")
                _fail(text, p2, e2.message)
        _fail(text, path, err.message)
    try:
        proj = _projectile(doc["projectile"], text)
        facing, retention, factor = _facing(doc["facing"], text)
        backing = _backing(doc.get("backing"), text)
        impact = doc["impact"]
        ov = impact.get("handoff_override", {})
        overrides = HandoffOverrides(ov.get("Vr_mps"), ov.get("mr_kg"), ov.get("dr_m"))
        solver = _solver(doc.get("solver", {}))
        scenario = Scenario(projectile=proj, facing=facing, v0=float(impact["V0_mps"]), backing=backing,
                            name=doc.get("name", "scenario"), mass_retention=retention,
                            perforation_factor=factor, overrides=overrides, solver=solver)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError("", str(exc)) from exc
    out = OutputSelection(**doc.get("output", {}))
    return RunConfig(scenario, out)


def _projectile(d, text):
    fields = {"name": "name", "mass_kg": "mass", "diameter_m": "diameter", "length_m": "length",
              "radius_m": "radius", "density_kgm3": "density", "yield_Pa": "yield_strength",
              "dynamic_Pa": "dynamic_strength", "perforation_factor": "perforation_factor",
              "residual_diameter_ratio": "residual_diameter_ratio"}
    given = {fields[k]: v for k, v in d.items() if k in fields}
    if "id" in d:
        try:
            base = catalog_lookup(d["id"])
        except UnknownMaterialError as exc:
            _fail(text, ["projectile", "id"], str(exc))
        if not isinstance(base, ProjectileSpec):
            _fail(text, ["projectile", "id"], f"{d['id']!r} is not a projectile")
        return replace(base, **given)
    for key in ("mass_kg", "diameter_m", "length_m", "yield_Pa", "dynamic_Pa"):
        if key not in d:
            _fail(text, ["projectile"], f"inline projectile needs {key!r} (or give an 'id')")
    given.setdefault("name", "inline")
    given.setdefault("radius", 0.5 * given["diameter"])
    given.setdefault("density", given["mass"] / (math.pi * given["radius"] ** 2 * given["length"]))
    return ProjectileSpec(**given)


def _facing(d, text):
    if d["kind"] == "thin":
        extra = [k for k in d if k not in ("kind", "h_m", "BH", "mass_retention", "perforation_factor")]
        if extra:
            _fail(text, ["facing", extra[0]], f"key {extra[0]!r} does not apply to a thin facing")
        for key in ("h_m", "BH"):
            if d.get(key) is None:
                _fail(text, ["facing"], f"thin facing needs {key!r}")
        return ThinFacingSpec(d["h_m"], d["BH"]), float(d.get("mass_retention", 1.0)), d.get("perforation_factor")
    extra = [k for k in d if k in ("BH", "mass_retention", "perforation_factor")]
    if extra:
        _fail(text, ["facing", extra[0]], f"key {extra[0]!r} does not apply to a thick facing")
    if "id" in d:
        try:
            base = catalog_lookup(d["id"])
        except UnknownMaterialError as exc:
            _fail(text, ["facing", "id"], str(exc))
        if not isinstance(base, ThickFacingSpec):
            _fail(text, ["facing", "id"], f"{d['id']!r} is not a thick facing")
    else:
        for key in ("density_kgm3", "profile"):
            if key not in d:
                _fail(text, ["facing"], f"inline thick facing needs {key!r} (or give an 'id')")
        base = None
    changes = {}
    if "name" in d:
        changes["name"] = d["name"]
    if "density_kgm3" in d:
        changes["density"] = d["density_kgm3"]
    if "profile" in d:
        p = d["profile"]
        if p["kind"] == "constant":
            changes["profile"] = StrengthProfile.constant(p["yield_Pa"], p["dynamic_Pa"])
        else:
            for key in ("yield_terminal_Pa", "dynamic_terminal_Pa", "ramp_depth_m"):
                if p.get(key) is None:
                    _fail(text, ["facing", "profile"], f"linear-ramp profile needs {key!r}")
            changes["profile"] = StrengthProfile.linear_ramp(p["yield_Pa"], p["dynamic_Pa"], p["yield_terminal_Pa"],
                                                             p["dynamic_terminal_Pa"], p["ramp_depth_m"])
    if "h_m" in d:
        changes["thickness"] = math.inf if d["h_m"] is None else d["h_m"]
    if base is None:
        facing = ThickFacingSpec(name=changes.pop("name", "inline"), density=changes.pop("density"),
                                 profile=changes.pop("profile"), **changes)
    else:
        facing = replace(base, **changes)
    return facing, 1.0, None


def _backing(d, text):
    if d is None:
        return None
    if "id" in d:
        if d["id"] != "kevlar29":
            _fail(text, ["backing", "id"], f"unknown backing {d['id']!r}; available: kevlar29")
        base = kevlar29(d.get("plies", 40))
    else:
        for key in ("plies", "areal_density_kgm2", "sigma_t_lim_Pa", "E_s_Pa", "sigma_s_lim_Pa", "E_z_Pa",
                    "sigma_z_lim_Pa"):
            if key not in d:
                _fail(text, ["backing"], f"inline backing needs {key!r} (or give an 'id')")
        if "curve" not in d and "E_t_Pa" not in d:
            _fail(text, ["backing"], "inline backing needs 'curve' or 'E_t_Pa'")
        base = None
    if "curve" in d and "E_t_Pa" in d:
        _fail(text, ["backing", "E_t_Pa"], "give either 'curve' or 'E_t_Pa', not both")
    mapping = {"name": "name", "plies": "plies", "areal_density_kgm2": "areal_density",
               "sigma_t_lim_Pa": "tensile_limit", "E_s_Pa": "shear_modulus", "sigma_s_lim_Pa": "shear_limit",
               "E_z_Pa": "normal_modulus", "sigma_z_lim_Pa": "normal_limit", "h_a_m": "adhesive_thickness",
               "ply_density_kgm3": "ply_density"}
    changes = {mapping[k]: v for k, v in d.items() if k in mapping}
    if "curve" in d:
        c = d["curve"]
        try:
            changes["curve"] = StressStrainCurve(tuple(c["strains"]), tuple(c["stresses_Pa"]))
        except ValueError as exc:
            _fail(text, ["backing", "curve"], str(exc))
    elif "E_t_Pa" in d:
        strain_end = base.curve.strains[-1] if base is not None else 1.0
        changes["curve"] = StressStrainCurve.linear(d["E_t_Pa"], strain_end)
    if base is None:
        changes.setdefault("name", "fabric")
        return FabricSpec(**changes)
    return replace(base, **changes)


def _solver(d):
    mapping = {"jet_dt_s": "jet_dt", "jet_t_max_s": "jet_t_max", "record_every": "record_every",
               "warm_start": "warm_start", "lambda_variant": "lambda_variant", "rtol": "rtol",
               "max_iter": "max_iter", "handoff_on_breakdown": "handoff_on_breakdown",
               "fabric_dt_s": "fabric_dt", "fabric_t_max_s": "fabric_t_max", "n_r": "n_r",
               "R_max_m": "r_max", "snapshot_every_s": "snapshot_every"}
    return SolverSettings(**{mapping[k]: v for k, v in d.items()})


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg}", exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be an object")
    return parse_config(doc, text)


def load_builtin(name: str) -> RunConfig:
    """Load a bundled scenario document by file stem (see ``builtin_names``)."""
    from importlib import resources

    ref = resources.files("armorsim") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise ConfigError("", f"no built-in scenario {name!r}; available: {', '.join(builtin_names())}")
    text = ref.read_text()
    return parse_config(json.loads(text), text)


def builtin_names() -> tuple[str, ...]:
    from importlib import resources

    root = resources.files("armorsim") / "scenarios"
    return tuple(sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json")))


# ---------------------------------------------------------------------------
# objects -> document

def _num_or_none(x):
    return None if x is None or (isinstance(x, float) and math.isinf(x)) else x


def scenario_to_config(s: Scenario, output: OutputSelection | None = None) -> dict:
    """Fully inline document that parses back to an equal scenario."""
    p = s.projectile
    doc = {"version": VERSION, "name": s.name}
    doc["projectile"] = {
        "name": p.name, "mass_kg": p.mass, "diameter_m": p.diameter, "length_m": p.length, "radius_m": p.radius,
        "density_kgm3": p.density, "yield_Pa": p.yield_strength, "dynamic_Pa": p.dynamic_strength,
        "perforation_factor": p.perforation_factor, "residual_diameter_ratio": p.residual_diameter_ratio,
    }
    f = s.facing
    if isinstance(f, ThinFacingSpec):
        doc["facing"] = {"kind": "thin", "h_m": f.thickness, "BH": f.hardness, "mass_retention": s.mass_retention,
                         "perforation_factor": s.perforation_factor}
    else:
        pr = f.profile
        prof = {"kind": pr.kind.value, "yield_Pa": pr.yield_surface, "dynamic_Pa": pr.dynamic_surface}
        if pr.kind.value == "linear-ramp":
            prof.update(yield_terminal_Pa=pr.yield_terminal, dynamic_terminal_Pa=pr.dynamic_terminal,
                        ramp_depth_m=pr.ramp_depth)
        doc["facing"] = {"kind": "thick", "name": f.name, "density_kgm3": f.density, "profile": prof,
                         "h_m": _num_or_none(f.thickness)}
    b = s.backing
    if b is None:
        doc["backing"] = None
    else:
        doc["backing"] = {
            "name": b.name, "plies": b.plies, "areal_density_kgm2": b.areal_density,
            "curve": {"strains": list(b.curve.strains), "stresses_Pa": list(b.curve.stresses)},
            "sigma_t_lim_Pa": b.tensile_limit, "E_s_Pa": b.shear_modulus, "sigma_s_lim_Pa": b.shear_limit,
            "E_z_Pa": b.normal_modulus, "sigma_z_lim_Pa": b.normal_limit, "h_a_m": b.adhesive_thickness,
            "ply_density_kgm3": b.ply_density,
        }
    ov = s.overrides
    doc["impact"] = {"V0_mps": s.v0,
                     "handoff_override": {"Vr_mps": ov.velocity, "mr_kg": ov.mass, "dr_m": ov.diameter}}
    sv = s.solver
    doc["solver"] = {
        "jet_dt_s": sv.jet_dt, "jet_t_max_s": sv.jet_t_max, "record_every": sv.record_every,
        "warm_start": sv.warm_start, "lambda_variant": sv.lambda_variant.value, "rtol": sv.rtol,
        "max_iter": sv.max_iter, "handoff_on_breakdown": sv.handoff_on_breakdown, "fabric_dt_s": sv.fabric_dt,
        "fabric_t_max_s": sv.fabric_t_max, "n_r": sv.n_r, "R_max_m": sv.r_max,
        "snapshot_every_s": sv.snapshot_every,
    }
    if output is not None:
        doc["output"] = {"facing_csv": output.facing_csv, "normalized_csv": output.normalized_csv,
                         "backing_csv": output.backing_csv, "snapshots": output.snapshots}
    return doc
