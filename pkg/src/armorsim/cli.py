"""Command-line front end: ``run``, ``sweep``, ``fit`` and ``validate``.

Exit status: 0 simulation completed (a stopped projectile is a completed run),
2 configuration or usage error, 3 solver error, 4 validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, csvio, thin_facing
from .config import RunConfig, builtin_names, load_builtin, load_config
from .errors import ArmorSimError, ConfigError, InsufficientDataError, UnknownMaterialError
from .fabric_backing import OUTCOME_HEADER
from .materials import catalog_lookup
from .pipeline import ScenarioReport, ply_count_sweep, run_scenario, validation_suite, velocity_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4

FACING_THIN_HEADER = ("h_m", "BH", "V0_mps", "Vbl_mps", "Vrc_mps", "dr_m", "mr_kg", "perforated")
ENERGY_HEADER = ("t_us", "impactor_KE_J", "fabric_KE_J", "strain_J", "dissipated_J", "boundary_J",
                 "contact_work_J", "rel_error")

log = logging.getLogger("armorsim")


class UsageError(Exception):
    pass


def _range(text: str, integer: bool):
    """Parse ``start:stop:step`` (stop inclusive) or a comma list."""
    conv = int if integer else float
    try:
        if ":" in text:
            parts = [conv(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            out, k = [], 0
            while True:
                v = start + k * step
                if v > stop + (0 if integer else 1e-9 * abs(step)):
                    break
                out.append(v)
                k += 1
        else:
            out = [conv(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad range {text!r}; use start:stop:step or a comma-separated list") from None
    if not out:
        raise UsageError(f"range {text!r} is empty")
    return out


def assert_seedless():
    """Fail if any loaded package module holds a random-number module."""
    import types

    for name, mod in list(sys.modules.items()):
        if not name.startswith("armorsim") or mod is None:
            continue
        for attr, value in vars(mod).items():
            if isinstance(value, types.ModuleType) and value.__name__ in ("random", "numpy.random", "secrets"):
                raise AssertionError(f"{name}.{attr} links {value.__name__}")


def _load(args) -> RunConfig:
    path = args.config
    if path.startswith("builtin:"):
        rc = load_builtin(path.split(":", 1)[1])
    else:
        rc = load_config(path)
    if args.dt is not None:
        s = rc.scenario.solver
        rc = replace(rc, scenario=replace(rc.scenario, solver=replace(s, jet_dt=args.dt, fabric_dt=args.dt)))
    return rc


def _outdir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_artifacts(report: ScenarioReport, rc: RunConfig, out: Path) -> dict:
    arts = {}
    sel = rc.output
    res = report.facing_result
    if sel.facing_csv:
        if isinstance(res, thin_facing.PerforationResult):
            f = report.scenario.facing
            csvio.write_rows(out / "facing.csv", FACING_THIN_HEADER,
                             [(f.thickness, f.hardness, report.scenario.v0, res.ballistic_limit,
                               res.residual_velocity, res.residual_diameter, res.residual_mass, res.perforated)])
        else:
            res.to_csv(out / "facing.csv")
        arts["facing"] = "facing.csv"
    if sel.normalized_csv and not isinstance(res, thin_facing.PerforationResult):
        res.normalized_to_csv(out / "facing_normalized.csv")
        arts["facing_normalized"] = "facing_normalized.csv"
    b = report.backing
    if b is not None and sel.backing_csv:
        csvio.write_rows(out / "backing.csv", OUTCOME_HEADER, [b.row()],
                         trailer="stopped" if b.stopped else ("perforated" if b.perforated else "inconclusive"))
        csvio.write_rows(out / "energy.csv", ENERGY_HEADER,
                         [(t * 1e6, L.impactor_kinetic, L.fabric_kinetic, L.strain, L.dissipated, L.boundary_work,
                           L.contact_work, L.relative_error) for t, L in b.energy_history])
        arts["backing"] = "backing.csv"
        arts["energy"] = "energy.csv"
    if b is not None and sel.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        names = []
        for i, snap in enumerate(b.snapshots):
            name = f"snapshot_{i:04d}.txt"
            (snap_dir / name).write_text(snap.to_text())
            names.append(f"snapshots/{name}")
        arts["snapshots"] = names
    return arts


def cmd_run(args) -> int:
    rc = _load(args)
    out = _outdir(args)
    report = run_scenario(rc.scenario)
    arts = write_artifacts(report, rc, out)
    text = report.to_json(arts)
    (out / "report.json").write_text(text)
    if args.json:
        Path(args.json).write_text(text)
    for w in report.warnings:
        log.warning(w)
    print(f"{report.scenario.name}: {report.status}, residual velocity {report.residual_velocity:.6g} m/s")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if (args.plies is None) == (args.velocity is None):
        raise UsageError("give exactly one of --plies or --velocity")
    values = _range(args.plies, True) if args.plies is not None else _range(args.velocity, False)
    rc = _load(args)
    out = _outdir(args)
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if args.plies is not None:
        res = ply_count_sweep(rc.scenario, values, workers=workers)
        header = OUTCOME_HEADER + ("status", "error")
        rows = []
        for r in res.rows:
            o = r.outcome
            if o is None:
                rows.append((r.plies, None, None, None, None, None, "error", r.error))
            else:
                status = "stopped" if o.stopped else ("perforated" if o.perforated else "inconclusive")
                rows.append(o.row() + (status, ""))
        trailer = None if res.handoff is None else "handoff " + json.dumps(res.handoff.as_dict())
    else:
        points = velocity_sweep(rc.scenario, values, workers=workers)
        header = ("V0_mps", "status", "facing_P_mm", "handoff_Vr_mps", "handoff_mr_kg", "handoff_dr_m",
                  "Np_star", "Vr_mps", "error")
        rows = []
        for p in points:
            rep = p.report
            if rep is None:
                rows.append((p.value, "error", None, None, None, None, None, None, p.error))
                continue
            fr = rep.facing_result
            depth = None if isinstance(fr, thin_facing.PerforationResult) else fr.final.P * 1e3
            h = rep.handoff
            rows.append((p.value, rep.status, depth, h and h.velocity, h and h.mass, h and h.diameter,
                         rep.backing.perforated_plies if rep.backing else None, rep.residual_velocity, ""))
        trailer = None
    csvio.write_rows(out / "sweep.csv", header, rows, trailer=trailer)
    if args.json:
        Path(args.json).write_text(json.dumps({"header": list(header), "rows": [list(r) for r in rows]},
                                              indent=2) + "\n")
    print(f"{len(rows)} rows written to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        proj = catalog_lookup(args.projectile)
    except UnknownMaterialError as exc:
        raise ConfigError("projectile", str(exc)) from None
    try:
        shots = thin_facing.read_shots(args.shots)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(args.shots), str(exc)) from None
    try:
        fit = thin_facing.fit_factor(shots, proj)
    except InsufficientDataError as exc:
        raise ConfigError(str(args.shots), str(exc)) from None
    rows = thin_facing.fit_report_rows(shots, fit)
    print(f"fitted factor f = {fit.factor:.6g}  ({len(rows)} series, {fit.iterations} golden-section steps)")
    print(f"{'series':>6} {'V0':>8} {'Vr_meas':>8} {'Vrc_calc':>9} {'ratio':>6}")
    for s, v0, vr, vrc, ratio in rows:
        print(f"{s:>6} {v0:>8.1f} {vr:>8.1f} {vrc:>9.1f} {ratio:>6.3f}")
    if args.output_dir:
        out = _outdir(args)
        thin_facing.write_fit_report(out / "fit.csv", shots, fit)
    if args.json:
        Path(args.json).write_text(json.dumps({"factor": fit.factor, "ratios": list(fit.ratios),
                                               "predicted": list(fit.predicted)}, indent=2) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    only = [s.strip() for s in args.only.split(",")] if args.only else None
    try:
        report = validation_suite(only)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for c in report.checks:
        mark = "PASS" if c.passed else ("FAIL" if c.hard else "soft-miss")
        print(f"[{mark:9}] {c.block:14} {c.name}: measured {_short(c.measured)} expected {_short(c.expected)}"
              + (f" tol {c.tolerance}" if c.tolerance is not None else ""))
    if args.json:
        Path(args.json).write_text(report.to_json())
    print("validation " + ("passed" if report.passed else "FAILED"))
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _short(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list) and len(value) > 4:
        return "[" + ", ".join(_short(v) for v in value[:4]) + ", ...]"
    if isinstance(value, list):
        return "[" + ", ".join(_short(v) for v in value) + "]"
    return str(value)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=None, help="directory for artifacts (default: ./out)")
    common.add_argument("--dt", type=float, default=None, help="time step override for all explicit stages (s)")
    common.add_argument("--seedless", action="store_true", help="assert that no random-number module is linked")
    common.add_argument("--json", default=None, metavar="PATH", help="also write machine-readable results here")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="armorsim", description=__doc__.splitlines()[0], parents=[common])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one scenario")
    p.add_argument("config", help="scenario JSON file, or builtin:NAME (" + ", ".join(builtin_names()) + ")")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="ply-count or impact-velocity sweep")
    p.add_argument("config")
    p.add_argument("--plies", help="ply counts, start:stop:step (stop inclusive) or a list")
    p.add_argument("--velocity", help="impact velocities (m/s), start:stop:step or a list")
    p.add_argument("--workers", type=int, default=None, help="parallel runs (default: available cores)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", parents=[common], help="fit the thin-plate perforation factor")
    p.add_argument("shots", help="CSV with columns " + ",".join(thin_facing.SHOT_HEADER))
    p.add_argument("--projectile", default="M16")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", parents=[common], help="run the built-in validation checks")
    p.add_argument("--only", default=None, help="comma-separated blocks to run")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.output_dir is None and args.command in ("run", "sweep"):
        args.output_dir = "out"
    try:
        if args.seedless:
            assert_seedless()
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArmorSimError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
