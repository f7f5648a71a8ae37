"""``bubble`` command line: build, verify, evolve, classify and sweep clusters.

Exit codes
----------
== ==========================================================
0  success
1  catalogue sweep: at least one row failed
2  malformed input: JSON syntax, schema violation, mesh format, missing file
3  configuration rejected by the catalogue constructor
4  flow did not converge (outputs are still written)
5  mesh degeneracy (flipped or zero-area triangles)
6  verify: stationarity residual above tolerance
7  verify: junction dihedral angles off 120 degrees
8  verify: Heintze-Karcher gap above tolerance (single region)
9  classify: cluster unclassified, non-convex or unsupported
== ==========================================================
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from .catalogue import (
    ConfigurationSpec, build, characteristic_radius, lined_up_middle_volume, solve_double_bubble_radius,
)
from .classify import Classification, classify, expected_configuration
from .errors import (
    BranchAmbiguity, BubbleError, ConvexityViolation, MeshDegeneracy, MeshError, NonConvergence,
    NonConvexInput, CurvatureUnavailable, SpecError, UnsupportedK, VolumeOutOfRange,
)
from .flow import FlowParams, evolve, jitter, trace_csv
from .geometry import Cluster, compute_volume, tolerance_profile
from .meshio import MeshFormatError, obj_text, off_text, read_off
from .variation import fit_multipliers, heintze_karcher_check

log = logging.getLogger("bubblecluster")

FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_SWEEP_FAILED = 1
EXIT_INPUT = 2
EXIT_CONSTRUCTOR = 3
EXIT_NONCONVERGENCE = 4
EXIT_DEGENERATE = 5
EXIT_RESIDUAL = 6
EXIT_ANGLES = 7
EXIT_HEINTZE_KARCHER = 8
EXIT_UNCLASSIFIED = 9

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class InputError(Exception):
    """Bad input file: syntax, schema or format.  Maps to exit code 2."""


# ---------------------------------------------------------------------------
# JSON helpers


def load_schema(name: str) -> dict:
    text = resources.files("bubblecluster").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def validate(data, schema_name: str, what: str) -> None:
    try:
        jsonschema.validate(data, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{what}: schema violation at {where}: {exc.message}") from None


def read_json(path: Path, schema_name: str, what: str):
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8 (byte offset {exc.start})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise InputError(f"{path}: invalid JSON at byte offset {offset} "
                         f"(line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    validate(data, schema_name, str(path))
    return data


def dump_json(data) -> str:
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, data, schema_name: str) -> None:
    try:
        jsonschema.validate(data, load_schema(schema_name))
    except jsonschema.ValidationError as exc:  # an invalid output is a bug, not user error
        raise RuntimeError(f"output {path.name} violates its schema: {exc.message}") from exc
    path.write_text(dump_json(data), encoding="utf-8")


def _finite(x):
    """JSON has no inf/nan; map them to None."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    command: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    payload: dict | None = None
    tolerance_profile: str = "default"
    seed: int | None = None
    exit_code: int = 0
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "command": self.command,
            "inputs": dict(self.inputs),
            "outputs": dict(self.outputs),
            "payload": self.payload,
            "tolerance_profile": self.tolerance_profile,
            "seed": self.seed,
            "exit_code": self.exit_code,
        }

    def write(self, out: Path) -> None:
        self.outputs.setdefault("manifest", "manifest.json")
        write_json(out / "manifest.json", self.to_dict(), "manifest")


# ---------------------------------------------------------------------------
# commands


def _load_spec(path: Path, seed: int | None) -> tuple[ConfigurationSpec, dict]:
    data = read_json(path, "config_spec", "configuration")
    if seed is not None:
        data["seed"] = seed
    return ConfigurationSpec.from_dict(data), data


def _write_mesh(out: Path, stem: str, mesh, manifest: RunManifest) -> None:
    (out / f"{stem}.off").write_text(off_text(mesh), encoding="ascii")
    (out / f"{stem}.obj").write_text(obj_text(mesh), encoding="ascii")
    manifest.outputs[f"{stem}_off"] = f"{stem}.off"
    manifest.outputs[f"{stem}_obj"] = f"{stem}.obj"


def _build_report(cluster: Cluster, spec: ConfigurationSpec) -> dict:
    meta = cluster.metadata
    params = {k: v for k, v in meta.items() if k not in ("kind", "seed", "resolution", "branch", "achieved_volumes")}
    achieved = [float(v) for v in meta["achieved_volumes"]]
    return _finite({
        "format_version": FORMAT_VERSION,
        "spec": spec.to_dict(),
        "branch": meta.get("branch"),
        "target_volumes": list(cluster.target_volumes),
        "achieved_volumes": achieved,
        "volume_errors": [(a - t) / t for a, t in zip(achieved, cluster.target_volumes)],
        "n_vertices": cluster.mesh.n_vertices,
        "n_faces": cluster.mesh.n_faces,
        "parameters": params,
    })


def cmd_build(args, out: Path, manifest: RunManifest) -> int:
    spec_path = Path(args.spec)
    manifest.inputs["spec"] = str(spec_path)
    spec, payload = _load_spec(spec_path, args.seed)
    manifest.payload = payload
    manifest.seed = spec.seed
    cluster = build(spec)
    _write_mesh(out, "mesh", cluster.mesh, manifest)
    write_json(out / "build_report.json", _build_report(cluster, spec), "build_report")
    manifest.outputs["report"] = "build_report.json"
    print(f"built {spec.kind.value}: {cluster.mesh.n_vertices} vertices, {cluster.mesh.n_faces} faces, "
          f"branch {cluster.metadata.get('branch')}")
    return EXIT_OK


def _mesh_cluster(path: Path, profile, targets=None) -> Cluster:
    try:
        mesh = read_off(path)
    except MeshFormatError as exc:
        raise InputError(f"{path}: {exc}") from None
    k = mesh.k
    if targets is None:
        targets = [abs(compute_volume(mesh, i)) or 1.0 for i in range(1, k + 1)]
    elif len(targets) != k:
        raise InputError(f"{len(targets)} target volumes given for a mesh with {k} regions")
    return Cluster(mesh, targets, profile, {"source": str(path)})


def verify_cluster(cluster: Cluster) -> dict:
    """Stationarity report with pass/fail per check and the exit code of the first failure."""
    tol = cluster.scaled_tolerances()
    report = fit_multipliers(cluster)
    medians = report.junction_medians()
    hk = None
    checks = {"residual": report.residual_rel <= tol.residual_rel,
              "junction_angles": all(abs(m - 120.0) <= tol.angle_deg for m in medians)}
    if cluster.k == 1:
        try:
            res = heintze_karcher_check(cluster.mesh, 1)
            hk = {"lhs": res.lhs, "rhs": res.rhs, "gap_rel": res.gap_rel,
                  "excluded_area_fraction": res.excluded_area_fraction}
            checks["heintze_karcher"] = abs(res.gap_rel) <= tol.residual_rel
        except (NonConvexInput, CurvatureUnavailable) as exc:
            hk = {"error": str(exc)}
            checks["heintze_karcher"] = False
    codes = {"residual": EXIT_RESIDUAL, "junction_angles": EXIT_ANGLES, "heintze_karcher": EXIT_HEINTZE_KARCHER}
    first = next((name for name, ok in checks.items() if not ok), None)
    return _finite({
        "format_version": FORMAT_VERSION,
        "mesh": str(cluster.metadata.get("source", "")),
        "k": cluster.k,
        "volumes": [float(v) for v in cluster.volumes()],
        "tolerances": tol.to_dict(),
        "variation": report.to_dict(),
        "heintze_karcher": hk,
        "checks": checks,
        "first_failure": first,
        "exit_code": codes[first] if first else EXIT_OK,
    })


def cmd_verify(args, out: Path, manifest: RunManifest) -> int:
    path = Path(args.mesh)
    manifest.inputs["mesh"] = str(path)
    cluster = _mesh_cluster(path, tolerance_profile(args.tolerance_profile))
    try:
        cluster.mesh.validate()
    except MeshError as exc:
        raise MeshDegeneracy(f"{path}: {exc}") from None
    report = verify_cluster(cluster)
    write_json(out / "verify_report.json", report, "verify_report")
    manifest.outputs["report"] = "verify_report.json"
    var = report["variation"]
    print(f"residual_rel {var['residual_rel']:.4g}; lambdas {[round(x, 6) for x in var['lambdas']]}; "
          f"first failure: {report['first_failure'] or 'none'}")
    return report["exit_code"]


def _load_input_cluster(path: Path, args, manifest: RunManifest, targets=None) -> Cluster:
    profile = tolerance_profile(args.tolerance_profile)
    if path.suffix.lower() == ".json":
        spec, payload = _load_spec(path, args.seed)
        manifest.payload = {"spec": payload}
        cluster = build(spec)
        cluster.tolerance_profile = profile
        if targets is not None:
            cluster.target_volumes = [float(v) for v in targets]
        return cluster
    cluster = _mesh_cluster(path, profile, targets)
    manifest.payload = {}
    return cluster


def _classification_dict(result: Classification) -> dict:
    return _finite(result.to_dict())


def _classify_or_error(cluster: Cluster) -> tuple[dict, int]:
    try:
        result = classify(cluster)
    except (ConvexityViolation, UnsupportedK) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}, EXIT_UNCLASSIFIED
    return _classification_dict(result), (EXIT_OK if result.ok else EXIT_UNCLASSIFIED)


def _write_classification(out: Path, classification: dict, manifest: RunManifest) -> None:
    path = out / "classification.json"
    if "error" in classification:  # refused input: a one-key record, no schema
        path.write_text(dump_json(classification), encoding="utf-8")
    else:
        write_json(path, classification, "classification")
    manifest.outputs["classification"] = "classification.json"


def cmd_evolve(args, out: Path, manifest: RunManifest) -> int:
    src = Path(args.input)
    manifest.inputs["input"] = str(src)
    params_data = {}
    if args.params:
        manifest.inputs["params"] = str(args.params)
        params_data = read_json(Path(args.params), "evolve_params", "flow parameters")
    flow_data = dict(params_data.get("flow", {}))
    if args.seed is not None:
        flow_data["seed"] = args.seed
    params = FlowParams.from_dict(flow_data)
    cluster = _load_input_cluster(src, args, manifest, params_data.get("target_volumes"))
    manifest.payload = {**(manifest.payload or {}), "params": params_data}
    manifest.seed = params.seed
    perturbation = params_data.get("perturbation")
    if perturbation and perturbation["amplitude_rel"] > 0:
        cluster = jitter(cluster, perturbation["amplitude_rel"], seed=params.seed)
    result = evolve(cluster, params)
    final = result.cluster
    _write_mesh(out, "final", final.mesh, manifest)
    (out / "trace.csv").write_text(trace_csv(result.trace, final.k), encoding="utf-8")
    manifest.outputs["trace"] = "trace.csv"
    classification, class_code = _classify_or_error(final)
    _write_classification(out, classification, manifest)
    code = EXIT_OK if result.converged else EXIT_NONCONVERGENCE
    if code == EXIT_OK and class_code != EXIT_OK:
        code = class_code
    report = _finite({
        "format_version": FORMAT_VERSION,
        "params": params.to_dict(),
        "perturbation": perturbation,
        "target_volumes": list(final.target_volumes),
        "steps": result.steps,
        "best_step": result.best_step,
        "converged": result.converged,
        "initial_residual_rel": result.trace[0].residual_rel,
        "final_residual_rel": result.final_residual,
        "final_volume_errors": [float(e) for e in final.volume_errors()],
        "message": result.message,
        "classification": classification,
        "exit_code": code,
    })
    write_json(out / "evolve_report.json", report, "evolve_report")
    manifest.outputs["report"] = "evolve_report.json"
    print(f"{result.steps} steps; residual_rel {result.trace[0].residual_rel:.4g} -> {result.final_residual:.4g}; "
          f"converged={result.converged}; configuration {classification.get('configuration', classification.get('error'))}")
    if not result.converged:
        log.warning("flow did not converge: %s", result.message)
    return code


def cmd_classify(args, out: Path, manifest: RunManifest) -> int:
    src = Path(args.input)
    manifest.inputs["input"] = str(src)
    cluster = _load_input_cluster(src, args, manifest)
    classification, code = _classify_or_error(cluster)
    _write_classification(out, classification, manifest)
    if "error" in classification:
        print(classification["error"])
    else:
        print(f"case {classification['case_label']}: {classification['configuration']}"
              + (f" ({classification['branch']})" if classification["branch"] else "")
              + (f"; failed {classification['failed']}" if classification["failed"] else ""))
    return code


# ---------------------------------------------------------------------------
# sweep

SWEEP_COLUMNS = [
    "kind", "volumes", "resolution", "branch", "status", "residual_rel", "residual_tol", "lambda_spread",
    "angle_median_min", "angle_median_max", "volume_err_max", "case_label", "configuration", "expected", "passed",
    "error",
]

DEFAULT_SCALES = (0.5, 1.0, 2.0)
DEFAULT_RESOLUTIONS_REL = (1.0 / 10.0, 1.0 / 15.0)


def default_grid() -> dict:
    """Every catalogue kind at three volume scales and two relative resolutions.

    Disjoint balls cycle through one, two and three unequal balls, and the
    lined-up triple cycles through its three branches, so each scale adds a
    different shape rather than only a rescaled copy.
    """
    res = list(DEFAULT_RESOLUTIONS_REL)
    s0, s1, s2 = DEFAULT_SCALES
    entries = [
        {"kind": "disjoint_balls", "volumes": [[s0]], "resolutions_rel": res},
        {"kind": "disjoint_balls", "volumes": [[s1, 2 * s1]], "resolutions_rel": res},
        {"kind": "disjoint_balls", "volumes": [[s2, 2 * s2, 0.5 * s2]], "resolutions_rel": res},
        {"kind": "standard_double_bubble", "volumes": [[s, s] for s in DEFAULT_SCALES], "resolutions_rel": res},
        {"kind": "ball_plus_double_bubble", "volumes": [[s, s, s] for s in DEFAULT_SCALES],
         "resolutions_rel": res, "placement": {"tangent": True}},
        {"kind": "standard_triple", "volumes": [[s, s, s] for s in DEFAULT_SCALES], "resolutions_rel": res},
    ]
    for s, branch in zip(DEFAULT_SCALES, ("non_parallel", "point_contact", "parallel")):
        r = solve_double_bubble_radius(s)
        mid = lined_up_middle_volume(r, math.pi / 3)
        entries.append({"kind": "lined_up_triple", "volumes": [[s, mid, s]], "resolutions_rel": res,
                        "placement": {"branch": branch}})
    return {"format_version": FORMAT_VERSION, "entries": entries}


def expand_grid(grid: dict) -> list[dict]:
    rows = []
    for entry in grid.get("entries", []):
        for volumes in entry["volumes"]:
            for rel in entry.get("resolutions_rel", list(DEFAULT_RESOLUTIONS_REL)):
                rows.append({"kind": entry["kind"], "volumes": list(volumes), "resolution_rel": rel,
                             "placement": dict(entry.get("placement", {}))})
    return rows


def sweep_row(row: dict, profile_name: str, seed: int = 0) -> dict:
    out = {c: "" for c in SWEEP_COLUMNS}
    out.update(kind=row["kind"], volumes=" ".join(repr(float(v)) for v in row["volumes"]))
    try:
        radius = characteristic_radius(row["kind"], row["volumes"])
    except (ValueError, BubbleError) as exc:
        out.update(status="error", passed="false", error=f"{type(exc).__name__}: {exc}")
        return out
    h = row["resolution_rel"] * radius
    out["resolution"] = repr(h)
    spec = {"kind": row["kind"], "volumes": row["volumes"], "resolution": h, "seed": seed}
    if row["placement"]:
        spec["placement"] = row["placement"]
    try:
        cluster = build(spec)
    except (BubbleError, ValueError) as exc:
        out.update(status="error", passed="false", error=f"{type(exc).__name__}: {exc}")
        return out
    cluster.tolerance_profile = tolerance_profile(profile_name)
    tol = cluster.scaled_tolerances()
    report = verify_cluster(cluster)
    var = report["variation"]
    medians = [p["median"] for j in var["junctions"].values() for p in j["pairs"].values()]
    expected = expected_configuration(row["kind"], cluster.k).value
    try:
        result = classify(cluster)
        configuration, case, spread = result.configuration.value, result.case_label, result.lambda_spread
        failed = result.failed
    except (ConvexityViolation, UnsupportedK) as exc:
        configuration, case, spread, failed = "Unclassified", "", float("nan"), [str(exc)]
    vol_err = max(abs(e) for e in cluster.volume_errors())
    ok = (report["exit_code"] == EXIT_OK and configuration == expected and vol_err <= tol.volume_rel)
    out.update(
        branch=cluster.metadata.get("branch") or "",
        status="ok" if ok else "failed",
        residual_rel=repr(var["residual_rel"]),
        residual_tol=repr(tol.residual_rel),
        lambda_spread=repr(spread),
        angle_median_min=repr(min(medians)) if medians else "",
        angle_median_max=repr(max(medians)) if medians else "",
        volume_err_max=repr(vol_err),
        case_label=str(case),
        configuration=configuration,
        expected=expected,
        passed="true" if ok else "false",
        error="; ".join(failed + ([report["first_failure"]] if report["first_failure"] else [])),
    )
    return out


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def cmd_sweep(args, out: Path, manifest: RunManifest) -> int:
    if args.grid:
        manifest.inputs["grid"] = str(args.grid)
        grid = read_json(Path(args.grid), "sweep_grid", "sweep grid")
    else:
        grid = default_grid()
    manifest.payload = grid
    seed = args.seed or 0
    manifest.seed = seed
    rows = []
    for n, row in enumerate(expand_grid(grid)):
        result = sweep_row(row, args.tolerance_profile, seed)
        log.info("row %d %s %s: %s", n, result["kind"], result["volumes"], result["status"])
        rows.append(result)
    (out / "sweep.csv").write_text(sweep_csv(rows), encoding="utf-8")
    manifest.outputs["table"] = "sweep.csv"
    failed = [r for r in rows if r["passed"] != "true"]
    print(f"{len(rows)} rows, {len(failed)} failed")
    return EXIT_SWEEP_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tolerance-profile", default="default", choices=["default", "strict", "loose"])
    common.add_argument("--seed", type=int, default=None, help="overrides the seed in the input files")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    parser = argparse.ArgumentParser(prog="bubble", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("build", parents=[common], help="mesh a catalogue configuration")
    p.add_argument("spec", help="configuration JSON")
    p = sub.add_parser("verify", parents=[common], help="stationarity report for a labeled OFF mesh")
    p.add_argument("mesh", help="labeled OFF mesh")
    p = sub.add_parser("evolve", parents=[common], help="run the volume-preserving area flow, then classify")
    p.add_argument("input", help="configuration JSON or labeled OFF mesh")
    p.add_argument("params", nargs="?", help="flow parameter JSON")
    p = sub.add_parser("classify", parents=[common], help="classify a configuration JSON or OFF mesh")
    p.add_argument("input", help="configuration JSON or labeled OFF mesh")
    p = sub.add_parser("sweep", parents=[common], help="build, verify and classify a grid of configurations")
    p.add_argument("grid", nargs="?", help="grid JSON (default: built-in grid)")
    return parser


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "evolve": cmd_evolve, "classify": cmd_classify,
            "sweep": cmd_sweep}
MANIFEST_NAMES = {"sweep": "catalogue-sweep"}


def _setup_logging() -> None:
    name = os.environ.get("BUBBLE_LOG", "warn").lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    if name not in LOG_LEVELS:
        log.warning("BUBBLE_LOG=%r not recognized; using warn", name)


def _input_paths(args) -> list[str]:
    return [p for p in (getattr(args, a, None) for a in ("spec", "mesh", "input", "params", "grid")) if p]


def main(argv=None) -> int:
    _setup_logging()
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    out = Path(args.out)
    manifest = RunManifest(MANIFEST_NAMES.get(args.command, args.command), tolerance_profile=args.tolerance_profile,
                           seed=args.seed)
    missing = [p for p in _input_paths(args) if not Path(p).is_file()]
    if missing:
        print(f"error: input file not found: {missing[0]}", file=sys.stderr)
        return EXIT_INPUT
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](args, out, manifest)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except MeshDegeneracy as exc:
        print(f"error: degenerate mesh: {exc}", file=sys.stderr)
        code = EXIT_DEGENERATE
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_NONCONVERGENCE
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_DEGENERATE
    except (SpecError, VolumeOutOfRange, BranchAmbiguity, BubbleError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_CONSTRUCTOR
    manifest.exit_code = code
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
