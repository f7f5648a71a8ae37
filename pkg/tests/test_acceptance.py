"""One test per acceptance criterion, each at its stated tolerance and time budget."""

import csv
import io
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from bubblecluster import cli
from bubblecluster.catalogue import (
    ConfigurationSpec, build, lined_up_feasible, lined_up_middle_volume, solve_double_bubble_radius,
    solve_standard_triple_radius,
)
from bubblecluster.classify import CASE_CONFIGURATION, Configuration, classify, consistent, fit_plane
from bubblecluster.flow import FlowParams, evolve, jitter, project_volume_preserving
from bubblecluster.geometry import Cluster
from bubblecluster.meshio import off_text, parse_off
from bubblecluster.variation import (
    area_gradient, fit_multipliers, fit_multipliers_raw, heintze_karcher_check, volume_gradient,
    y_cone_stationarity,
)

from conftest import random_meshes, sphere_cluster, sphere_mesh
from oracles import (
    batched_area, batched_volume, brute_force_defect, central_difference, monte_carlo_volume,
    spheroid_inverse_mean_curvature_integral, triple_with_angles,
)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def _sheet_points(mesh, pair):
    mask = (mesh.labels[:, 0] == pair[0]) & (mesh.labels[:, 1] == pair[1])
    return mesh.vertices[np.unique(mesh.faces[mask])]


# 1 -------------------------------------------------------------------------

def test_01_gradients_match_finite_differences(acceptance):
    rec = acceptance(1, "area and volume gradients vs central differences on 100 random meshes")
    t0 = time.perf_counter()
    meshes = random_meshes(2024, 100)
    assert max(m.n_vertices for m in meshes) <= 200
    worst = 0.0
    for mesh in meshes:
        f, lab = mesh.faces, mesh.labels
        step = 1e-5 * mesh.mean_edge_length()
        fd = central_difference(lambda v: batched_area(v, f), mesh.vertices, step)
        worst = max(worst, _rel(area_gradient(mesh), fd))
        for region in range(1, mesh.k + 1):
            fd = central_difference(lambda v: batched_volume(v, f, lab, region), mesh.vertices, step)
            worst = max(worst, _rel(volume_gradient(mesh, region), fd))
    elapsed = time.perf_counter() - t0
    rec.note(f"max rel err {worst:.2e}, {elapsed:.1f} s")
    assert worst <= 1e-6
    assert elapsed <= 10.0


# 2 -------------------------------------------------------------------------

def test_02_sphere_stationarity(acceptance):
    rec = acceptance(2, "unit icosphere (subdivision 4) is stationary with lambda = 2")
    mesh = sphere_mesh(4)
    t0 = time.perf_counter()
    fit = fit_multipliers_raw(mesh, 1)
    proj = project_volume_preserving(fit.area_grad, fit.volume_grads)
    ratio = np.linalg.norm(proj.direction) / np.linalg.norm(fit.area_grad)
    elapsed = time.perf_counter() - t0
    rec.note(f"lambda {fit.lambdas[0]:.5f}, residual {fit.residual_rel:.2e}, ratio {ratio:.2e}, {elapsed:.2f} s")
    assert fit.lambdas[0] == pytest.approx(2.0, rel=0.02)
    assert fit.residual_rel <= 0.02
    assert ratio <= 0.02
    assert elapsed <= 1.0


# 3 -------------------------------------------------------------------------

def test_03_standard_double_bubble(acceptance):
    rec = acceptance(3, "standard double bubble (1, 1) at r/20")
    t0 = time.perf_counter()
    r = solve_double_bubble_radius(1.0)
    cluster = build(ConfigurationSpec("standard_double_bubble", (1.0, 1.0), r / 20))
    errs = cluster.volume_errors()
    # the smooth lobe (ball of radius r about (0, 0, r/2) above z = 0) sampled independently
    center = np.array([0.0, 0.0, 0.5 * r])

    def inside(p):
        return (np.sum((p - center) ** 2, axis=1) <= r * r) & (p[:, 2] >= 0)

    est, se = monte_carlo_volume(inside, [-r, -r, 0.0], [r, r, 1.5 * r], 10_000_000, seed=20240601)
    report = fit_multipliers(cluster)
    medians = report.junction_medians()
    lam = report.lambdas
    spread = abs(lam[0] - lam[1]) / max(abs(lam[0]), abs(lam[1]))
    finer = build(ConfigurationSpec("standard_double_bubble", (1.0, 1.0), r / 40))
    improvement = report.residual_rel / fit_multipliers_raw(finer.mesh, 2).residual_rel
    elapsed = time.perf_counter() - t0
    rec.note(f"vol err {max(map(abs, errs)):.2e}, MC {est:.5f}+-{se:.1e}, medians "
             f"[{min(medians):.2f}, {max(medians):.2f}], lambda spread {spread:.1e}, residual "
             f"{report.residual_rel:.2e}, refinement gain {improvement:.2f}x, {elapsed:.1f} s")
    assert max(map(abs, errs)) <= 0.005
    assert abs(est - 1.0) <= 3 * se
    assert all(abs(m - 120.0) <= 1.0 for m in medians)
    assert spread <= 0.01
    assert report.residual_rel <= 0.02
    assert improvement >= 1.5
    assert elapsed <= 30.0


# 4 -------------------------------------------------------------------------

def test_04_standard_triple(acceptance):
    rec = acceptance(4, "standard triple bubble with equal volumes")
    t0 = time.perf_counter()
    r = solve_standard_triple_radius(1.0)
    cluster = build(ConfigurationSpec("standard_triple", (1.0, 1.0, 1.0), r / 20))
    result = classify(cluster)
    lam = np.array(result.lambdas)
    spread = float(np.ptp(lam) / np.abs(lam).max())
    # second route: half-plane directions from raw sheet vertices about the z axis
    dirs = []
    for pair in ((1, 2), (2, 3), (1, 3)):
        pts = _sheet_points(cluster.mesh, pair)
        _, normal, _ = fit_plane(pts)
        assert abs(normal[2]) < 1e-9  # each sheet contains the common line
        d = pts[:, :2].mean(axis=0)
        dirs.append(d / np.linalg.norm(d))
    between = [math.degrees(math.acos(np.clip(a @ b, -1, 1))) for a, b in itertools.combinations(dirs, 2)]
    elapsed = time.perf_counter() - t0
    rec.note(f"lambda spread {spread:.1e}, wedges {[round(w, 3) for w in result.wedge_angles_deg]}, "
             f"sheet angles {[round(b, 3) for b in between]}, {elapsed:.1f} s")
    assert spread <= 0.01
    assert all(abs(w - 120.0) <= 0.5 for w in result.wedge_angles_deg) and len(result.wedge_angles_deg) == 3
    assert all(abs(b - 120.0) <= 0.5 for b in between)
    assert (result.case_label, result.configuration) == (4, Configuration.STANDARD_TRIPLE)
    assert elapsed <= 60.0


# 5 -------------------------------------------------------------------------

def test_05_lined_up_triple_branches(acceptance):
    rec = acceptance(5, "lined-up triple: all branches, 60 degree point contact, Delaunay middle")
    t0 = time.perf_counter()
    r = solve_double_bubble_radius(1.0)
    feasible = lined_up_feasible(r)
    cases = [("non_parallel", 15.0), ("non_parallel", 45.0), ("point_contact", None), ("parallel", None)]
    seen = {}
    for branch, opening in cases:
        lo, hi = feasible[branch]
        for mid in sorted({lo, hi}):
            placement = {"branch": branch}
            if opening is not None:
                placement["opening_deg"] = opening
            cluster = build(ConfigurationSpec("lined_up_triple", (1.0, mid, 1.0), r / 15, placement=placement))
            result = classify(cluster)
            assert (result.case_label, result.configuration) == (3, Configuration.LINED_UP_TRIPLE), result.failed
            assert result.branch == branch
            seen[(branch, opening)] = (cluster, result)
    _, point = seen[("point_contact", None)]
    pc_cluster = seen[("point_contact", None)][0]
    n12 = fit_plane(_sheet_points(pc_cluster.mesh, (1, 2)))[1]
    n23 = fit_plane(_sheet_points(pc_cluster.mesh, (2, 3)))[1]
    planes_deg = math.degrees(math.acos(abs(float(n12 @ n23))))
    par_cluster, par = seen[("parallel", None)]
    meta = par_cluster.metadata
    elapsed = time.perf_counter() - t0
    rec.note(f"point-contact wedge {point.wedge_angles_deg[0]:.3f} (planes {planes_deg:.3f}), parallel "
             f"profile residual {meta['profile_max_residual']:.1e}, contact {meta['contact_angles_deg']}, "
             f"{elapsed:.1f} s")
    assert point.wedge_angles_deg[0] == pytest.approx(60.0, abs=0.5)
    assert planes_deg == pytest.approx(60.0, abs=0.5)
    assert meta["profile_max_residual"] <= 1e-8
    assert all(abs(a - 120.0) <= 0.5 for a in meta["contact_angles_deg"])
    assert all(abs(m - 120.0) <= 0.5 for m in par.junction_medians_deg)
    assert elapsed <= 60.0


# 6 -------------------------------------------------------------------------

def _oriented_angles(v):
    """Pairwise angles after choosing the orientation that minimizes the vector sum."""
    signs = min(itertools.product((1.0, -1.0), repeat=3),
                key=lambda s: np.linalg.norm(s[0] * v[0] + s[1] * v[1] + s[2] * v[2]))
    w = v * np.array(signs)[:, None]
    return np.degrees(np.arccos(np.clip([w[0] @ w[1], w[0] @ w[2], w[1] @ w[2]], -1, 1)))


def test_06_y_cone_law(acceptance):
    rec = acceptance(6, "Y-cone defect: zero at 120 degrees, > 0.25 off by >= 10 degrees, brute-force agreement")
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    t = 2 * np.pi * np.arange(3) / 3
    y = np.stack([np.cos(t), np.sin(t), np.zeros(3)], axis=1)
    balanced = max(y_cone_stationarity(y @ Rotation.random(random_state=rng).as_matrix().T)[1] for _ in range(50))
    # triples whose three oriented pairwise angles all sit at least 10 degrees from 120
    off = [triple_with_angles(*a) for a in [(130, 130, 100), (110, 110, 140), (100, 130, 130), (140, 140, 80),
                                             (90, 135, 135), (105, 110, 145)]]
    while len(off) < 500:
        v = rng.normal(size=(3, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if np.all(np.abs(_oriented_angles(v) - 120.0) >= 10.0):
            off.append(v)
    off_min = min(y_cone_stationarity(v)[1] for v in off)
    worst = 0.0
    for _ in range(1000):
        v = rng.normal(size=(3, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        worst = max(worst, abs(y_cone_stationarity(v)[1] - brute_force_defect(v)))
    elapsed = time.perf_counter() - t0
    rec.note(f"defect at 120: {balanced:.1e}, min defect off-balance {off_min:.4f}, oracle gap {worst:.1e}, "
             f"{elapsed:.2f} s")
    assert balanced <= 1e-12
    assert off_min > 0.25
    assert worst <= 1e-12
    assert elapsed <= 1.0


# 7 -------------------------------------------------------------------------

def test_07_heintze_karcher(acceptance):
    rec = acceptance(7, "Heintze-Karcher gap: sphere vs (1, 1, 2) spheroid")
    t0 = time.perf_counter()
    sphere = heintze_karcher_check(sphere_mesh(4), 1)
    spheroid = heintze_karcher_check(sphere_mesh(4, axes=(1, 1, 2)), 1)
    exact_gap = (2.0 / 3.0 * spheroid_inverse_mean_curvature_integral(1.0, 2.0)) / (4 * math.pi * 2 / 3) - 1.0
    elapsed = time.perf_counter() - t0
    rec.note(f"sphere gap {sphere.gap_rel:.2e}, spheroid gap {spheroid.gap_rel:.4f} (quadrature {exact_gap:.4f}), "
             f"{elapsed:.2f} s")
    assert abs(sphere.gap_rel) <= 0.02
    assert spheroid.gap_rel > 0.05
    assert spheroid.gap_rel == pytest.approx(exact_gap, rel=0.10)
    assert elapsed <= 5.0


# 8 -------------------------------------------------------------------------

def test_08_flow_recovery(acceptance):
    rec = acceptance(8, "flow recovers the double bubble and the sphere from 5% jitter")
    t0 = time.perf_counter()
    r = solve_double_bubble_radius(1.0)
    db = build(ConfigurationSpec("standard_double_bubble", (1.0, 1.0), r / 20))
    shaken = jitter(db, 0.05, seed=8)
    params = FlowParams(max_steps=2000, seed=8)
    res = evolve(shaken, params)
    reduction = res.trace[0].residual_rel / res.final_residual
    vol_err = max(abs(e) for e in res.cluster.volume_errors())
    result = classify(res.cluster)
    sphere = sphere_cluster(3)
    sres = evolve(jitter(sphere, 0.05, seed=8), params)
    v = sphere.target_volumes[0]
    iso = (36 * math.pi * v * v) ** (1 / 3)
    area_gap = sres.cluster.mesh.total_area() / iso - 1.0
    elapsed = time.perf_counter() - t0
    rec.note(f"double bubble: {res.steps} steps, residual {res.trace[0].residual_rel:.3g} -> "
             f"{res.final_residual:.3g} ({reduction:.0f}x), vol err {vol_err:.1e}, {result.configuration.value}; "
             f"sphere area gap {area_gap:.2e}; {elapsed:.0f} s")
    assert res.steps <= 2000
    assert reduction >= 10.0
    assert vol_err <= 0.005
    assert result.configuration == Configuration.STANDARD_DOUBLE_BUBBLE
    assert abs(area_gap) <= 0.01
    assert elapsed <= 300.0


# 9 -------------------------------------------------------------------------

def test_09_classification_totality(acceptance, tmp_path):
    rec = acceptance(9, "default catalogue sweep passes every row; case/configuration pairing")
    t0 = time.perf_counter()
    code = cli.main(["sweep", "--out", str(tmp_path)])
    rows = list(csv.DictReader(io.StringIO((tmp_path / "sweep.csv").read_text())))
    failed = [(r["kind"], r["volumes"], r["error"]) for r in rows if r["passed"] != "true"]
    labels = {"Ball": "single", "DisjointBalls": None, "StandardDoubleBubble": "double_bubble"}
    for row in rows:
        case = row["case_label"]
        case = int(case) if case.isdigit() else case
        assert consistent(case, row["configuration"]), row
        expected_case = labels.get(row["configuration"], case)
        if expected_case is not None:
            assert case == expected_case
    # the "only in case i" pairing is one-to-one on the four cases of three regions
    assert len({CASE_CONFIGURATION[i] for i in (1, 2, 3, 4)}) == 4
    unequal = [r for r in rows if r["kind"] == "disjoint_balls" and len(set(r["volumes"].split())) > 1]
    assert unequal and all(r["passed"] == "true" and float(r["residual_rel"]) <= float(r["residual_tol"])
                           for r in unequal)
    elapsed = time.perf_counter() - t0
    rec.note(f"{len(rows)} rows, {len(failed)} failed, {len(unequal)} unequal-ball rows stationary, "
             f"{elapsed:.0f} s")
    assert code == 0 and not failed, failed
    assert elapsed <= 600.0


# 10 ------------------------------------------------------------------------

def test_10_determinism_and_formats(acceptance, tmp_path):
    rec = acceptance(10, "identical manifests give identical OFF and CSV; OFF round trip")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "standard_double_bubble", "volumes": [1.0, 1.0], "resolution": 0.12}))
    params = tmp_path / "params.json"
    params.write_text(json.dumps({"format_version": 1, "flow": {"max_steps": 25, "seed": 3},
                                  "perturbation": {"amplitude_rel": 0.05}}))
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"format_version": 1, "entries": [
        {"kind": "standard_triple", "volumes": [[1, 1, 1]], "resolutions_rel": [0.125]}]}))
    outs = []
    for n in range(2):
        a, b = tmp_path / f"evolve{n}", tmp_path / f"sweep{n}"
        cli.main(["evolve", str(spec), str(params), "--out", str(a)])
        cli.main(["sweep", str(grid), "--out", str(b)])
        outs.append((a, b))
    manifests = [json.loads((a / "manifest.json").read_text()) for a, _ in outs]
    assert manifests[0] == manifests[1]
    same = {name: (outs[0][0] / name).read_bytes() == (outs[1][0] / name).read_bytes()
            for name in ("final.off", "trace.csv")}
    same["sweep.csv"] = (outs[0][1] / "sweep.csv").read_bytes() == (outs[1][1] / "sweep.csv").read_bytes()
    text = (outs[0][0] / "final.off").read_text()
    round_trip = off_text(parse_off(text)) == text
    built = build(ConfigurationSpec("lined_up_triple", (1.0, lined_up_middle_volume(
        solve_double_bubble_radius(1.0), 0.0), 1.0), 0.12, placement={"branch": "parallel"})).mesh
    round_trip &= off_text(parse_off(off_text(built))) == off_text(built)
    rec.note(", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items())
             + f", round trip {'byte-identical' if round_trip else 'CHANGED'}")
    assert all(same.values())
    assert round_trip
