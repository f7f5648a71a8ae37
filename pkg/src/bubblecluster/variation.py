"""Discrete first variation of area under volume constraints.

Gradients are exact derivatives of the polyhedral area and enclosed volumes
with respect to vertex positions, returned as ``(n_vertices, 3)`` arrays.
Mean curvature is the sum of principal curvatures (unit sphere: 2), which is
the multiplier in ``grad(area) = sum_i lambda_i grad(vol_i)``.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .errors import CurvatureUnavailable, DegenerateTriangle, NonConvexInput
from .geometry import Cluster, JunctionCurve, LabeledMesh, compute_volume, extract_junction_curves

logger = logging.getLogger(__name__)


def _scatter(n: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    out = np.empty((n, 3))
    for c in range(3):
        out[:, c] = np.bincount(idx, weights=vals[:, c], minlength=n)
    return out


def area_gradient(mesh: LabeledMesh, face_mask: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the total face area (optionally over a subset of faces)."""
    v = mesh.vertices
    f = mesh.faces if face_mask is None else mesh.faces[face_mask]
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    nrm = np.cross(b - a, c - a)
    length = np.linalg.norm(nrm, axis=1)
    if np.any(length == 0):
        bad = int(np.argmin(length))
        if face_mask is not None:
            bad = int(np.nonzero(face_mask)[0][bad])
        raise DegenerateTriangle(bad)
    n = nrm / length[:, None]
    ga = 0.5 * np.cross(n, c - b)
    gb = 0.5 * np.cross(n, a - c)
    gc = 0.5 * np.cross(n, b - a)
    idx = f.T.reshape(-1)
    return _scatter(len(v), idx, np.concatenate([ga, gb, gc]))


def volume_gradient(mesh: LabeledMesh, region: int, check: bool = True) -> np.ndarray:
    """Gradient of ``compute_volume(mesh, region)``."""
    if check:
        mesh.check_closed(region)
    faces = mesh.region_faces(region)
    ref = mesh.vertices[np.unique(faces)].mean(axis=0)
    v = mesh.vertices - ref
    a, b, c = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
    idx = faces.T.reshape(-1)
    return _scatter(len(v), idx, np.concatenate([np.cross(b, c), np.cross(c, a), np.cross(a, b)]) / 6.0)


def _flat(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1)


@dataclass
class MultiplierFit:
    lambdas: np.ndarray
    residual_abs: float
    residual_rel: float
    rank_deficient: bool
    area_grad: np.ndarray
    volume_grads: list[np.ndarray]

    def residual_field(self) -> np.ndarray:
        r = self.area_grad.copy()
        for lam, g in zip(self.lambdas, self.volume_grads):
            r -= lam * g
        return r


def fit_multipliers_raw(mesh: LabeledMesh, k: int, rcond: float = 1e-10) -> MultiplierFit:
    """Least-squares multipliers for ``grad A = sum_i lambda_i grad V_i``."""
    ga = area_gradient(mesh)
    gvs = [volume_gradient(mesh, i) for i in range(1, k + 1)]
    mat = np.stack([_flat(g) for g in gvs], axis=1)
    rhs = _flat(ga)
    sol, _, rank, sing = np.linalg.lstsq(mat, rhs, rcond=rcond)
    rank_def = rank < k
    if rank_def:
        logger.warning("volume gradients are linearly dependent (rank %d < %d); using pseudo-inverse", rank, k)
    res = rhs - mat @ sol
    res_abs = math.sqrt(math.fsum(res * res))
    ga_norm = math.sqrt(math.fsum(rhs * rhs))
    return MultiplierFit(sol, res_abs, res_abs / ga_norm if ga_norm > 0 else 0.0, bool(rank_def), ga, gvs)


def vertex_mean_curvature(mesh: LabeledMesh, face_mask: np.ndarray, outward: np.ndarray | None = None) -> np.ndarray:
    """Per-vertex H = <grad A, N> / |N|^2 over the faces in ``face_mask``.

    ``N`` is the restricted volume gradient, (1/3) sum of area vectors of the
    incident faces, oriented by ``outward`` (+1 keeps the stored face
    orientation, -1 flips it).  Vertices not touched by the mask get NaN.
    """
    v = mesh.vertices
    f = mesh.faces[face_mask]
    ga = area_gradient(mesh, face_mask)
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    avec = np.cross(b - a, c - a) / 6.0  # area vector / 3
    if outward is not None:
        avec = avec * np.asarray(outward, dtype=float)[:, None]
    nvec = _scatter(len(v), f.T.reshape(-1), np.concatenate([avec, avec, avec]))
    n2 = np.einsum("ij,ij->i", nvec, nvec)
    out = np.full(len(v), np.nan)
    touched = n2 > 0
    out[touched] = np.einsum("ij,ij->i", ga[touched], nvec[touched]) / n2[touched]
    return out


def _patch_interior_vertices(mesh: LabeledMesh, face_mask: np.ndarray) -> np.ndarray:
    inside = np.zeros(len(mesh.vertices), dtype=bool)
    inside[np.unique(mesh.faces[face_mask])] = True
    inside[np.unique(mesh.faces[~face_mask])] = False
    return np.nonzero(inside)[0]


def interface_curvatures(mesh: LabeledMesh) -> dict[str, dict]:
    """Mean curvature statistics on the interior vertices of each label pair.

    Sign: positive when the patch bends around the lower-indexed nonzero
    region (i.e. convex regions give positive values on their free surface).
    """
    out = {}
    pairs = sorted({(int(a), int(b)) for a, b in mesh.labels})
    for i, j in pairs:
        mask = (mesh.labels[:, 0] == i) & (mesh.labels[:, 1] == j)
        # stored normals point out of i; for exterior faces measure w.r.t. region j
        sign = -1.0 if i == 0 else 1.0
        h = vertex_mean_curvature(mesh, mask) * sign
        inner = _patch_interior_vertices(mesh, mask)
        vals = h[inner]
        vals = vals[np.isfinite(vals)]
        entry = {"n": int(len(vals))}
        if len(vals):
            entry.update(mean_H=float(np.mean(vals)), std_H=float(np.std(vals)),
                         min_H=float(np.min(vals)), max_H=float(np.max(vals)))
        out[f"{i}_{j}"] = entry
    return out


# ---------------------------------------------------------------- junctions

def _edge_face_map(mesh: LabeledMesh) -> dict[tuple[int, int], list[int]]:
    edges = mesh.edges
    ef = mesh.edge_faces()
    return {(int(a), int(b)): faces for (a, b), faces in zip(edges.tolist(), ef)}


def _vertex_faces(mesh: LabeledMesh) -> list[np.ndarray]:
    f = mesh.faces
    idx = f.reshape(-1)
    order = np.argsort(idx, kind="stable")
    counts = np.bincount(idx, minlength=len(mesh.vertices))
    return np.split(order // 3, np.cumsum(counts)[:-1])


def _extrapolated_conormal(mesh, a, b, face, label_mask, vertex_faces, face_normals):
    """Unit conormal of a patch at edge (a, b), pointing into the patch.

    The face normal is fitted as a linear function of position over the
    patch faces within two rings of the edge and evaluated on the edge,
    which removes the first-order chord error of the adjacent faces.
    """
    v = mesh.vertices
    pa, pb = v[a], v[b]
    e = pb - pa
    e /= np.linalg.norm(e)
    third = [x for x in mesh.faces[face] if x != a and x != b][0]
    w = v[third] - pa
    w -= e * (w @ e)
    w /= np.linalg.norm(w)
    ring1 = set(np.concatenate([vertex_faces[a], vertex_faces[b]]).tolist())
    ring_verts = np.unique(mesh.faces[list(ring1)])
    ring2 = np.unique(np.concatenate([vertex_faces[x] for x in ring_verts]))
    ring2 = ring2[label_mask[ring2]]
    mid = 0.5 * (pa + pb)
    pts = v[mesh.faces[ring2]] - mid  # (m, 3, 3)
    s = pts @ w
    keep = s.min(axis=1) > -1e-9 * np.linalg.norm(e)  # faces on the patch side only
    ring2, pts, s = ring2[keep], pts[keep], s[keep]
    n_f = face_normals[ring2]
    n_f = n_f * np.sign(n_f @ face_normals[face])[:, None]
    seff = 0.5 * (s.min(axis=1) + s.max(axis=1))
    teff = (pts @ e).mean(axis=1)
    if len(ring2) >= 4 and np.ptp(seff) > 1e-6 * np.linalg.norm(pb - pa):
        design = np.stack([np.ones_like(seff), seff, teff], axis=1)
        coef, *_ = np.linalg.lstsq(design, n_f, rcond=None)
        n0 = coef[0]
    else:
        n0 = n_f.mean(axis=0)
    c = np.cross(n0, e)
    c -= e * (c @ e)
    c /= np.linalg.norm(c)
    return c if c @ w > 0 else -c


@dataclass
class JunctionAngleStats:
    labels: tuple
    pairs: dict  # "a_b|c_d" -> {"median", "min", "max", "n"}
    n_edges: int

    def medians(self) -> list[float]:
        return [p["median"] for p in self.pairs.values()]

    def to_dict(self) -> dict:
        return {"labels": ["%d_%d" % l for l in self.labels], "n_edges": self.n_edges, "pairs": self.pairs}


def junction_angles(cluster_or_mesh, curve: JunctionCurve) -> JunctionAngleStats:
    """Pairwise dihedral angles (degrees) between the three patches along a junction curve."""
    mesh = cluster_or_mesh.mesh if isinstance(cluster_or_mesh, Cluster) else cluster_or_mesh
    efm = _edge_face_map(mesh)
    vf = _vertex_faces(mesh)
    normals = mesh.face_normals()
    label_keys = mesh.labels[:, 0] * 100003 + mesh.labels[:, 1]
    samples: dict[str, list[float]] = {}
    n_edges = 0
    for a, b in curve.edges:
        key = (a, b) if a < b else (b, a)
        faces = efm.get(key, [])
        if len(faces) != 3:
            continue
        n_edges += 1
        con = {}
        for fc in faces:
            lab = (int(mesh.labels[fc, 0]), int(mesh.labels[fc, 1]))
            con[lab] = _extrapolated_conormal(mesh, key[0], key[1], fc, label_keys == label_keys[fc], vf, normals)
        labs = sorted(con)
        for p, q in itertools.combinations(labs, 2):
            ang = math.degrees(math.acos(float(np.clip(con[p] @ con[q], -1.0, 1.0))))
            samples.setdefault("%d_%d|%d_%d" % (p + q), []).append(ang)
    pairs = {
        k: {"median": float(np.median(x)), "min": float(np.min(x)), "max": float(np.max(x)), "n": len(x)}
        for k, x in sorted(samples.items())
    }
    return JunctionAngleStats(tuple(curve.labels), pairs, n_edges)


# ---------------------------------------------------------------- report

@dataclass
class VariationReport:
    lambdas: list[float]
    residual_abs: float
    residual_rel: float
    interfaces: dict = field(default_factory=dict)
    junctions: dict = field(default_factory=dict)
    rank_deficient: bool = False

    def to_dict(self) -> dict:
        return {
            "lambdas": [float(x) for x in self.lambdas],
            "residual_abs": float(self.residual_abs),
            "residual_rel": float(self.residual_rel),
            "interfaces": self.interfaces,
            "junctions": self.junctions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def junction_medians(self) -> list[float]:
        return [p["median"] for j in self.junctions.values() for p in j["pairs"].values()]


def fit_multipliers(cluster: Cluster) -> VariationReport:
    fit = fit_multipliers_raw(cluster.mesh, cluster.k)
    curves = extract_junction_curves(cluster.mesh)
    junctions = {}
    for n, curve in enumerate(curves):
        junctions[f"curve_{n}"] = junction_angles(cluster.mesh, curve).to_dict()
    return VariationReport(
        lambdas=[float(x) for x in fit.lambdas],
        residual_abs=fit.residual_abs,
        residual_rel=fit.residual_rel,
        interfaces=interface_curvatures(cluster.mesh),
        junctions=junctions,
        rank_deficient=fit.rank_deficient,
    )


# ---------------------------------------------------------------- cones

def y_cone_stationarity(normals, tol: float = 1e-9) -> tuple[bool, float]:
    """Defect of the three-sheet balance ``v + v1 + v2 = 0`` up to reorienting each vector.

    The four sign classes modulo a global flip are summed directly; going
    through the Gram matrix would square the defect and lose half its digits
    near a balanced junction.
    """
    v = np.asarray(normals, dtype=float).reshape(3, 3)
    sums = np.array([v[0] + v[1] + v[2], v[0] + v[1] - v[2], v[0] - v[1] + v[2], v[0] - v[1] - v[2]])
    defect = float(np.min(np.linalg.norm(sums, axis=1)))
    return defect <= tol, defect


def region_is_convex(mesh: LabeledMesh, region: int, rel_tol: float = 1e-6) -> tuple[bool, float]:
    """Every boundary vertex of the region lies on its convex hull, up to ``rel_tol`` * diameter.

    Returns the verdict and the deepest vertex's distance inside the hull
    relative to the diameter (0 for a convex polyhedron).
    """
    idx = np.unique(mesh.region_faces(region))
    pts = mesh.vertices[idx]
    diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if diam == 0.0:
        return True, 0.0
    eq = ConvexHull(pts).equations  # unit outward normals with offsets
    worst = 0.0
    chunk = max(1, 4_000_000 // max(len(eq), 1))
    for s in range(0, len(pts), chunk):
        depth = -(pts[s: s + chunk] @ eq[:, :3].T + eq[:, 3])
        worst = max(worst, float(depth.min(axis=1).max()))
    rel = worst / diam
    return rel <= rel_tol, rel


@dataclass
class TangentCone:
    vertex: int
    generators: np.ndarray
    facet_normals: np.ndarray  # inward unit normals of the cone's facets
    axis: np.ndarray
    max_elevation_deg: float
    is_half_space: bool
    opening_deg: float | None


def tangent_cone_at(mesh: LabeledMesh, region: int, vertex: int, flat_deg: float = 2.0,
                    convex_tol: float = 1e-6, facet_tol_deg: float = 0.05) -> TangentCone:
    """Polyhedral tangent cone of a convex region's boundary at a vertex."""
    ok, excess = region_is_convex(mesh, region, convex_tol)
    if not ok:
        raise NonConvexInput(f"region {region} is not convex (excursion {excess:.3g} of diameter)")
    faces = mesh.region_faces(region)
    inc = faces[np.any(faces == vertex, axis=1)]
    if len(inc) == 0:
        raise ValueError(f"vertex {vertex} is not on region {region}'s boundary")
    nbrs = np.unique(inc[inc != vertex])
    gens = mesh.vertices[nbrs] - mesh.vertices[vertex]
    gens /= np.linalg.norm(gens, axis=1, keepdims=True)
    v = mesh.vertices
    fn = np.cross(v[inc[:, 1]] - v[inc[:, 0]], v[inc[:, 2]] - v[inc[:, 0]])
    axis = -fn.sum(axis=0)  # inward
    axis /= np.linalg.norm(axis)
    elev = np.degrees(np.arcsin(np.clip(gens @ axis, -1, 1)))
    max_elev = float(np.max(np.abs(elev)))
    eps = math.sin(math.radians(facet_tol_deg))
    normals: list[np.ndarray] = []
    for i, j in itertools.combinations(range(len(gens)), 2):
        n = np.cross(gens[i], gens[j])
        ln = np.linalg.norm(n)
        if ln < 1e-8:
            continue
        n /= ln
        d = gens @ n
        if np.all(d >= -eps):
            cand = n
        elif np.all(d <= eps):
            cand = -n
        else:
            continue
        if not any(cand @ m > math.cos(math.radians(max(facet_tol_deg * 10, 0.5))) for m in normals):
            normals.append(cand)
    normals_arr = np.array(normals) if normals else np.zeros((0, 3))
    is_flat = max_elev <= flat_deg
    opening = None
    if len(normals_arr) >= 2 and not is_flat:
        cosines = normals_arr @ normals_arr.T
        opening = 180.0 - math.degrees(math.acos(float(np.clip(cosines.min(), -1, 1))))
    elif is_flat:
        opening = 180.0
    return TangentCone(int(vertex), gens, normals_arr, axis, max_elev, bool(is_flat), opening)


@dataclass
class HeintzeKarcher:
    lhs: float
    rhs: float
    gap_rel: float
    excluded_area_fraction: float


def heintze_karcher_check(mesh: LabeledMesh, region: int = 1, eps: float | None = None,
                          convex_tol: float = 1e-6, max_excluded: float = 0.05) -> HeintzeKarcher:
    """Compare the volume with (2/3) * integral of 1/H over the boundary (n = 3)."""
    ok, excess = region_is_convex(mesh, region, convex_tol)
    if not ok:
        raise NonConvexInput(f"region {region} is not convex (excursion {excess:.3g} of diameter)")
    vol = compute_volume(mesh, region)
    mask = mesh.region_mask(region)
    outward = np.where(mesh.labels[mask, 0] == region, 1.0, -1.0)
    sub = LabeledMesh(mesh.vertices, mesh.faces[mask], mesh.labels[mask])
    hv = vertex_mean_curvature(sub, np.ones(len(sub.faces), dtype=bool), outward)
    hf = hv[sub.faces].mean(axis=1)
    areas = sub.face_areas()
    if eps is None:
        eps = 1e-6 / vol ** (1.0 / 3.0)
    good = hf > eps
    total = math.fsum(areas)
    excluded = 1.0 - math.fsum(areas[good]) / total
    if excluded > max_excluded:
        raise CurvatureUnavailable(f"{excluded:.1%} of the boundary area has no positive curvature estimate")
    rhs = (2.0 / 3.0) * math.fsum(areas[good] / hf[good])
    return HeintzeKarcher(vol, rhs, (rhs - vol) / vol, excluded)
