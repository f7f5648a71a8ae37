"""Recognize which critical configuration a cluster of one to three regions is.

The region-interaction graph fixes the case (how many pairs of regions share
an interface).  Each case admits exactly one configuration, and the
geometric predicates below decide whether the mesh actually is it:

* every exterior sheet is a sphere and every interface between two regions is flat,
* junction curves meet at 120 degrees,
* interacting regions share one mean-curvature multiplier,
* wedge angles fit the configuration (120 degrees each for the symmetric
  triple, at most 60 degrees for the middle cell of a lined-up triple).

A cluster failing any predicate is reported as ``Unclassified`` together
with the failed predicate names.
"""

from __future__ import annotations

import enum
import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConvexityViolation, UnsupportedK
from .geometry import Cluster, LabeledMesh, build_interaction_graph, check_non_overlap, extract_junction_curves
from .variation import fit_multipliers_raw, junction_angles, region_is_convex

log = logging.getLogger(__name__)


class Configuration(str, enum.Enum):
    BALL = "Ball"
    DISJOINT_BALLS = "DisjointBalls"
    STANDARD_DOUBLE_BUBBLE = "StandardDoubleBubble"
    BALL_PLUS_DOUBLE_BUBBLE = "BallPlusDoubleBubble"
    LINED_UP_TRIPLE = "LinedUpTriple"
    STANDARD_TRIPLE = "StandardTriple"
    UNCLASSIFIED = "Unclassified"


# the only configuration each case may produce
CASE_CONFIGURATION = {
    "single": Configuration.BALL,
    "disjoint": Configuration.DISJOINT_BALLS,
    "double_bubble": Configuration.STANDARD_DOUBLE_BUBBLE,
    1: Configuration.DISJOINT_BALLS,
    2: Configuration.BALL_PLUS_DOUBLE_BUBBLE,
    3: Configuration.LINED_UP_TRIPLE,
    4: Configuration.STANDARD_TRIPLE,
}


def expected_configuration(kind: str, k: int) -> Configuration:
    """Configuration the catalogue kind ``kind`` with ``k`` regions must classify as."""
    if kind == "disjoint_balls":
        return Configuration.BALL if k == 1 else Configuration.DISJOINT_BALLS
    return {
        "standard_double_bubble": Configuration.STANDARD_DOUBLE_BUBBLE,
        "ball_plus_double_bubble": Configuration.BALL_PLUS_DOUBLE_BUBBLE,
        "lined_up_triple": Configuration.LINED_UP_TRIPLE,
        "standard_triple": Configuration.STANDARD_TRIPLE,
    }[kind]


def consistent(case_label, configuration) -> bool:
    """True when ``configuration`` is the one allowed in ``case_label`` (or Unclassified)."""
    configuration = Configuration(configuration)
    if configuration == Configuration.UNCLASSIFIED:
        return case_label in CASE_CONFIGURATION
    return CASE_CONFIGURATION.get(case_label) == configuration


def angle_sum_witness(wedge_angles, tol: float = 1e-9) -> bool:
    """Three wedge angles (radians) can tile a full turn with at least one of them >= pi/3."""
    a = [float(x) for x in wedge_angles]
    if len(a) != 3 or any(x <= 0 for x in a):
        raise ValueError("expected three positive angles")
    return abs(math.fsum(a) - 2 * math.pi) <= tol and max(a) >= math.pi / 3 - tol


# ---------------------------------------------------------------------------
# fits


@dataclass
class SurfaceFit:
    shape: str  # "sphere" or "plane"
    rms: float
    rms_rel: float
    center: list[float] | None = None
    radius: float | None = None
    normal: list[float] | None = None
    point: list[float] | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def fit_sphere(points: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Least-squares sphere: algebraic fit refined by Gauss-Newton on the distances."""
    p = np.asarray(points, dtype=float)
    a = np.column_stack([2 * p, np.ones(len(p))])
    sol = np.linalg.lstsq(a, np.einsum("ij,ij->i", p, p), rcond=None)[0]
    c = sol[:3]
    r = math.sqrt(max(sol[3] + c @ c, 0.0))
    for _ in range(5):
        d = p - c
        dist = np.linalg.norm(d, axis=1)
        jac = np.column_stack([-d / dist[:, None], -np.ones(len(p))])
        step = np.linalg.lstsq(jac, -(dist - r), rcond=None)[0]
        c, r = c + step[:3], r + step[3]
    rms = float(np.sqrt(np.mean((np.linalg.norm(p - c, axis=1) - r) ** 2)))
    return c, float(r), rms


def fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    p = np.asarray(points, dtype=float)
    c = p.mean(axis=0)
    _, _, vt = np.linalg.svd(p - c, full_matrices=False)
    n = vt[2]
    rms = float(np.sqrt(np.mean(((p - c) @ n) ** 2)))
    return c, n, rms


def _sheet_vertices(mesh: LabeledMesh, pair) -> np.ndarray:
    mask = (mesh.labels[:, 0] == pair[0]) & (mesh.labels[:, 1] == pair[1])
    return np.unique(mesh.faces[mask])


def _oriented_plane_normal(mesh: LabeledMesh, pair, normal) -> np.ndarray:
    """Plane normal flipped to point from ``pair[0]`` into ``pair[1]``."""
    mask = (mesh.labels[:, 0] == pair[0]) & (mesh.labels[:, 1] == pair[1])
    v = mesh.vertices[mesh.faces[mask]]
    mean_normal = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]).sum(axis=0)
    return normal if normal @ mean_normal >= 0 else -normal


# ---------------------------------------------------------------------------
# distances between region boundaries


def _point_triangle_distance(p, a, b, c) -> float:
    """Distance from ``p`` to triangle ``abc`` (closest-point by region tests)."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return float(np.linalg.norm(ap))
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return float(np.linalg.norm(bp))
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        t = d1 / (d1 - d3)
        return float(np.linalg.norm(p - (a + t * ab)))
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return float(np.linalg.norm(cp))
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        t = d2 / (d2 - d6)
        return float(np.linalg.norm(p - (a + t * ac)))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(p - (b + t * (c - b))))
    denom = 1.0 / (va + vb + vc)
    q = a + ab * (vb * denom) + ac * (vc * denom)
    return float(np.linalg.norm(p - q))


def boundary_distance(mesh: LabeledMesh, i: int, j: int, candidates: int = 16) -> float:
    """Smallest distance between the boundaries of regions ``i`` and ``j``.

    Nearest vertex pairs pick candidate spots; the distance from each
    candidate vertex to the faces around its partner refines the estimate,
    in both directions.
    """
    best = math.inf
    for a, b in ((i, j), (j, i)):
        fa, fb = mesh.region_faces(a), mesh.region_faces(b)
        va, vb = np.unique(fa), np.unique(fb)
        shared = np.intersect1d(va, vb)
        if len(shared):
            return 0.0
        tree = cKDTree(mesh.vertices[vb])
        dist, near = tree.query(mesh.vertices[va])
        order = np.argsort(dist)[:candidates]
        for n in order:
            p = mesh.vertices[va[n]]
            q = vb[near[n]]
            for f in fb[np.any(fb == q, axis=1)]:
                best = min(best, _point_triangle_distance(p, *mesh.vertices[f]))
    return best


# ---------------------------------------------------------------------------
# classification


@dataclass
class Classification:
    k: int
    case_label: int | str
    configuration: Configuration
    fits: dict = field(default_factory=dict)
    angle_pass: bool = True
    tangency_flags: dict = field(default_factory=dict)
    failed: list[str] = field(default_factory=list)
    branch: str | None = None
    interaction_edges: list = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    lambda_spread: float = 0.0
    junction_medians_deg: list[float] = field(default_factory=list)
    wedge_angles_deg: list[float] = field(default_factory=list)
    convexity: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.configuration != Configuration.UNCLASSIFIED

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "case_label": self.case_label,
            "configuration": self.configuration.value,
            "branch": self.branch,
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
            "angle_pass": self.angle_pass,
            "tangency_flags": self.tangency_flags,
            "failed": list(self.failed),
            "interaction_edges": [list(e) for e in self.interaction_edges],
            "lambdas": list(self.lambdas),
            "lambda_spread": self.lambda_spread,
            "junction_medians_deg": list(self.junction_medians_deg),
            "wedge_angles_deg": list(self.wedge_angles_deg),
            "convexity": list(self.convexity),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _case_label(k: int, n_edges: int):
    if k == 1:
        return "single"
    if k == 2:
        return "double_bubble" if n_edges else "disjoint"
    return n_edges + 1


def _components(k: int, edges) -> list[set[int]]:
    comp = {i: {i} for i in range(1, k + 1)}
    for a, b in edges:
        merged = comp[a] | comp[b]
        for x in merged:
            comp[x] = merged
    out = []
    for c in comp.values():
        if c not in out:
            out.append(c)
    return out


def _half_plane_direction(mesh: LabeledMesh, pair, line_point, line_dir) -> np.ndarray:
    pts = mesh.vertices[_sheet_vertices(mesh, pair)] - line_point
    d = pts.mean(axis=0)
    d = d - (d @ line_dir) * line_dir
    return d / np.linalg.norm(d)


def classify(cluster: Cluster) -> Classification:
    k = cluster.k
    if k not in (1, 2, 3):
        raise UnsupportedK(f"classification covers 1 to 3 regions, got {k}")
    mesh = cluster.mesh
    tol = cluster.scaled_tolerances()
    convexity = []
    for region in range(1, k + 1):
        ok, depth = region_is_convex(mesh, region, tol.convexity_rel)
        convexity.append(depth)
        if not ok:
            raise ConvexityViolation(
                f"region {region} is not convex: a vertex lies {depth:.3g} diameters inside its hull "
                f"(tolerance {tol.convexity_rel:.3g})")
    graph = build_interaction_graph(cluster)
    edges = graph.edges
    case = _case_label(k, len(edges))
    out = Classification(k, case, CASE_CONFIGURATION[case], interaction_edges=edges, convexity=convexity)
    failed = out.failed

    # surface fits
    sphere_radii = []
    present = sorted({(int(a), int(b)) for a, b in mesh.labels})
    for pair in present:
        if pair[0] == 0:
            c, r, rms = fit_sphere(mesh.vertices[_sheet_vertices(mesh, pair)])
            out.fits["%d_%d" % pair] = SurfaceFit("sphere", rms, rms / r, center=c.tolist(), radius=r)
            sphere_radii.append(r)
            if rms / r > tol.sphere_fit_rel:
                failed.append(f"sphere_fit_{pair[0]}_{pair[1]}")
    r_ref = min(sphere_radii) if sphere_radii else cluster.equivalent_radius()
    for pair in present:
        if pair[0] != 0:
            p, n, rms = fit_plane(mesh.vertices[_sheet_vertices(mesh, pair)])
            n = _oriented_plane_normal(mesh, pair, n)
            out.fits["%d_%d" % pair] = SurfaceFit("plane", rms, rms / r_ref, normal=n.tolist(), point=p.tolist())
            if rms / r_ref > tol.plane_fit_rel:
                failed.append(f"plane_fit_{pair[0]}_{pair[1]}")

    # junction angles
    medians = []
    for curve in extract_junction_curves(mesh):
        medians += junction_angles(mesh, curve).medians()
    out.junction_medians_deg = medians
    out.angle_pass = all(abs(m - 120.0) <= tol.angle_deg for m in medians)
    if not out.angle_pass:
        failed.append("junction_angles")
    if edges and not medians:
        failed.append("junction_curves")

    # equal multipliers within each interacting group
    fit = fit_multipliers_raw(mesh, k)
    out.lambdas = [float(x) for x in fit.lambdas]
    for comp in _components(k, edges):
        if len(comp) < 2:
            continue
        lam = [out.lambdas[i - 1] for i in sorted(comp)]
        spread = (max(lam) - min(lam)) / (abs(float(np.mean(lam))) or 1.0)
        out.lambda_spread = max(out.lambda_spread, spread)
        if spread > tol.multiplier_rel:
            failed.append("equal_multipliers_" + "_".join(str(i) for i in sorted(comp)))

    # non-interacting pairs: no overlap, tangency flag
    overlapping = set(map(tuple, check_non_overlap(cluster)))
    for i, j in itertools.combinations(range(1, k + 1), 2):
        if (i, j) in edges:
            continue
        if (i, j) in overlapping or (j, i) in overlapping:
            failed.append(f"overlap_{i}_{j}")
        dist = boundary_distance(mesh, i, j)
        out.tangency_flags["%d_%d" % (i, j)] = bool(dist <= tol.tangency_rel * r_ref)

    # wedge geometry
    if case == 4:
        _check_standard_triple(mesh, out, tol)
    elif case == 3:
        _check_lined_up(mesh, out, tol, graph)
    elif case in ("disjoint", 1, 2):
        out.branch = "tangent" if any(out.tangency_flags.values()) else "disjoint"
    elif case == "double_bubble":
        out.branch = "flat_interface"

    if failed:
        out.configuration = Configuration.UNCLASSIFIED
    if not consistent(out.case_label, out.configuration):  # guarded by construction
        raise AssertionError(f"case {out.case_label} paired with {out.configuration.value}")
    log.info("classified: case %s -> %s%s", case, out.configuration.value, f" (failed {failed})" if failed else "")
    return out


def _check_standard_triple(mesh: LabeledMesh, out: Classification, tol) -> None:
    normals = {p: np.asarray(out.fits["%d_%d" % p].normal) for p in ((1, 2), (1, 3), (2, 3))}
    line_dir = np.cross(normals[(1, 2)], normals[(2, 3)])
    line_dir /= np.linalg.norm(line_dir)
    # a point on the common line: least squares over the three planes
    a = np.array([normals[p] for p in normals])
    b = np.array([normals[p] @ np.asarray(out.fits["%d_%d" % p].point) for p in normals])
    point = np.linalg.lstsq(np.vstack([a, line_dir]), np.append(b, 0.0), rcond=None)[0]
    dirs = {p: _half_plane_direction(mesh, p, point, line_dir) for p in normals}
    wedges = []
    for cell in (1, 2, 3):
        bounding = [p for p in normals if cell in p]
        u, v = dirs[bounding[0]], dirs[bounding[1]]
        wedges.append(math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v)))
    out.wedge_angles_deg = [math.degrees(w) for w in wedges]
    out.branch = "wedge_120"
    if not angle_sum_witness(wedges, tol=1e-9 + 1e-9 * sum(wedges)):
        out.failed.append("wedge_angle_sum")
    if any(abs(w - 120.0) > tol.wedge_deg for w in out.wedge_angles_deg):
        out.failed.append("wedge_angles")


def _check_lined_up(mesh: LabeledMesh, out: Classification, tol, graph) -> None:
    middle = next(i for i in (1, 2, 3) if graph.degree(i) == 2)
    left, right = [e for e in graph.edges if middle in e]
    outward = []
    for pair in (left, right):
        n = np.asarray(out.fits["%d_%d" % pair].normal)
        # face normals point from the lower label into the higher one
        outward.append(-n if pair[1] == middle else n)
    cos = float(np.clip(outward[0] @ outward[1], -1.0, 1.0))
    wedge = 180.0 - math.degrees(math.acos(cos))
    out.wedge_angles_deg = [wedge]
    if wedge <= tol.wedge_deg:
        out.branch = "parallel"
    elif abs(wedge - 60.0) <= tol.wedge_deg:
        out.branch = "point_contact"
    elif wedge < 60.0:
        out.branch = "non_parallel"
    else:
        out.branch = None
        out.failed.append("wedge_angle_above_60")
