"""Labeled non-manifold triangle meshes, clusters and their measures.

Each face is stored once and carries the unordered pair ``(i, j)``, ``i < j``, of
regions it separates; region 0 is the exterior.  Orientation convention: the
right-handed face normal points from region ``i`` into region ``j``, i.e. it is
the outward normal of the lower-indexed region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import InvalidValence, MeshError, OpenSurface, OrientationError


@dataclass(frozen=True)
class ToleranceProfile:
    """Numeric tolerances used by verification and classification.

    The angle, multiplier and residual entries hold at ``reference_h_over_r``
    and grow linearly with the mesh size (see :meth:`scaled`).  Convexity is
    exact for meshes whose vertices lie on convex pieces; relaxed meshes
    deviate from their smooth limit by O(h^2), which ``convexity_h2`` allows.
    """

    name: str = "default"
    angle_deg: float = 1.0
    multiplier_rel: float = 0.02
    residual_rel: float = 0.02
    wedge_deg: float = 0.5
    sphere_fit_rel: float = 0.005
    plane_fit_rel: float = 0.005
    volume_rel: float = 0.005
    convexity_rel: float = 1e-6
    convexity_h2: float = 0.25
    tangency_rel: float = 1e-3
    interaction_rel: float = 1e-6
    flat_deg: float = 2.0
    reference_h_over_r: float = 1.0 / 20.0

    def scaled(self, h_over_r: float) -> "ToleranceProfile":
        """Profile for a mesh of relative size ``h_over_r`` (never tighter than the base)."""
        factor = max(1.0, float(h_over_r) / self.reference_h_over_r)
        return replace(
            self,
            convexity_rel=max(self.convexity_rel, self.convexity_h2 * float(h_over_r) ** 2),
            angle_deg=self.angle_deg * factor,
            multiplier_rel=self.multiplier_rel * factor,
            residual_rel=self.residual_rel * factor,
            wedge_deg=self.wedge_deg * factor,
            sphere_fit_rel=self.sphere_fit_rel * factor,
            plane_fit_rel=self.plane_fit_rel * factor,
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


TOLERANCE_PROFILES = {
    "default": ToleranceProfile(),
    "strict": ToleranceProfile(
        name="strict", angle_deg=0.5, multiplier_rel=0.01, residual_rel=0.01, wedge_deg=0.25,
        sphere_fit_rel=0.0025, plane_fit_rel=0.0025, volume_rel=0.0025, convexity_h2=0.1,
    ),
    "loose": ToleranceProfile(
        name="loose", angle_deg=3.0, multiplier_rel=0.06, residual_rel=0.06, wedge_deg=1.5,
        sphere_fit_rel=0.015, plane_fit_rel=0.015, volume_rel=0.015, convexity_rel=1e-3, convexity_h2=1.0,
    ),
}


def tolerance_profile(name: str) -> ToleranceProfile:
    try:
        return TOLERANCE_PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown tolerance profile {name!r}; known: {sorted(TOLERANCE_PROFILES)}") from None


def fsum_rows(values: np.ndarray) -> np.ndarray:
    """Compensated column sums of a 2-D array (deterministic, order independent)."""
    values = np.asarray(values, dtype=float)
    return np.array([math.fsum(values[:, c]) for c in range(values.shape[1])])


@dataclass
class JunctionCurve:
    vertices: list[int]
    labels: tuple[tuple[int, int], ...]
    closed: bool

    @property
    def edges(self) -> list[tuple[int, int]]:
        v = self.vertices
        return [(v[a], v[a + 1]) for a in range(len(v) - 1)]

    def length(self, vertices: np.ndarray) -> float:
        p = vertices[self.vertices]
        return math.fsum(np.linalg.norm(np.diff(p, axis=0), axis=1))


class LabeledMesh:
    """Triangle mesh whose faces carry region-pair labels."""

    def __init__(self, vertices, faces, labels):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1, 2)
        if len(labels) != len(self.faces):
            raise MeshError("one label pair per face required")
        if np.any(labels[:, 0] == labels[:, 1]):
            raise MeshError("a face cannot separate a region from itself")
        if np.any(labels < 0):
            raise MeshError("region labels must be non-negative")
        swap = labels[:, 0] > labels[:, 1]
        if np.any(swap):
            # normalizing the label order flips the side the normal points to
            labels = np.where(swap[:, None], labels[:, ::-1], labels)
            self.faces = self.faces.copy()
            self.faces[swap] = self.faces[swap][:, ::-1]
        self.labels = np.ascontiguousarray(labels)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face refers to a missing vertex")

    def copy(self) -> "LabeledMesh":
        return LabeledMesh(self.vertices.copy(), self.faces.copy(), self.labels.copy())

    def with_vertices(self, vertices: np.ndarray) -> "LabeledMesh":
        """Same connectivity, new positions (topology caches are shared)."""
        new = LabeledMesh.__new__(LabeledMesh)
        new.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 3)
        new.faces = self.faces
        new.labels = self.labels
        for key in ("_edge_data", "junction_edge_labels", "region_ids"):
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    def __repr__(self) -> str:
        return f"LabeledMesh(vertices={len(self.vertices)}, faces={len(self.faces)}, regions={self.region_ids})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def region_ids(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i > 0]

    @property
    def k(self) -> int:
        return max(self.region_ids, default=0)

    @cached_property
    def _edge_data(self):
        f = self.faces
        a = f.reshape(-1)
        b = f[:, [1, 2, 0]].reshape(-1)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keys = lo * (len(self.vertices) + 1) + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        edges = np.stack([uniq // (len(self.vertices) + 1), uniq % (len(self.vertices) + 1)], axis=1)
        face_of_halfedge = np.repeat(np.arange(len(f)), 3)
        return edges, inverse, counts, face_of_halfedge

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def edge_valence(self) -> np.ndarray:
        return self._edge_data[2]

    def edge_faces(self) -> list[list[int]]:
        edges, inverse, counts, fh = self._edge_data
        order = np.argsort(inverse, kind="stable")
        splits = np.cumsum(counts)[:-1]
        return [list(x) for x in np.split(fh[order], splits)]

    @cached_property
    def junction_edge_labels(self) -> dict[tuple[int, int], tuple[tuple[int, int], ...]]:
        """Edges incident to three or more faces, with their incident label pairs."""
        edges, inverse, counts, fh = self._edge_data
        out = {}
        idx = np.nonzero(counts >= 3)[0]
        if len(idx) == 0:
            return out
        order = np.argsort(inverse, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for e in idx:
            faces = fh[order[starts[e]: starts[e] + counts[e]]]
            labs = tuple(sorted({(int(self.labels[q, 0]), int(self.labels[q, 1])) for q in faces}))
            out[(int(edges[e, 0]), int(edges[e, 1]))] = labs
        return out

    @property
    def junction_edges(self) -> list[tuple[int, int]]:
        return list(self.junction_edge_labels)

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        return 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)

    def face_normals(self) -> np.ndarray:
        """Unit normals following the labeling orientation convention."""
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    def total_area(self) -> float:
        return math.fsum(self.face_areas())

    def mean_edge_length(self) -> float:
        e = self.edges
        if len(e) == 0:
            return 0.0
        return float(np.mean(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    def region_mask(self, region: int) -> np.ndarray:
        return (self.labels[:, 0] == region) | (self.labels[:, 1] == region)

    def region_faces(self, region: int) -> np.ndarray:
        """Boundary faces of ``region`` oriented with the outward normal."""
        mask = self.region_mask(region)
        faces = self.faces[mask].copy()
        inward = self.labels[mask, 1] == region
        faces[inward] = faces[inward][:, ::-1]
        return faces

    def region_vertices(self, region: int) -> np.ndarray:
        return np.unique(self.faces[self.region_mask(region)])

    def check_closed(self, region: int) -> None:
        faces = self.region_faces(region)
        if len(faces) == 0:
            raise OpenSurface(f"region {region} has no boundary faces")
        a = faces.reshape(-1)
        b = faces[:, [1, 2, 0]].reshape(-1)
        n = len(self.vertices) + 1
        if np.array_equal(np.sort(a * n + b), np.sort(b * n + a)):
            return
        _, cnt = np.unique(np.minimum(a, b) * n + np.maximum(a, b), return_counts=True)
        if np.any(cnt % 2):
            raise OpenSurface(f"region {region} boundary has {int(np.sum(cnt % 2))} boundary edges")
        raise OrientationError(f"region {region} boundary faces are inconsistently oriented")

    def validate(self) -> None:
        """Check the cluster-mesh invariants; raise on the first violation."""
        val = self.edge_valence
        bad = np.nonzero((val != 2) & (val != 3))[0]
        if len(bad):
            e = self.edges[bad[0]]
            raise InvalidValence(f"edge ({e[0]}, {e[1]}) has {val[bad[0]]} incident faces")
        n = len(self.vertices)
        srt = np.sort(self.faces, axis=1)
        key = (srt[:, 0] * n + srt[:, 1]) * n + srt[:, 2]
        if len(np.unique(key)) != len(key):
            raise MeshError("duplicate faces")
        for region in self.region_ids:
            self.check_closed(region)
        if len(self.faces) and np.any(self.face_areas() == 0.0):
            raise MeshError("zero-area face present")

    def transformed(self, rotation=None, translation=None, scale: float = 1.0) -> "LabeledMesh":
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return self.with_vertices(v)

    def relabeled(self, mapping: dict[int, int]) -> "LabeledMesh":
        """Apply a region relabeling; faces whose two sides merge are dropped."""
        lab = np.vectorize(lambda x: mapping.get(int(x), int(x)), otypes=[np.int64])(self.labels)
        keep = lab[:, 0] != lab[:, 1]
        return LabeledMesh(self.vertices, self.faces[keep], lab[keep])


def compute_volume(mesh: LabeledMesh, region: int) -> float:
    """Enclosed volume of ``region`` by the divergence theorem (exact for polyhedra)."""
    if region < 1:
        raise ValueError("volume is defined for regions 1..k")
    mesh.check_closed(region)
    faces = mesh.region_faces(region)
    idx = np.unique(faces)
    ref = mesh.vertices[idx].mean(axis=0)
    v = mesh.vertices - ref
    p0, p1, p2 = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
    dets = np.einsum("ij,ij->i", p0, np.cross(p1, p2))
    return math.fsum(dets) / 6.0


def interface_area(mesh: LabeledMesh, pair) -> float:
    i, j = sorted(int(x) for x in pair)
    mask = (mesh.labels[:, 0] == i) & (mesh.labels[:, 1] == j)
    if not np.any(mask):
        return 0.0
    return math.fsum(mesh.face_areas()[mask])


@dataclass
class InteractionGraph:
    k: int
    pair_areas: np.ndarray
    threshold: float

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Interacting region pairs, 1-based."""
        out = []
        for i in range(self.k):
            for j in range(i + 1, self.k):
                if self.pair_areas[i, j] > self.threshold:
                    out.append((i + 1, j + 1))
        return out

    def degree(self, region: int) -> int:
        return sum(region in e for e in self.edges)

    def to_dict(self) -> dict:
        return {"k": self.k, "pair_areas": self.pair_areas.tolist(), "threshold": self.threshold, "edges": [list(e) for e in self.edges]}


@dataclass
class Cluster:
    mesh: LabeledMesh
    target_volumes: list[float]
    tolerance_profile: ToleranceProfile = field(default_factory=ToleranceProfile)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.target_volumes = [float(v) for v in self.target_volumes]
        if any(v <= 0 for v in self.target_volumes):
            raise ValueError("target volumes must be positive")

    @property
    def k(self) -> int:
        return len(self.target_volumes)

    def volumes(self) -> list[float]:
        return [compute_volume(self.mesh, i) for i in range(1, self.k + 1)]

    def volume_errors(self) -> list[float]:
        return [(v - t) / t for v, t in zip(self.volumes(), self.target_volumes)]

    def equivalent_radius(self) -> float:
        """Radius of the ball with the smallest target volume."""
        return (3.0 * min(self.target_volumes) / (4.0 * math.pi)) ** (1.0 / 3.0)

    def scaled_tolerances(self) -> ToleranceProfile:
        h = self.mesh.mean_edge_length()
        r = self.metadata.get("radius") or self.equivalent_radius()
        return self.tolerance_profile.scaled(h / r)

    def with_mesh(self, mesh: LabeledMesh) -> "Cluster":
        return Cluster(mesh, list(self.target_volumes), self.tolerance_profile, dict(self.metadata))


def build_interaction_graph(cluster: Cluster, threshold: float | None = None) -> InteractionGraph:
    """Pairwise interface areas between regions 1..k, thresholded into a graph."""
    mesh = cluster.mesh
    k = cluster.k
    if threshold is None:
        threshold = cluster.tolerance_profile.interaction_rel * mesh.total_area()
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    areas = np.zeros((k, k))
    face_areas = mesh.face_areas()
    for i in range(1, k + 1):
        for j in range(i + 1, k + 1):
            mask = (mesh.labels[:, 0] == i) & (mesh.labels[:, 1] == j)
            a = math.fsum(face_areas[mask]) if np.any(mask) else 0.0
            areas[i - 1, j - 1] = areas[j - 1, i - 1] = a
    return InteractionGraph(k, areas, float(threshold))


def extract_junction_curves(mesh: LabeledMesh) -> list[JunctionCurve]:
    """Chains of valence-3 edges, split at vertices where the chains branch."""
    if np.any(mesh.edge_valence > 3):
        e = mesh.edges[np.argmax(mesh.edge_valence)]
        raise InvalidValence(f"edge ({e[0]}, {e[1]}) has more than 3 incident faces")
    jl = mesh.junction_edge_labels
    if not jl:
        return []
    adj: dict[int, list[int]] = {}
    for a, b in sorted(jl):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for nbrs in adj.values():
        nbrs.sort()
    used: set[tuple[int, int]] = set()

    def key(a, b):
        return (a, b) if a < b else (b, a)

    curves = []

    def walk(start, nxt):
        path = [start, nxt]
        used.add(key(start, nxt))
        labs = set(jl[key(start, nxt)])
        prev, cur = start, nxt
        while len(adj[cur]) == 2 and cur != start:
            cand = [w for w in adj[cur] if key(cur, w) not in used]
            if not cand:
                break
            w = cand[0]
            used.add(key(cur, w))
            labs |= set(jl[key(cur, w)])
            path.append(w)
            prev, cur = cur, w
        return path, labs

    branch = sorted(v for v, n in adj.items() if len(n) != 2)
    for v in branch:
        for w in adj[v]:
            if key(v, w) in used:
                continue
            path, labs = walk(v, w)
            curves.append(JunctionCurve(path, tuple(sorted(labs)), closed=path[0] == path[-1]))
    for v in sorted(adj):
        for w in adj[v]:
            if key(v, w) in used:
                continue
            path, labs = walk(v, w)
            curves.append(JunctionCurve(path, tuple(sorted(labs)), closed=True))
    return curves


def points_inside_closed_mesh(points: np.ndarray, vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Generalized winding number test (|w| > 1/2 means inside)."""
    points = np.asarray(points, dtype=float)
    w = np.zeros(len(points))
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    chunk = max(1, 2_000_000 // max(len(faces), 1))
    for s in range(0, len(points), chunk):
        p = points[s: s + chunk, None, :]
        ra, rb, rc = a[None] - p, b[None] - p, c[None] - p
        la, lb, lc = (np.linalg.norm(x, axis=2) for x in (ra, rb, rc))
        num = np.einsum("pfi,pfi->pf", ra, np.cross(rb, rc))
        den = (la * lb * lc + np.einsum("pfi,pfi->pf", ra, rb) * lc
               + np.einsum("pfi,pfi->pf", rb, rc) * la + np.einsum("pfi,pfi->pf", rc, ra) * lb)
        w[s: s + chunk] = np.arctan2(num, den).sum(axis=1) / (2 * np.pi)
    return np.abs(w) > 0.5


def check_non_overlap(cluster: Cluster, samples: int = 400, seed: int = 0) -> list[tuple[int, int]]:
    """Region pairs (i, j) where sampled surface points of i lie inside j.

    Vertices on the boundary of ``j`` are skipped, so shared interfaces and
    tangency points never count as penetration.
    """
    mesh = cluster.mesh
    rng = np.random.default_rng(seed)
    bad = []
    for j in range(1, cluster.k + 1):
        faces_j = mesh.region_faces(j)
        on_j = np.zeros(len(mesh.vertices), dtype=bool)
        on_j[np.unique(faces_j)] = True
        for i in range(1, cluster.k + 1):
            if i == j:
                continue
            face_idx = np.nonzero(mesh.region_mask(i))[0]
            # face centroids avoid the ambiguity of vertices lying exactly on j's surface
            f = mesh.faces[face_idx]
            keep = ~np.all(on_j[f], axis=1)
            f = f[keep]
            if len(f) == 0:
                continue
            if len(f) > samples:
                f = f[np.sort(rng.choice(len(f), samples, replace=False))]
            pts = mesh.vertices[f].mean(axis=1)
            if np.any(points_inside_closed_mesh(pts, mesh.vertices, faces_j)):
                bad.append((i, j))
    return bad
