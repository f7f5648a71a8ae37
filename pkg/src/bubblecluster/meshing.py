"""Patch meshing with exactly shared boundary curves.

Every catalogue configuration is a union of spherical patches, planar
patches and surfaces of revolution whose boundaries are circle arcs and
segments.  Boundary curves are sampled once; patches are triangulated
against the shared samples, so junction vertices coincide by index.

Spherical patches are triangulated in the stereographic image taken from a
pole outside the patch.  Stereographic projection maps circles to circles,
so the planar Delaunay triangulation of the image is the spherical Delaunay
triangulation of the samples.

Patches are meshed coarsely and the whole cluster is then refined with
``refine_projected`` onto exact surface and curve carriers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshingError
from .geometry import LabeledMesh

def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def orthonormal_frame(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed frame (e1, e2, n) with n along ``normal``."""
    n = unit(normal)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(helper - n * (helper @ n))
    return e1, np.cross(n, e1), n


def rotation_between(a, b) -> np.ndarray:
    """Rotation matrix taking unit vector ``a`` to unit vector ``b``."""
    a, b = unit(a), unit(b)
    v = np.cross(a, b)
    c = float(a @ b)
    if c < -1.0 + 1e-12:
        e1, _, _ = orthonormal_frame(a)
        return 2.0 * np.outer(e1, e1) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    k = unit(axis)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * kx @ kx


def icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere by repeated midpoint subdivision; faces oriented outward."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [unit(p) for p in verts]
    f = list(faces)
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                cache[key] = len(v)
                v.append(unit(v[a] + v[b]))
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return np.array(v), np.array(f, dtype=np.int64)


def icosphere_level_for(radius: float, h: float) -> int:
    """Smallest subdivision level whose mean edge is at most about ``h``."""
    level = 0
    while 1.05146 * radius / 2 ** level > h * 1.15 and level < 8:
        level += 1
    return max(level, 1)


def geodesic_sphere_points(freq: int) -> np.ndarray:
    """Vertices of the frequency-``freq`` geodesic sphere (icosahedron faces split into freq^2)."""
    v, f = icosphere(0)
    out = []
    ij = [(i, j) for i in range(freq + 1) for j in range(freq + 1 - i)]
    w = np.array(ij, dtype=float) / freq
    for a, b, c in f:
        pts = v[a] + w[:, :1] * (v[b] - v[a]) + w[:, 1:] * (v[c] - v[a])
        out.append(pts)
    pts = np.concatenate(out)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    _, keep = np.unique(np.round(pts, 9), axis=0, return_index=True)
    return pts[np.sort(keep)]


def hex_lattice(half_width: float, h: float) -> np.ndarray:
    m = int(math.ceil(half_width / h)) + 1
    rows = int(math.ceil(half_width / (h * math.sqrt(3) / 2))) + 1
    out = []
    for j in range(-rows, rows + 1):
        y = j * h * math.sqrt(3) / 2
        shift = 0.5 * h if j % 2 else 0.0
        xs = np.arange(-m, m + 1) * h + shift
        out.append(np.stack([xs, np.full_like(xs, y)], axis=1))
    return np.concatenate(out)


def circle_arc(center, e1, e2, radius: float, phi0: float, phi1: float, h: float,
               min_segments: int = 3, include_end: bool = True) -> np.ndarray:
    """Points ``center + radius (cos t e1 + sin t e2)`` for t from phi0 to phi1."""
    n = max(min_segments, int(math.ceil(abs(phi1 - phi0) * radius / h)))
    t = np.linspace(phi0, phi1, n + 1)
    if not include_end:
        t = t[:-1]
    return center + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)


def segment(p, q, h: float, min_segments: int = 1) -> np.ndarray:
    p, q = np.asarray(p, float), np.asarray(q, float)
    n = max(min_segments, int(math.ceil(np.linalg.norm(q - p) / h)))
    t = np.linspace(0.0, 1.0, n + 1)
    return p + t[:, None] * (q - p)


class MeshBuilder:
    """Accumulates vertices and labeled faces of a cluster mesh."""

    def __init__(self):
        self._verts: list[np.ndarray] = []
        self._n = 0
        self._faces: list[np.ndarray] = []
        self._labels: list[np.ndarray] = []

    @property
    def vertices(self) -> np.ndarray:
        return np.concatenate(self._verts) if self._verts else np.zeros((0, 3))

    def add_vertices(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        idx = np.arange(self._n, self._n + len(pts))
        self._verts.append(pts)
        self._n += len(pts)
        return idx

    def add_faces(self, faces, label: tuple[int, int], normal_hint=None) -> None:
        """Add faces with label ``(i, j)``; orient them along ``normal_hint``.

        ``normal_hint(centroids) -> directions`` gives, per face, a vector the
        stored normal (pointing from region i into region j) must agree with.
        """
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        i, j = label
        if i > j:
            i, j = j, i
            hint = normal_hint
            normal_hint = (lambda c, _h=hint: -_h(c)) if hint is not None else None
        if normal_hint is not None and len(faces):
            v = self.vertices
            a, b, c = v[faces[:, 0]], v[faces[:, 1]], v[faces[:, 2]]
            n = np.cross(b - a, c - a)
            want = normal_hint((a + b + c) / 3.0)
            flip = np.einsum("ij,ij->i", n, want) < 0
            faces = faces.copy()
            faces[flip] = faces[flip][:, ::-1]
        self._faces.append(faces)
        self._labels.append(np.tile([i, j], (len(faces), 1)))

    def build(self) -> LabeledMesh:
        return LabeledMesh(self.vertices, np.concatenate(self._faces), np.concatenate(self._labels))


def _points_in_loops(pts2: np.ndarray, loops2: list[np.ndarray]) -> np.ndarray:
    """Even-odd rule over closed polygons (crossing-number test)."""
    inside = np.zeros(len(pts2), dtype=bool)
    x, y = pts2[:, 0][:, None], pts2[:, 1][:, None]
    for poly in loops2:
        a = poly
        b = np.roll(poly, -1, axis=0)
        ax, ay, bx, by = a[:, 0][None], a[:, 1][None], b[:, 0][None], b[:, 1][None]
        cond = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (y - ay) * (bx - ax) / (by - ay)
        cross = cond & (x < xint)
        inside ^= (np.count_nonzero(cross, axis=1) % 2).astype(bool)
    return inside


def _triangulate_image(all2: np.ndarray, loops_local: list[np.ndarray], n_boundary: int) -> np.ndarray:
    """Delaunay triangulation of 2-D points restricted to the loop domain."""
    tri = Delaunay(all2)
    simp = tri.simplices
    cent = all2[simp].mean(axis=1)
    loops2 = [all2[l] for l in loops_local]
    keep = _points_in_loops(cent, loops2)
    simp = simp[keep]
    a, b, c = all2[simp[:, 0]], all2[simp[:, 1]], all2[simp[:, 2]]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    return simp[np.abs(area2) > 0]


def _check_patch(faces_local: np.ndarray, loops_local: list[np.ndarray], what: str) -> None:
    e = np.concatenate([faces_local[:, [0, 1]], faces_local[:, [1, 2]], faces_local[:, [2, 0]]])
    e = np.sort(e, axis=1).astype(np.int64)
    keys, counts = np.unique(e[:, 0] * 10_000_000 + e[:, 1], return_counts=True)
    cnt = dict(zip(keys.tolist(), counts.tolist()))
    bkeys = set()
    for loop in loops_local:
        nxt = np.roll(loop, -1)
        for a, b in zip(loop.tolist(), nxt.tolist()):
            if a == b:
                continue
            k = min(a, b) * 10_000_000 + max(a, b)
            bkeys.add(k)
            if cnt.get(k, 0) != 1:
                raise MeshingError(f"{what}: boundary edge ({a}, {b}) used {cnt.get(k, 0)} times")
    for k, c in cnt.items():
        if k not in bkeys and c != 2:
            raise MeshingError(f"{what}: interior edge used {c} times")


def _prepare_loops(builder_vertices: np.ndarray, loops: list[np.ndarray]):
    """Unique global indices on the loops and the loops in local numbering."""
    loops = [np.asarray(l, dtype=np.int64) for l in loops]
    # drop a repeated closing vertex
    loops = [l[:-1] if len(l) > 1 and l[0] == l[-1] else l for l in loops]
    glob = np.unique(np.concatenate(loops))
    lookup = {g: n for n, g in enumerate(glob.tolist())}
    local = [np.array([lookup[g] for g in l.tolist()]) for l in loops]
    return glob, local, builder_vertices[glob]


# Lattice points within SMOOTH_BAND * h of a patch boundary get a few passes
# of umbrella smoothing, which evens out the triangles the lattice leaves
# against the boundary samples.
SMOOTH_ITERATIONS = 5
SMOOTH_BAND = 4.0


def _smooth_band(fixed, loops_local, free, movable, project, reproject, inside, iterations):
    """Umbrella smoothing of the ``movable`` free points, retriangulating each pass."""
    nf = len(fixed)
    pts = np.concatenate([fixed, free])
    move = nf + np.nonzero(movable)[0]
    for _ in range(iterations):
        simp = _triangulate_image(project(pts), loops_local, nf)
        e = np.concatenate([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        acc = np.zeros_like(pts)
        cnt = np.zeros(len(pts))
        np.add.at(acc, e[:, 0], pts[e[:, 1]])
        np.add.at(acc, e[:, 1], pts[e[:, 0]])
        np.add.at(cnt, e[:, 0], 1.0)
        np.add.at(cnt, e[:, 1], 1.0)
        target = acc[move] / np.maximum(cnt[move], 1.0)[:, None]
        new = reproject(0.5 * (pts[move] + target))
        ok = inside(new)
        pts[move[ok]] = new[ok]
    return pts[nf:]


def _mesh_patch(builder, loops, h, label, normal_hint, project, reproject, lattice_pts, margin, what):
    glob, loops_local, bpts = _prepare_loops(builder.vertices, loops)
    b2 = project(bpts)
    loops2 = [b2[l] for l in loops_local]

    def inside(q):
        return _points_in_loops(project(q), loops2)

    cand = lattice_pts
    if len(cand):
        cand = cand[inside(cand)]
    if len(cand):
        dist, _ = cKDTree(bpts).query(cand)
        cand = cand[dist > margin * h]
    if len(cand) and SMOOTH_ITERATIONS:
        dist, _ = cKDTree(bpts).query(cand)
        cand = _smooth_band(bpts, loops_local, cand, dist < SMOOTH_BAND * h, project, reproject, inside,
                            SMOOTH_ITERATIONS)
    new_pts = cand
    all2 = np.concatenate([b2, project(new_pts)]) if len(new_pts) else b2
    simp = _triangulate_image(all2, loops_local, len(b2))
    _check_patch(simp, loops_local, f"{what} {label}")
    new_idx = builder.add_vertices(new_pts)
    faces = np.concatenate([glob, new_idx])[simp]
    builder.add_faces(faces, label, normal_hint)
    return new_idx


def sphere_patch(builder: MeshBuilder, center, radius: float, pole, loops: list[np.ndarray], h: float,
                 label: tuple[int, int], normal_hint, margin: float = 0.55) -> np.ndarray:
    """Mesh the part of a sphere bounded by ``loops`` (global vertex indices).

    ``pole`` is a unit direction from the center to a sphere point outside the
    patch.  Interior samples come from a geodesic sphere lattice of spacing
    about ``h``.  Returns the global indices of the new vertices.
    """
    center = np.asarray(center, float)
    pole = unit(pole)
    e1, e2, _ = orthonormal_frame(pole)

    def project(p):
        u = (p - center) / radius
        d = np.maximum(1.0 - u @ pole, 1e-300)
        return np.stack([(u @ e1) / d, (u @ e2) / d], axis=1)

    def reproject(p):
        d = p - center
        return center + radius * d / np.linalg.norm(d, axis=1, keepdims=True)

    # geodesic lattice with mean edge about h; one lattice vertex at the patch center
    freq = max(1, int(round(1.05146 * radius / h / 1.1)))
    lattice = geodesic_sphere_points(freq)
    lattice = lattice @ rotation_between(lattice[0], -pole).T
    lattice = lattice[lattice @ pole < 1.0 - 1e-9]
    return _mesh_patch(builder, loops, h, label, normal_hint, project, reproject, center + radius * lattice,
                       margin, "sphere patch")


def plane_patch(builder: MeshBuilder, origin, normal, loops: list[np.ndarray], h: float,
                label: tuple[int, int], normal_hint, margin: float = 0.55) -> np.ndarray:
    """Mesh a planar region bounded by ``loops`` with a hexagonal interior lattice."""
    origin = np.asarray(origin, float)
    e1, e2, n = orthonormal_frame(normal)
    bpts = builder.vertices[np.unique(np.concatenate([np.asarray(l) for l in loops]))]
    extent = np.abs(bpts - origin).max()
    if np.abs((bpts - origin) @ n).max() > 1e-9 * max(1.0, extent):
        raise MeshingError("planar patch boundary is not planar")

    def project(p):
        return np.stack([(p - origin) @ e1, (p - origin) @ e2], axis=1)

    def reproject(p):
        return p - np.outer((p - origin) @ n, n)

    lat = hex_lattice(float(np.abs(project(bpts)).max()), h)
    lat3 = origin + lat[:, :1] * e1 + lat[:, 1:2] * e2
    return _mesh_patch(builder, loops, h, label, normal_hint, project, reproject, lat3, margin,
                       "plane patch")


def ring_band(builder: MeshBuilder, rows: list[np.ndarray], label: tuple[int, int], normal_hint) -> None:
    """Triangulate a band between consecutive rings of equal size.

    ``rows[m]`` holds global indices of ring m; ring m + 1 is expected to be
    rotated by half a step relative to ring m (staggered rows).
    """
    faces = []
    for lo, hi in zip(rows[:-1], rows[1:]):
        n = len(lo)
        if len(hi) != n:
            raise MeshingError("ring band rows must have equal length")
        for j in range(n):
            j1 = (j + 1) % n
            faces.append((lo[j], lo[j1], hi[j]))
            faces.append((lo[j1], hi[j1], hi[j]))
    builder.add_faces(np.array(faces), label, normal_hint)


# ---------------------------------------------------------------------------
# exact carriers and projected uniform refinement
#
# The patch mesher above produces irregular connectivity next to boundaries,
# and the cotangent area gradient does not converge pointwise on irregular
# stencils.  Catalogue meshes are therefore built coarse and refined
# uniformly: every coarse triangle is split into n^2 triangles whose vertices
# are placed on the exact surfaces and junction curves.  The result is a
# piecewise-smooth image of a regular lattice, with irregular stencils only
# at the coarse vertices.


class SphereCarrier:
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, float)
        self.radius = float(radius)

    def project(self, p: np.ndarray) -> np.ndarray:
        d = p - self.center
        return self.center + self.radius * d / np.linalg.norm(d, axis=-1, keepdims=True)

    def distance(self, p: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(p - self.center, axis=-1) - self.radius)


class PlaneCarrier:
    def __init__(self, point, normal):
        self.point = np.asarray(point, float)
        self.normal = unit(normal)

    def project(self, p: np.ndarray) -> np.ndarray:
        return p - np.multiply.outer((p - self.point) @ self.normal, self.normal)

    def distance(self, p: np.ndarray) -> np.ndarray:
        return np.abs((p - self.point) @ self.normal)


class CircleCarrier:
    def __init__(self, center, normal, radius: float):
        self.center = np.asarray(center, float)
        self.normal = unit(normal)
        self.radius = float(radius)

    def project(self, p: np.ndarray) -> np.ndarray:
        q = p - np.multiply.outer((p - self.center) @ self.normal, self.normal) - self.center
        return self.center + self.radius * q / np.linalg.norm(q, axis=-1, keepdims=True)

    def distance(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - self.project(p), axis=-1)


class LineCarrier:
    def __init__(self, point, direction):
        self.point = np.asarray(point, float)
        self.direction = unit(direction)

    def project(self, p: np.ndarray) -> np.ndarray:
        return self.point + np.multiply.outer((p - self.point) @ self.direction, self.direction)

    def distance(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - self.project(p), axis=-1)


class RevolutionCarrier:
    """Surface swept by a profile curve (radius, height) about an axis.

    ``curve(s) -> (radius, height, tangent angle)`` must accept arrays of
    arclengths in ``[s0, s1]``; heights are measured along ``axis`` from
    ``origin``.  Closest points are found from a sampled table and polished
    with Newton steps on the squared meridian distance.
    """

    def __init__(self, origin, axis, curve, s0: float, s1: float, lam: float, samples: int = 2001):
        self.origin = np.asarray(origin, float)
        self.axis = unit(axis)
        self.curve = curve
        self.s0, self.s1, self.lam = float(s0), float(s1), float(lam)
        self._s = np.linspace(s0, s1, samples)
        tab = curve(self._s)
        self._tree = cKDTree(tab[:, :2])

    def _meridian(self, p):
        d = p - self.origin
        z = d @ self.axis
        radial = d - np.multiply.outer(z, self.axis)
        rho = np.linalg.norm(radial, axis=-1)
        return rho, z, radial

    def _closest_s(self, rho, z):
        _, idx = self._tree.query(np.column_stack([rho, z]))
        s = self._s[idx]
        for _ in range(6):
            r, h, psi = self.curve(s).T
            c, sn = np.cos(psi), np.sin(psi)
            g = (r - rho) * c + (h - z) * sn
            kappa = self.lam - sn / r
            gp = 1.0 + kappa * ((h - z) * c - (r - rho) * sn)
            s = np.clip(s - g / np.where(np.abs(gp) > 1e-12, gp, 1.0), self.s0, self.s1)
        return s

    def project(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        rho, z, radial = self._meridian(p)
        r, h, _ = self.curve(self._closest_s(rho, z)).T
        e = radial / np.maximum(rho, 1e-300)[:, None]
        return self.origin + r[:, None] * e + np.multiply.outer(h, self.axis)

    def distance(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(p) - self.project(p), axis=-1)


def refine_projected(mesh: LabeledMesh, n: int, sheets: dict, curves: list, tol: float) -> LabeledMesh:
    """Split every face into n^2 faces placed on exact carriers.

    ``sheets`` maps label pairs to surface carriers; ``curves`` lists the
    carriers of the junction curves.  Junction edges are assigned to the
    curve passing through both end points (within ``tol``).  Edge samples
    are shared by all faces on an edge, so junction vertices stay shared.
    Interior face samples blend the displacements of the three edges from
    their chords before the final projection, which keeps the map smooth
    inside each coarse face.
    """
    if n < 1:
        raise ValueError("refinement frequency must be at least 1")
    if n == 1:
        return mesh
    V = mesh.vertices
    edges = mesh.edges
    edge_index = {(int(a), int(b)): e for e, (a, b) in enumerate(edges.tolist())}
    jlabels = mesh.junction_edge_labels
    face_lists = mesh.edge_faces()
    carriers = []
    for e, (a, b) in enumerate(edges.tolist()):
        if (a, b) in jlabels:
            ends = V[[a, b]]
            dist = [float(np.max(c.distance(ends))) for c in curves]
            if not dist or min(dist) > tol:
                raise MeshingError(f"junction edge ({a}, {b}) lies on no known junction curve")
            carriers.append(curves[int(np.argmin(dist))])
        else:
            lab = mesh.labels[face_lists[e][0]]
            carriers.append(sheets[(int(lab[0]), int(lab[1]))])

    def displacement(e, x, y, t):
        """Carrier offset of the chord point at parameter t from x toward y."""
        chord = V[x] + np.multiply.outer(t, V[y] - V[x])
        return carriers[e].project(chord) - chord

    nv0 = len(V)
    t_edge = np.arange(1, n) / n
    edge_pts = np.empty((len(edges), n - 1, 3))
    for e, (a, b) in enumerate(edges.tolist()):
        edge_pts[e] = V[a] + displacement(e, a, b, t_edge) + np.multiply.outer(t_edge, V[b] - V[a])
    new_vertices = [V, edge_pts.reshape(-1, 3)]
    next_index = nv0 + len(edges) * (n - 1)

    def on_edge(x, y, k):
        """Global index of the sample k/n of the way from vertex x to vertex y."""
        if k == 0:
            return x
        if k == n:
            return y
        if x < y:
            return nv0 + edge_index[(x, y)] * (n - 1) + k - 1
        return nv0 + edge_index[(y, x)] * (n - 1) + (n - k) - 1

    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    mask = (ii > 0) & (jj > 0) & (ii + jj < n)
    ii, jj = ii[mask], jj[mask]
    wb, wc = ii / n, jj / n
    wa = 1.0 - wb - wc
    out_faces, out_labels = [], []
    for f, (face, lab) in enumerate(zip(mesh.faces.tolist(), mesh.labels.tolist())):
        a, b, c = face
        grid = {}
        if len(ii):
            A, B, C = V[a], V[b], V[c]
            lin = np.outer(wa, A) + np.outer(wb, B) + np.outer(wc, C)
            d = np.zeros_like(lin)
            for (x, y, wx, wy) in ((a, b, wa, wb), (a, c, wa, wc), (b, c, wb, wc)):
                e = edge_index[(min(x, y), max(x, y))]
                s = wx + wy
                d += s[:, None] * displacement(e, x, y, wy / s)
            pts = sheets[(lab[0], lab[1])].project(lin + d)
            idx = np.arange(next_index, next_index + len(pts))
            next_index += len(pts)
            new_vertices.append(pts)
            grid = dict(zip(zip(ii.tolist(), jj.tolist()), idx.tolist()))

        def P(i, j):
            if j == 0:
                return on_edge(a, b, i)
            if i == 0:
                return on_edge(a, c, j)
            if i + j == n:
                return on_edge(b, c, j)
            return grid[(i, j)]

        tris = []
        for i in range(n):
            for j in range(n - i):
                tris.append((P(i, j), P(i + 1, j), P(i, j + 1)))
                if i + j <= n - 2:
                    tris.append((P(i + 1, j), P(i + 1, j + 1), P(i, j + 1)))
        out_faces.append(np.array(tris))
        out_labels.append(np.tile(lab, (len(tris), 1)))
    return LabeledMesh(np.concatenate(new_vertices), np.concatenate(out_faces), np.concatenate(out_labels))
