"""Meshed realizations of the stationary convex clusters with one to three regions.

Geometry used throughout (H = sum of principal curvatures, so lam = 2/r):

* A spherical lobe of radius r meets a flat interface at 120 degrees exactly
  when its center lies at distance r/2 from the interface plane.  The
  contact circle then has radius r*sqrt(3)/2.
* Double bubble lobe: ball of radius r minus the cap beyond the plane, with
  volume 4/3 pi r^3 - pi h^2 (3r - h)/3 at h = r/2, i.e. 9 pi r^3 / 8.
* Lined-up triple: middle cell is a ball of the same radius r cut by two
  planes, each at distance r/2 from its center.  Whatever the angle between
  the planes (up to 60 degrees, where the two contact circles touch), the
  removed caps are disjoint and the middle volume is 11 pi r^3 / 12.
* Standard triple: three half-planes at 120 degrees about a line; each cell
  is a ball centered on its wedge bisector at distance r/sqrt(3) from the
  line (distance r/2 from both of its walls).
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate

from . import meshing as M
from .errors import (
    BranchAmbiguity,
    NonEqualVolumes,
    NonPositiveVolume,
    OverlapError,
    ResolutionTooCoarse,
    SpecError,
    TangencyOnInterface,
    VolumeOutOfRange,
)
from .geometry import Cluster, LabeledMesh, tolerance_profile
from .profile import capillary_zone

log = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)


class Kind(str, enum.Enum):
    DISJOINT_BALLS = "disjoint_balls"
    STANDARD_DOUBLE_BUBBLE = "standard_double_bubble"
    BALL_PLUS_DOUBLE_BUBBLE = "ball_plus_double_bubble"
    LINED_UP_TRIPLE = "lined_up_triple"
    STANDARD_TRIPLE = "standard_triple"


VOLUME_COUNTS = {
    Kind.DISJOINT_BALLS: (1, 2, 3),
    Kind.STANDARD_DOUBLE_BUBBLE: (2,),
    Kind.BALL_PLUS_DOUBLE_BUBBLE: (3,),
    Kind.LINED_UP_TRIPLE: (3,),
    Kind.STANDARD_TRIPLE: (3,),
}

PLACEMENT_KEYS = {
    "translation", "rotation",
    "centers", "tangent", "gap", "direction", "contact_point",
    "branch", "opening_deg",
}

LINED_UP_BRANCHES = ("non_parallel", "parallel", "point_contact")


@dataclass
class ConfigurationSpec:
    kind: Kind
    volumes: tuple[float, ...]
    resolution: float
    seed: int = 0
    placement: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.volumes = tuple(float(v) for v in self.volumes)
        self.resolution = float(self.resolution)
        self.seed = int(self.seed)
        self.placement = dict(self.placement or {})
        self.validate()

    def validate(self) -> None:
        if len(self.volumes) not in VOLUME_COUNTS[self.kind]:
            raise SpecError(f"{self.kind.value} takes {VOLUME_COUNTS[self.kind]} volumes, got {len(self.volumes)}")
        if any(not math.isfinite(v) or v <= 0 for v in self.volumes):
            raise NonPositiveVolume(f"volumes must be positive, got {list(self.volumes)}")
        if not math.isfinite(self.resolution) or self.resolution <= 0:
            raise SpecError("resolution must be a positive edge length")
        unknown = set(self.placement) - PLACEMENT_KEYS
        if unknown:
            raise SpecError(f"unknown placement keys: {sorted(unknown)}")
        if self.kind == Kind.STANDARD_DOUBLE_BUBBLE and not _close(self.volumes[0], self.volumes[1]):
            raise NonEqualVolumes(
                "a standard double bubble with a flat interface needs equal volumes; "
                f"got {list(self.volumes)}")
        if self.kind == Kind.BALL_PLUS_DOUBLE_BUBBLE and not _close(self.volumes[0], self.volumes[1]):
            raise NonEqualVolumes("the double bubble part needs equal volumes (V, V, V_ball)")
        if self.kind == Kind.STANDARD_TRIPLE and not (
                _close(self.volumes[0], self.volumes[1]) and _close(self.volumes[0], self.volumes[2])):
            raise NonEqualVolumes(
                "a standard triple bubble is three equal balls intersected with 120 degree wedges, "
                f"so all volumes must be equal; got {list(self.volumes)}")
        if self.kind == Kind.LINED_UP_TRIPLE and not _close(self.volumes[0], self.volumes[2]):
            raise NonEqualVolumes("lined-up triple volumes are (V_outer, V_middle, V_outer) with equal outer volumes")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "volumes": list(self.volumes), "resolution": self.resolution,
             "seed": self.seed}
        if self.placement:
            d["placement"] = self.placement
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ConfigurationSpec":
        if not isinstance(data, dict):
            raise SpecError("configuration must be a JSON object")
        allowed = {"kind", "volumes", "resolution", "seed", "placement"}
        unknown = set(data) - allowed
        if unknown:
            raise SpecError(f"unknown keys: {sorted(unknown)}")
        missing = {"kind", "volumes", "resolution"} - set(data)
        if missing:
            raise SpecError(f"missing keys: {sorted(missing)}")
        try:
            kind = Kind(data["kind"])
        except ValueError:
            raise SpecError(f"unknown kind {data['kind']!r}; expected one of {[k.value for k in Kind]}") from None
        return cls(kind, data["volumes"], data["resolution"], data.get("seed", 0), data.get("placement") or {})

    @classmethod
    def from_json(cls, text: str) -> "ConfigurationSpec":
        return cls.from_dict(json.loads(text))


def _close(a: float, b: float, rel: float = 1e-9) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b))


# ---------------------------------------------------------------------------
# scalar solvers


def bracketed_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
                   max_iter: int = 200) -> float:
    """Bisection on a sign-changing bracket, finished with a secant step."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise ValueError("root is not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    if fhi != flo:
        sec = hi - fhi * (hi - lo) / (fhi - flo)
        if lo <= sec <= hi and abs(f(sec)) <= abs(f(mid)):
            return sec
    return mid


def ball_radius(volume: float) -> float:
    if volume <= 0:
        raise NonPositiveVolume(f"volume must be positive, got {volume}")
    return (3.0 * volume / (4.0 * math.pi)) ** (1.0 / 3.0)


def cap_volume(r: float, height: float) -> float:
    """Volume of the cap of height ``height`` cut from a ball of radius ``r``."""
    return math.pi * height * height * (3.0 * r - height) / 3.0


def lobe_volume(r: float) -> float:
    """Ball of radius r minus the cap beyond a plane at distance r/2 from its center."""
    return 4.0 / 3.0 * math.pi * r ** 3 - cap_volume(r, 0.5 * r)


def _radius_for(volume: float, vol_of_r: Callable[[float], float]) -> float:
    """Solve vol_of_r(r) = volume, with vol_of_r increasing and cubic in r."""
    if volume <= 0:
        raise NonPositiveVolume(f"volume must be positive, got {volume}")
    unit = vol_of_r(1.0)
    guess = (volume / unit) ** (1.0 / 3.0)
    # residual in relative form so the tolerance means the same at every scale
    return bracketed_root(lambda r: vol_of_r(r) / volume - 1.0, 0.5 * guess, 2.0 * guess)


def solve_double_bubble_radius(volume: float) -> float:
    """Radius of the two lobes of a flat-interface double bubble of the given lobe volume."""
    return _radius_for(volume, lobe_volume)


def ball_wedge_volume(r: float, d: float, half_opening: float) -> float:
    """Volume of a ball of radius ``r`` intersected with a wedge.

    The wedge has apex line through the origin along z and half-opening
    ``half_opening``; the ball center sits on the bisector at distance ``d``
    from the apex line.  The integrand is the area of the disk-wedge
    intersection in each horizontal slice, in polar coordinates about the
    apex.
    """

    def slice_area(z):
        rho2 = r * r - z * z
        if rho2 <= 0:
            return 0.0

        def radial(theta):
            b = d * math.cos(theta)
            disc = rho2 - (d * math.sin(theta)) ** 2
            if disc <= 0:
                return 0.0
            s = math.sqrt(disc)
            t1, t2 = max(b - s, 0.0), max(b + s, 0.0)
            return 0.5 * (t2 * t2 - t1 * t1)

        pts = []
        if rho2 < d * d:
            pts = [math.asin(math.sqrt(rho2) / d)]
        val, _ = integrate.quad(radial, 0.0, half_opening, points=[p for p in pts if p < half_opening] or None,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        return 2.0 * val

    val, _ = integrate.quad(slice_area, -r, r, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def standard_triple_cell_volume(r: float) -> float:
    return ball_wedge_volume(r, r / SQRT3, math.pi / 3)


def solve_standard_triple_radius(volume: float) -> float:
    unit = standard_triple_cell_volume(1.0)
    return _radius_for(volume, lambda r: unit * r ** 3)


def lined_up_middle_volume(r: float, opening: float) -> float:
    """Middle cell volume for planes at dihedral ``opening`` (radians), each at distance r/2."""
    if opening <= 0:
        return 4.0 / 3.0 * math.pi * r ** 3 - 2.0 * cap_volume(r, 0.5 * r)
    d = 0.5 * r / math.sin(0.5 * opening)
    return ball_wedge_volume(r, d, 0.5 * opening)


# ---------------------------------------------------------------------------
# rigid motions and placement


def _rotation_from(placement: dict) -> np.ndarray | None:
    rot = placement.get("rotation")
    if rot is None:
        return None
    if isinstance(rot, dict):
        if set(rot) - {"axis", "angle_deg"}:
            raise SpecError("rotation takes 'axis' and 'angle_deg'")
        return M.axis_angle_matrix(rot["axis"], math.radians(float(rot["angle_deg"])))
    mat = np.asarray(rot, dtype=float)
    if mat.shape != (3, 3) or not np.allclose(mat @ mat.T, np.eye(3), atol=1e-9) or np.linalg.det(mat) < 0:
        raise SpecError("rotation must be a proper 3x3 orthogonal matrix or {axis, angle_deg}")
    return mat


def _apply_placement(mesh: LabeledMesh, placement: dict) -> LabeledMesh:
    rot = _rotation_from(placement)
    trans = placement.get("translation")
    if rot is None and trans is None:
        return mesh
    return mesh.transformed(rotation=rot, translation=None if trans is None else np.asarray(trans, float))


def _check_resolution(h: float, length: float, what: str, rings: int = 3) -> None:
    if h * rings > length:
        raise ResolutionTooCoarse(
            f"resolution {h:.4g} leaves fewer than {rings} vertex rings on {what} (extent {length:.4g})")


# Coarse meshes are laid out at this fraction of the configuration radius and
# then refined uniformly, so halving the resolution gives nested meshes.
COARSE_FRACTION = 1.0 / 3.0


class Assembly:
    """Coarse patch mesh plus the exact carrier of every sheet and junction curve."""

    def __init__(self, h: float, scale: float):
        self.h = float(h)
        self.coarse_h = max(self.h, COARSE_FRACTION * scale)
        self.frequency = max(1, int(math.ceil(self.coarse_h / self.h - 1e-9)))
        self.scale = float(scale)
        self.builder = M.MeshBuilder()
        self.sheets: dict[tuple[int, int], Any] = {}
        self.curves: list = []

    def sheet(self, label, carrier) -> None:
        self.sheets[(min(label), max(label))] = carrier

    def build(self) -> LabeledMesh:
        coarse = self.builder.build()
        return M.refine_projected(coarse, self.frequency, self.sheets, self.curves, 1e-9 * self.scale)


def _cluster(asm: Assembly, spec: ConfigurationSpec, meta: dict, targets=None) -> Cluster:
    mesh = _apply_placement(asm.build(), spec.placement)
    mesh.validate()
    meta = {"kind": spec.kind.value, "seed": spec.seed, "resolution": spec.resolution,
            "coarse_resolution": asm.coarse_h, "refinement": asm.frequency, **meta}
    cl = Cluster(mesh, tuple(targets or spec.volumes), tolerance_profile("default"), meta)
    meta["achieved_volumes"] = [float(v) for v in cl.volumes()]
    return cl


def _sphere_hint(center):
    center = np.asarray(center, float)
    return lambda c: center - c


def _const_hint(vec):
    vec = np.asarray(vec, float)
    return lambda c: np.broadcast_to(vec, c.shape)


def _add_ball(asm: Assembly, center, radius: float, region: int, align=None) -> None:
    """Icosahedron refined onto the sphere; a vertex points along ``align``."""
    v, f = M.icosphere(M.icosphere_level_for(radius, asm.coarse_h))
    if align is not None:
        v = v @ M.rotation_between(v[0], align).T
    idx = asm.builder.add_vertices(np.asarray(center, float) + radius * v)
    asm.builder.add_faces(idx[f], (0, region), _sphere_hint(center))
    asm.sheet((0, region), M.SphereCarrier(center, radius))


# ---------------------------------------------------------------------------
# constructors


def build_disjoint_balls(spec: ConfigurationSpec) -> Cluster:
    radii = [ball_radius(v) for v in spec.volumes]
    h = spec.resolution
    _check_resolution(h, math.pi * min(radii), "the smallest ball")
    p = spec.placement
    tangent = bool(p.get("tangent", False))
    if "centers" in p:
        centers = np.asarray(p["centers"], dtype=float)
        if centers.shape != (len(radii), 3):
            raise SpecError("centers must list one 3-vector per ball")
    else:
        gap = 0.0 if tangent else float(p.get("gap", 0.5 * max(radii)))
        if gap < 0:
            raise OverlapError("negative gap makes the balls overlap")
        xs = [0.0]
        for a, b in zip(radii[:-1], radii[1:]):
            xs.append(xs[-1] + a + b + gap)
        centers = np.array([[x, 0.0, 0.0] for x in xs])
    scale = max(radii)
    contacts: dict[int, np.ndarray] = {}
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            dist = float(np.linalg.norm(centers[i] - centers[j]))
            if dist < radii[i] + radii[j] - 1e-12 * scale:
                raise OverlapError(f"balls {i + 1} and {j + 1} overlap (center distance {dist:.6g})")
            if dist <= radii[i] + radii[j] + 1e-12 * scale:
                contacts.setdefault(i, centers[j] - centers[i])
                contacts.setdefault(j, centers[i] - centers[j])
    asm = Assembly(h, min(radii))
    for i, (c, r) in enumerate(zip(centers, radii)):
        _add_ball(asm, c, r, i + 1, align=contacts.get(i, [1.0, 0.0, 0.0]))
    meta = {"branch": "tangent" if contacts else "disjoint", "radii": radii, "radius": min(radii),
            "centers": centers.tolist()}
    return _cluster(asm, spec, meta)


def _double_bubble_mesh(asm: Assembly, r: float, labels=(1, 2)) -> None:
    """Lobe ``labels[0]`` above z = 0 and ``labels[1]`` below, flat disk between."""
    i, j = labels
    a = 0.5 * SQRT3 * r
    h = asm.coarse_h
    builder = asm.builder
    ring = M.circle_arc(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), a, 0.0, 2 * math.pi, h,
                        min_segments=12, include_end=False)
    loop = builder.add_vertices(ring)
    asm.curves.append(M.CircleCarrier(np.zeros(3), [0, 0, 1.0], a))
    top, bottom = np.array([0, 0, 0.5 * r]), np.array([0, 0, -0.5 * r])
    # normal of the disk points from the lower label to the higher one
    disk_dir = [0, 0, -1.0] if i < j else [0, 0, 1.0]
    M.plane_patch(builder, np.zeros(3), [0, 0, 1.0], [loop], h, (min(i, j), max(i, j)), _const_hint(disk_dir))
    M.sphere_patch(builder, top, r, [0, 0, -1.0], [loop], h, (0, i), _sphere_hint(top))
    M.sphere_patch(builder, bottom, r, [0, 0, 1.0], [loop], h, (0, j), _sphere_hint(bottom))
    asm.sheet((i, j), M.PlaneCarrier(np.zeros(3), [0, 0, 1.0]))
    asm.sheet((0, i), M.SphereCarrier(top, r))
    asm.sheet((0, j), M.SphereCarrier(bottom, r))


def build_standard_double_bubble(spec: ConfigurationSpec) -> Cluster:
    r = solve_double_bubble_radius(spec.volumes[0])
    h = spec.resolution
    _check_resolution(h, 2 * math.pi / 3 * r, "a lobe")
    asm = Assembly(h, r)
    _double_bubble_mesh(asm, r)
    meta = {"branch": "flat_interface", "radius": r, "disk_radius": 0.5 * SQRT3 * r,
            "centers": [[0, 0, 0.5 * r], [0, 0, -0.5 * r]]}
    return _cluster(asm, spec, meta)


def _closest_point_capped_ball(p, center, r, normal, offset):
    """Closest point of {|x - center| <= r} intersected with {x . normal >= offset}."""
    p, center, normal = np.asarray(p, float), np.asarray(center, float), M.unit(normal)
    v = p - center
    dist = np.linalg.norm(v)
    q = p.copy() if dist <= r else center + r * v / dist
    if q @ normal >= offset - 1e-15:
        return q
    # project onto the plane, then clamp to the disk of the cut
    foot = center + (offset - center @ normal) * normal
    rho = math.sqrt(max(r * r - (offset - center @ normal) ** 2, 0.0))
    w = p - (p @ normal - offset) * normal - foot
    nw = np.linalg.norm(w)
    return foot + (w if nw <= rho else rho * w / nw)


def _double_bubble_closest(p, r):
    up = _closest_point_capped_ball(p, [0, 0, 0.5 * r], r, [0, 0, 1.0], 0.0)
    dn = _closest_point_capped_ball(p, [0, 0, -0.5 * r], r, [0, 0, -1.0], 0.0)
    return up if np.linalg.norm(p - up) <= np.linalg.norm(p - dn) else dn


def build_ball_plus_double_bubble(spec: ConfigurationSpec) -> Cluster:
    r = solve_double_bubble_radius(spec.volumes[0])
    rb = ball_radius(spec.volumes[2])
    h = spec.resolution
    _check_resolution(h, 2 * math.pi / 3 * r, "a lobe")
    _check_resolution(h, math.pi * rb, "the ball")
    p = spec.placement
    scale = min(r, rb)
    if "contact_point" in p:
        q = np.asarray(p["contact_point"], dtype=float)
        lobe = np.array([0, 0, 0.5 * r]) if q[2] >= 0 else np.array([0, 0, -0.5 * r])
        if abs(np.linalg.norm(q - lobe) - r) > 1e-6 * r:
            raise SpecError("contact_point must lie on the double bubble surface")
        if abs(q[2]) <= 1e-6 * r:
            raise TangencyOnInterface(
                "a ball may touch the double bubble only away from the interface plane; "
                "the requested contact lies on the junction circle")
        normal = M.unit(q - lobe)
        center = q + rb * normal
        tangent = True
    else:
        direction = M.unit(p.get("direction", [1.0, 0.0, 0.0]))
        tangent = bool(p.get("tangent", False))
        gap = 0.0 if tangent else float(p.get("gap", 0.5 * r))
        if gap < 0:
            raise OverlapError("negative gap makes the ball overlap the double bubble")

        def excess(t):
            c = t * direction
            return np.linalg.norm(c - _double_bubble_closest(c, r)) - rb - gap

        t = bracketed_root(excess, 0.0, 4.0 * (r + rb + gap) + r, tol=1e-14 * scale)
        center = t * direction
        q = _double_bubble_closest(center, r)
    closest = _double_bubble_closest(center, r)
    dist = np.linalg.norm(center - closest)
    if dist < rb - 1e-9 * scale:
        raise OverlapError(f"ball overlaps the double bubble (clearance {dist - rb:.3g})")
    if tangent and abs(closest[2]) <= 1e-6 * r:
        raise TangencyOnInterface("tangency point lies on the interface plane")
    asm = Assembly(h, min(r, rb))
    _double_bubble_mesh(asm, r)
    align = closest - center if tangent else None
    _add_ball(asm, center, rb, 3, align=align)
    meta = {"branch": "tangent" if tangent else "disjoint", "radius": min(r, rb), "double_bubble_radius": r,
            "ball_radius": rb, "ball_center": center.tolist(),
            "tangency_point": closest.tolist() if tangent else None}
    return _cluster(asm, spec, meta)


def build_standard_triple(spec: ConfigurationSpec) -> Cluster:
    r = solve_standard_triple_radius(spec.volumes[0])
    h = spec.resolution
    _check_resolution(h, r, "a cell")
    d = r / SQRT3
    z0 = r * math.sqrt(2.0 / 3.0)
    a = 0.5 * SQRT3 * r
    ez = np.array([0, 0, 1.0])
    asm = Assembly(h, r)
    h = asm.coarse_h
    builder = asm.builder
    asm.curves.append(M.LineCarrier(np.zeros(3), ez))
    p_idx, q_idx = builder.add_vertices([[0, 0, z0], [0, 0, -z0]])
    seg = M.segment([0, 0, -z0], [0, 0, z0], h, min_segments=3)[1:-1]
    seg_idx = builder.add_vertices(seg)
    phi_p = math.acos(-1.0 / 3.0)
    thetas = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
    arcs = {}
    for th in thetas:
        u = np.array([math.cos(th), math.sin(th), 0.0])
        pts = M.circle_arc(0.5 * d * u, u, ez, a, phi_p, -phi_p, h, min_segments=6)[1:-1]
        arcs[th] = builder.add_vertices(pts)  # runs from p to q
        asm.curves.append(M.CircleCarrier(0.5 * d * u, np.cross(u, ez), a))
    # interfaces: half-plane at azimuth theta, between the cells on either side
    pairs = {thetas[0]: (1, 3, -1.0), thetas[1]: (1, 2, 1.0), thetas[2]: (2, 3, 1.0)}
    for th in thetas:
        i, j, sgn = pairs[th]
        e = sgn * np.array([-math.sin(th), math.cos(th), 0.0])
        loop = np.concatenate([[p_idx], arcs[th], [q_idx], seg_idx])
        M.plane_patch(builder, np.zeros(3), [-math.sin(th), math.cos(th), 0.0], [loop], h, (i, j),
                      _const_hint(e))
        asm.sheet((i, j), M.PlaneCarrier(np.zeros(3), [-math.sin(th), math.cos(th), 0.0]))
    centers = []
    for n, (lo, hi) in enumerate(zip(thetas, thetas[1:] + [thetas[0]])):
        beta = lo + math.pi / 3
        b = np.array([math.cos(beta), math.sin(beta), 0.0])
        c = d * b
        centers.append(c.tolist())
        loop = np.concatenate([[p_idx], arcs[lo], [q_idx], arcs[hi][::-1]])
        M.sphere_patch(builder, c, r, -b, [loop], h, (0, n + 1), _sphere_hint(c))
        asm.sheet((0, n + 1), M.SphereCarrier(c, r))
    meta = {"branch": "wedge_120", "radius": r, "centers": centers, "line_point": [0, 0, 0],
            "line_direction": [0, 0, 1.0], "wedge_angles_deg": [120.0, 120.0, 120.0],
            "chord_half_length": z0}
    return _cluster(asm, spec, meta)


def lined_up_feasible(r: float) -> dict[str, tuple[float, float]]:
    """Feasible middle volumes per branch, from the volume map at its bracket ends."""
    lo_open, hi_open = 1e-3, math.pi / 3
    nonpar = sorted((lined_up_middle_volume(r, lo_open), lined_up_middle_volume(r, hi_open)))
    zone = capillary_zone(2.0 / r, 0.5 * SQRT3 * r, 120.0).volume
    point = lined_up_middle_volume(r, math.pi / 3)
    return {"non_parallel": (nonpar[0], nonpar[1]), "parallel": (zone, zone), "point_contact": (point, point)}


def _in_interval(v: float, iv: tuple[float, float], rel: float = 1e-6) -> bool:
    return iv[0] * (1 - rel) <= v <= iv[1] * (1 + rel)


def build_lined_up_triple(spec: ConfigurationSpec) -> Cluster:
    v_out, v_mid, _ = spec.volumes
    r = solve_double_bubble_radius(v_out)
    h = spec.resolution
    _check_resolution(h, 2 * math.pi / 3 * r, "an outer lobe")
    feasible = lined_up_feasible(r)
    attainable = [b for b in LINED_UP_BRANCHES if _in_interval(v_mid, feasible[b])]
    branch = spec.placement.get("branch")
    if branch is not None and branch not in LINED_UP_BRANCHES:
        raise SpecError(f"unknown lined-up branch {branch!r}; expected one of {list(LINED_UP_BRANCHES)}")
    if not attainable or (branch is not None and branch not in attainable):
        raise VolumeOutOfRange(
            f"middle volume {v_mid:.10g} is not attainable"
            + (f" on branch {branch}" if branch else "")
            + f" with outer volume {v_out:.10g}; feasible middle volumes per branch: "
            + ", ".join(f"{k}=[{a:.10g}, {b:.10g}]" for k, (a, b) in feasible.items()),
            feasible)
    if branch is None:
        if len(attainable) > 1:
            raise BranchAmbiguity(
                f"middle volume {v_mid:.10g} is attained by branches {attainable}; pass placement.branch",
                attainable)
        branch = attainable[0]
    asm = Assembly(h, r)
    if branch == "parallel":
        meta = _lined_up_parallel(asm, r)
    else:
        opening = math.pi / 3 if branch == "point_contact" else math.radians(float(spec.placement.get("opening_deg", 30.0)))
        if branch == "non_parallel" and not 0.0 < opening < math.pi / 3:
            raise SpecError("non-parallel opening_deg must lie strictly between 0 and 60")
        meta = _lined_up_wedge(asm, r, opening)
    meta.update({"branch": branch, "radius": r, "feasible_middle_volumes": {k: list(v) for k, v in feasible.items()}})
    return _cluster(asm, spec, meta)


def _lined_up_wedge(asm: Assembly, r: float, opening: float) -> dict:
    """Middle ball at the origin cut by planes whose normals make ``opening`` with each other's reverse."""
    builder, h = asm.builder, asm.coarse_h
    s, c = math.sin(0.5 * opening), math.cos(0.5 * opening)
    n_a, n_b = np.array([-s, 0, c]), np.array([-s, 0, -c])
    e_a, e_b = np.array([-c, 0, -s]), np.array([-c, 0, s])
    a = 0.5 * SQRT3 * r
    touching = abs(opening - math.pi / 3) < 1e-12
    ring_a = M.circle_arc(0.5 * r * n_a, e_a, np.cross(n_a, e_a), a, 0.0, 2 * math.pi, h, 12, include_end=False)
    ring_b = M.circle_arc(0.5 * r * n_b, e_b, np.cross(n_b, e_b), a, 0.0, 2 * math.pi, h, 12, include_end=False)
    loop_a = builder.add_vertices(ring_a)
    if touching:
        # both circles start at the contact point on the wedge edge
        loop_b = np.concatenate([[loop_a[0]], builder.add_vertices(ring_b[1:])])
    else:
        loop_b = builder.add_vertices(ring_b)
    c1, c3 = r * n_a, r * n_b
    M.plane_patch(builder, 0.5 * r * n_a, n_a, [loop_a], h, (1, 2), _const_hint(-n_a))
    M.plane_patch(builder, 0.5 * r * n_b, n_b, [loop_b], h, (2, 3), _const_hint(n_b))
    M.sphere_patch(builder, np.zeros(3), r, n_a, [loop_a, loop_b], h, (0, 2), _sphere_hint(np.zeros(3)))
    M.sphere_patch(builder, c1, r, -n_a, [loop_a], h, (0, 1), _sphere_hint(c1))
    M.sphere_patch(builder, c3, r, -n_b, [loop_b], h, (0, 3), _sphere_hint(c3))
    asm.curves += [M.CircleCarrier(0.5 * r * n_a, n_a, a), M.CircleCarrier(0.5 * r * n_b, n_b, a)]
    asm.sheet((1, 2), M.PlaneCarrier(0.5 * r * n_a, n_a))
    asm.sheet((2, 3), M.PlaneCarrier(0.5 * r * n_b, n_b))
    asm.sheet((0, 2), M.SphereCarrier(np.zeros(3), r))
    asm.sheet((0, 1), M.SphereCarrier(c1, r))
    asm.sheet((0, 3), M.SphereCarrier(c3, r))
    edge_dist = 0.5 * r / s
    return {"opening_deg": math.degrees(opening), "centers": [c1.tolist(), [0, 0, 0], c3.tolist()],
            "wedge_edge_point": [-edge_dist, 0.0, 0.0], "wedge_edge_direction": [0, 1.0, 0],
            "contact_point": [-edge_dist, 0.0, 0.0] if touching else None}


def _lined_up_parallel(asm: Assembly, r: float) -> dict:
    builder, h = asm.builder, asm.coarse_h
    lam = 2.0 / r
    a = 0.5 * SQRT3 * r
    zone = capillary_zone(lam, a, 120.0)
    sep = zone.separation
    n_az = max(12, int(math.ceil(2 * math.pi * a / h)))
    length = zone.s_end - zone.s_start
    n_rows = max(2, int(math.ceil(length / h)))
    s_rows = np.linspace(zone.s_start, zone.s_end, n_rows + 1)
    vals = zone.profile.evaluate(s_rows)
    z_shift = -0.5 * (vals[0, 1] + vals[-1, 1])
    rows = []
    for m, (rad, z, _psi) in enumerate(vals):
        if m in (0, n_rows):
            rad = a  # the rims are shared exactly with the disks
        phase = m * math.pi / n_az
        t = phase + 2 * math.pi * np.arange(n_az) / n_az
        pts = np.stack([rad * np.cos(t), rad * np.sin(t), np.full(n_az, z + z_shift)], axis=1)
        rows.append(builder.add_vertices(pts))
    z_bot, z_top = vals[0, 1] + z_shift, vals[-1, 1] + z_shift
    n_a, n_b = np.array([0, 0, 1.0]), np.array([0, 0, -1.0])
    c1, c3 = np.array([0, 0, z_top + 0.5 * r]), np.array([0, 0, z_bot - 0.5 * r])
    M.ring_band(builder, rows, (0, 2), lambda c: -np.column_stack([c[:, 0], c[:, 1], np.zeros(len(c))]))
    M.plane_patch(builder, [0, 0, z_top], n_a, [rows[-1]], h, (1, 2), _const_hint(-n_a))
    M.plane_patch(builder, [0, 0, z_bot], n_b, [rows[0]], h, (2, 3), _const_hint(n_b))
    M.sphere_patch(builder, c1, r, -n_a, [rows[-1]], h, (0, 1), _sphere_hint(c1))
    M.sphere_patch(builder, c3, r, -n_b, [rows[0]], h, (0, 3), _sphere_hint(c3))
    prof = zone.profile
    asm.curves += [M.CircleCarrier([0, 0, z_top], n_a, a), M.CircleCarrier([0, 0, z_bot], n_a, a)]
    asm.sheet((1, 2), M.PlaneCarrier([0, 0, z_top], n_a))
    asm.sheet((2, 3), M.PlaneCarrier([0, 0, z_bot], n_a))
    asm.sheet((0, 1), M.SphereCarrier(c1, r))
    asm.sheet((0, 3), M.SphereCarrier(c3, r))
    asm.sheet((0, 2), M.RevolutionCarrier([0, 0, z_shift], n_a, prof.evaluate, zone.s_start, zone.s_end, lam))
    return {"opening_deg": 0.0, "centers": [c1.tolist(), [0, 0, 0], c3.tolist()], "plane_separation": sep,
            "profile_kind": prof.kind.value, "profile_shape_parameter": prof.shape_parameter,
            "profile_max_residual": prof.max_residual, "contact_angles_deg": list(zone.contact_angles_deg),
            "zone_volume": zone.volume}


BUILDERS = {
    Kind.DISJOINT_BALLS: build_disjoint_balls,
    Kind.STANDARD_DOUBLE_BUBBLE: build_standard_double_bubble,
    Kind.BALL_PLUS_DOUBLE_BUBBLE: build_ball_plus_double_bubble,
    Kind.LINED_UP_TRIPLE: build_lined_up_triple,
    Kind.STANDARD_TRIPLE: build_standard_triple,
}


def characteristic_radius(kind: Kind | str, volumes) -> float:
    """Sphere radius that sets the scale of a configuration (smallest one when several)."""
    kind = Kind(kind)
    v = [float(x) for x in volumes]
    if kind == Kind.DISJOINT_BALLS:
        return ball_radius(min(v))
    if kind == Kind.STANDARD_TRIPLE:
        return solve_standard_triple_radius(v[0])
    r = solve_double_bubble_radius(v[0])
    if kind == Kind.BALL_PLUS_DOUBLE_BUBBLE:
        return min(r, ball_radius(v[2]))
    return r


def build(spec: ConfigurationSpec | dict) -> Cluster:
    if isinstance(spec, dict):
        spec = ConfigurationSpec.from_dict(spec)
    log.info("building %s volumes=%s h=%g", spec.kind.value, list(spec.volumes), spec.resolution)
    return BUILDERS[spec.kind](spec)
