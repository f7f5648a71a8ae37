"""Volume-constrained gradient descent of total area on labeled meshes.

Each step moves every vertex (junction vertices included, shared by all
their sheets) against the component of the area gradient orthogonal to the
span of the volume gradients, then restores the target volumes by a
Newton iteration along the volume gradients.  Fixed points are exactly the
meshes where ``grad A = sum_i lambda_i grad V_i`` holds in least squares,
the discrete stationarity condition measured by ``fit_multipliers``.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import MeshDegeneracy, MeshError, NonConvergence, RankDeficient, SpecError
from .geometry import Cluster, LabeledMesh, compute_volume
from .variation import area_gradient, volume_gradient

log = logging.getLogger(__name__)


class StepRule(str, enum.Enum):
    FIXED = "fixed"
    BACKTRACKING = "backtracking"


@dataclass
class FlowParams:
    """Controls for :func:`evolve`.

    ``initial_step`` multiplies the projected area gradient directly.  The
    area Hessian has entries of order one whatever the mesh size, so the
    step is dimensionless and stable values lie around 0.05 to 0.3.
    """

    max_steps: int = 2000
    step_rule: StepRule = StepRule.BACKTRACKING
    initial_step: float = 0.2
    volume_projection_tol: float = 1e-6
    convergence_residual_rel: float = 0.002
    remesh_interval: int = 0
    seed: int = 0

    def __post_init__(self):
        self.step_rule = StepRule(self.step_rule)
        self.max_steps = int(self.max_steps)
        self.remesh_interval = int(self.remesh_interval)
        self.seed = int(self.seed)
        if self.max_steps < 0:
            raise SpecError("max_steps must be non-negative")
        if not self.initial_step > 0:
            raise SpecError("initial_step must be positive")
        if not self.convergence_residual_rel > 0:
            raise SpecError("convergence_residual_rel must be positive")
        if not self.volume_projection_tol > 0:
            raise SpecError("volume_projection_tol must be positive")
        if self.remesh_interval < 0:
            raise SpecError("remesh_interval must be non-negative (0 disables remeshing)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["step_rule"] = self.step_rule.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "FlowParams":
        if not isinstance(data, dict):
            raise SpecError("flow parameters must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown flow parameters: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"bad flow parameters: {exc}") from None


# ---------------------------------------------------------------------------
# projection


@dataclass
class Projection:
    direction: np.ndarray  # (n, 3) descent field orthogonal to every volume gradient
    lambdas: np.ndarray
    rank_deficient: bool


def project_volume_preserving(area_grad: np.ndarray, volume_grads: list[np.ndarray],
                              rcond: float = 1e-10) -> Projection:
    """Remove from ``area_grad`` its least-squares component along the volume gradients.

    The remainder is the steepest-descent direction of area among first-order
    volume-preserving deformations.  Linearly dependent volume gradients fall
    back to the pseudo-inverse and set ``rank_deficient``.
    """
    ga = np.asarray(area_grad, dtype=float)
    if not volume_grads:
        return Projection(ga.copy(), np.zeros(0), False)
    mat = np.stack([np.asarray(g, dtype=float).reshape(-1) for g in volume_grads], axis=1)
    if np.any(np.linalg.norm(mat, axis=0) == 0):
        raise RankDeficient("a volume gradient vanishes")
    coef, _, rank, _ = np.linalg.lstsq(mat, ga.reshape(-1), rcond=rcond)
    resid = ga.reshape(-1) - mat @ coef
    # one re-orthogonalization pass removes the rounding left by lstsq
    coef2, *_ = np.linalg.lstsq(mat, resid, rcond=rcond)
    resid = resid - mat @ coef2
    return Projection(resid.reshape(ga.shape), coef + coef2, bool(rank < mat.shape[1]))


# ---------------------------------------------------------------------------
# volume restoration


def restore_volumes(mesh: LabeledMesh, targets, tol: float, max_iter: int = 30) -> LabeledMesh:
    """Newton iteration moving vertices along volume gradients until volumes match.

    Solves ``sum_j (G_i . G_j) mu_j = target_i - V_i`` and moves by
    ``sum_j mu_j G_j`` until every relative volume error is at most ``tol``.
    """
    k = len(targets)
    targets = np.asarray(targets, dtype=float)
    for _ in range(max_iter):
        vols = np.array([compute_volume(mesh, i) for i in range(1, k + 1)])
        err = (vols - targets) / targets
        if np.max(np.abs(err)) <= tol:
            return mesh
        grads = [volume_gradient(mesh, i, check=False) for i in range(1, k + 1)]
        flat = np.stack([g.reshape(-1) for g in grads], axis=1)
        gram = flat.T @ flat
        mu = np.linalg.lstsq(gram, targets - vols, rcond=1e-12)[0]
        mesh = mesh.with_vertices(mesh.vertices + (flat @ mu).reshape(-1, 3))
    vols = np.array([compute_volume(mesh, i) for i in range(1, k + 1)])
    err = np.max(np.abs((vols - targets) / targets))
    if err > tol:
        raise NonConvergence(f"volume correction stalled at relative error {err:.3g}")
    return mesh


# ---------------------------------------------------------------------------
# perturbation and mesh checks


def vertex_normals(mesh: LabeledMesh) -> np.ndarray:
    """Unit outward normals of the lowest-numbered region touching each vertex."""
    normals = np.zeros_like(mesh.vertices)
    done = np.zeros(len(mesh.vertices), dtype=bool)
    for region in mesh.region_ids:
        g = volume_gradient(mesh, region, check=False)
        length = np.linalg.norm(g, axis=1)
        take = (~done) & (length > 0)
        normals[take] = g[take] / length[take, None]
        done |= take
    return normals


def jitter(cluster: Cluster, amplitude_rel: float = 0.05, seed: int = 0) -> Cluster:
    """Move each vertex along its normal by a uniform amount in [-a, a], a = amplitude_rel * r.

    ``r`` is the configuration radius recorded by the catalogue, else the
    radius of the ball with the smallest target volume.
    """
    r = cluster.metadata.get("radius") or cluster.equivalent_radius()
    rng = np.random.default_rng(seed)
    amount = rng.uniform(-1.0, 1.0, size=len(cluster.mesh.vertices)) * amplitude_rel * r
    normals = vertex_normals(cluster.mesh)
    moved = cluster.mesh.with_vertices(cluster.mesh.vertices + amount[:, None] * normals)
    meta = dict(cluster.metadata)
    meta["jitter"] = {"amplitude_rel": amplitude_rel, "seed": seed}
    return Cluster(moved, list(cluster.target_volumes), cluster.tolerance_profile, meta)


def _check_input(mesh: LabeledMesh) -> None:
    try:
        mesh.validate()
    except MeshError as exc:
        raise MeshDegeneracy(f"input mesh is degenerate: {exc}") from None


# ---------------------------------------------------------------------------
# remeshing


def _angle_at(p, q, r):
    u, v = q - p, r - p
    return math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v))


def remesh(mesh: LabeledMesh, max_edge: float, flat_cos: float = math.cos(math.radians(20.0))) -> LabeledMesh:
    """Delaunay edge flips inside sheets, then midpoint splits of edges longer than ``max_edge``.

    Flips only touch valence-2 edges whose two faces carry the same label and
    are nearly coplanar, so junction curves and label topology are kept.
    Splits insert the midpoint into every incident face (two or three), so a
    split junction edge stays on its junction.
    """
    V = mesh.vertices.copy()
    F = [list(f) for f in mesh.faces.tolist()]
    L = mesh.labels.tolist()
    # flips
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, f in enumerate(F):
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edge_faces.setdefault((min(a, b), max(a, b)), []).append(fi)
    touched: set[int] = set()
    normals = mesh.face_normals()
    for (a, b), faces in sorted(edge_faces.items()):
        if len(faces) != 2 or faces[0] in touched or faces[1] in touched:
            continue
        f0, f1 = faces
        if L[f0] != L[f1] or normals[f0] @ normals[f1] < flat_cos:
            continue
        c = [x for x in F[f0] if x not in (a, b)][0]
        d = [x for x in F[f1] if x not in (a, b)][0]
        if (min(c, d), max(c, d)) in edge_faces:
            continue
        if _angle_at(V[c], V[a], V[b]) + _angle_at(V[d], V[a], V[b]) <= math.pi + 1e-12:
            continue
        # keep the orientation of face f0: it runs a->b or b->a
        i = F[f0].index(a)
        if F[f0][(i + 1) % 3] == b:
            F[f0], F[f1] = [c, a, d], [c, d, b]
        else:
            F[f0], F[f1] = [c, d, a], [c, b, d]
        touched.update((f0, f1))
    # splits
    edge_faces = {}
    for fi, f in enumerate(F):
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edge_faces.setdefault((min(a, b), max(a, b)), []).append(fi)
    long_edges = [e for e in sorted(edge_faces) if np.linalg.norm(V[e[0]] - V[e[1]]) > max_edge]
    new_v = [V]
    n = len(V)
    split_faces: set[int] = set()
    for a, b in long_edges:
        faces = edge_faces[(a, b)]
        if any(fi in split_faces for fi in faces):
            continue
        m = n
        n += 1
        new_v.append(0.5 * (V[a] + V[b])[None])
        for fi in faces:
            f = F[fi]
            i = f.index(a)
            j = f.index(b)
            c = f[3 - i - j]
            # replace the edge by two: the face keeps its cyclic order
            if (i + 1) % 3 == j:  # a -> b
                F[fi] = [a, m, c]
                F.append([m, b, c])
            else:  # b -> a
                F[fi] = [b, m, c]
                F.append([m, a, c])
            L.append(L[fi])
            split_faces.add(fi)
            split_faces.add(len(F) - 1)
    return LabeledMesh(np.concatenate(new_v), np.array(F), np.array(L))


# ---------------------------------------------------------------------------
# evolution


@dataclass
class TraceRow:
    step: int
    area: float
    residual_rel: float
    vol_err: list[float]
    step_size: float


@dataclass
class FlowResult:
    cluster: Cluster
    trace: list[TraceRow]
    converged: bool
    steps: int
    best_step: int
    message: str = ""
    rank_deficient: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.trace[self.best_step].residual_rel

    def raise_for_status(self) -> None:
        if not self.converged:
            raise NonConvergence(self.message)


def trace_csv(trace: list[TraceRow], k: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "area", "residual_rel"] + [f"vol_err_{i}" for i in range(1, k + 1)] + ["step_size"])
    for row in trace:
        w.writerow([row.step, repr(row.area), repr(row.residual_rel)] + [repr(x) for x in row.vol_err]
                   + [repr(row.step_size)])
    return buf.getvalue()


def _state(mesh: LabeledMesh, k: int, targets):
    ga = area_gradient(mesh)
    gvs = [volume_gradient(mesh, i, check=False) for i in range(1, k + 1)]
    proj = project_volume_preserving(ga, gvs)
    ga_norm = math.sqrt(math.fsum((ga * ga).reshape(-1)))
    res = math.sqrt(math.fsum((proj.direction * proj.direction).reshape(-1)))
    vols = [compute_volume(mesh, i) for i in range(1, k + 1)]
    errs = [(v - t) / t for v, t in zip(vols, targets)]
    return proj, (res / ga_norm if ga_norm > 0 else 0.0), errs


def evolve(cluster: Cluster, params: FlowParams | None = None) -> FlowResult:
    """Projected gradient descent of area at fixed volumes.

    Trace row 0 is the input as given.  If its volumes miss the targets, the
    descent starts from a volume-corrected copy, so area is non-increasing
    from row 1 on.  Steps that raise the area (after volume restoration) or
    invert a face are retried at half the step size under the backtracking
    rule; under the fixed rule an inverted face is fatal.  The best iterate
    (lowest residual among those meeting the volume tolerance) is returned;
    ``converged`` is set when its residual is at or below
    ``params.convergence_residual_rel``.
    """
    params = params or FlowParams()
    k = cluster.k
    targets = list(cluster.target_volumes)
    mesh = cluster.mesh
    _check_input(mesh)
    tol = params.volume_projection_tol
    proj, res, errs = _state(mesh, k, targets)
    trace = [TraceRow(0, mesh.total_area(), res, errs, 0.0)]
    best_mesh, best_res, best_step = mesh, res, 0
    if params.max_steps > 0 and res > params.convergence_residual_rel and max(map(abs, errs)) > tol:
        # descent starts from the volume-corrected input; row 0 keeps the input as given
        mesh = restore_volumes(mesh, targets, tol)
        proj, res, _ = _state(mesh, k, targets)
        best_res = math.inf
    area = mesh.total_area()
    ref_edge = mesh.mean_edge_length()
    tau = params.initial_step
    min_tau = params.initial_step * 1e-8
    rank_def = proj.rank_deficient
    message = ""
    step = 0
    while step < params.max_steps and res > params.convergence_residual_rel:
        normals = mesh.face_normals()
        accepted = False
        inverted = False
        while not accepted:
            trial = mesh.with_vertices(mesh.vertices - tau * proj.direction)
            ok = True
            try:
                trial = restore_volumes(trial, targets, tol)
                new_normals = trial.face_normals()
                flipped = np.einsum("ij,ij->i", normals, new_normals) <= 0.0
                if np.any(flipped):
                    inverted, ok = True, False
                new_area = trial.total_area()
            except (NonConvergence, MeshError, FloatingPointError):
                ok = False
                new_area = math.inf
            if params.step_rule == StepRule.FIXED:
                if not ok:
                    raise MeshDegeneracy(f"step {step + 1} inverted a face at fixed step {tau:g}")
                accepted = True
            elif ok and new_area <= area:
                accepted = True
            else:
                tau *= 0.5
                if tau < min_tau:
                    break
        if not accepted:
            if inverted:
                raise MeshDegeneracy(f"step {step + 1}: every trial step inverts a face")
            message = f"step size underflow at step {step + 1} (residual {res:.3g})"
            break
        step += 1
        mesh = trial
        if params.remesh_interval and step % params.remesh_interval == 0:
            try:
                candidate = restore_volumes(remesh(mesh, 1.8 * ref_edge), targets, tol)
            except (NonConvergence, MeshError):
                candidate = None
            # a remesh that raises the area would break energy descent; keep the old mesh then
            if candidate is not None and candidate.total_area() <= mesh.total_area():
                mesh = candidate
        area = mesh.total_area()
        proj, res, errs = _state(mesh, k, targets)
        rank_def |= proj.rank_deficient
        trace.append(TraceRow(step, area, res, errs, tau))
        if res < best_res:
            best_mesh, best_res, best_step = mesh, res, len(trace) - 1
        if params.step_rule == StepRule.BACKTRACKING:
            tau = min(tau * 1.25, params.initial_step)
    converged = best_res <= params.convergence_residual_rel
    if not converged and not message:
        message = f"{step} steps left residual_rel {best_res:.3g} above {params.convergence_residual_rel:g}"
    log.info("flow: %d steps, residual %.3g -> %.3g, converged=%s", step, trace[0].residual_rel, best_res,
             converged)
    meta = dict(cluster.metadata)
    meta["flow"] = {"steps": step, "converged": converged, "best_step": best_step}
    out = Cluster(best_mesh, targets, cluster.tolerance_profile, meta)
    return FlowResult(out, trace, converged, step, best_step, message, rank_def)
