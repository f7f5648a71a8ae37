"""Shared mesh fixtures: spheres, ellipsoids and small random labeled meshes."""

from __future__ import annotations

import numpy as np
import pytest

from bubblecluster.geometry import Cluster, LabeledMesh
from bubblecluster.meshing import icosphere


def sphere_mesh(level: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0), region: int = 1,
                axes=(1.0, 1.0, 1.0)) -> LabeledMesh:
    """Icosphere bounding ``region`` against the exterior (normals point inward)."""
    v, f = icosphere(level)
    v = v * radius * np.asarray(axes) + np.asarray(center)
    return LabeledMesh(v, f[:, ::-1], np.tile((0, region), (len(f), 1)))


def sphere_cluster(level: int = 3, radius: float = 1.0) -> Cluster:
    mesh = sphere_mesh(level, radius)
    return Cluster(mesh, [4.0 / 3.0 * np.pi * radius ** 3], metadata={"radius": radius})


def random_sphere(rng, level: int = 2, amp: float = 0.1) -> LabeledMesh:
    m = sphere_mesh(level)
    v = m.vertices * (1.0 + amp * rng.uniform(-1, 1, (len(m.vertices), 1)))
    return LabeledMesh(v + amp * rng.normal(size=v.shape) * 0.3, m.faces, m.labels)


def bipyramid_pair(rng, n: int = 7, amp: float = 0.05) -> LabeledMesh:
    """Two regions above and below a shared n-gon disk, with a junction ring."""
    t = 2 * np.pi * np.arange(n) / n
    ring = np.stack([np.cos(t), np.sin(t), np.zeros(n)], axis=1)
    verts = np.vstack([ring, [[0, 0, 0], [0, 0, 1.0], [0, 0, -1.0]]])
    c, top, bot = n, n + 1, n + 2
    faces, labels = [], []
    for a in range(n):
        b = (a + 1) % n
        faces += [[a, b, top], [b, a, bot], [a, b, c]]
        labels += [(0, 1), (0, 2), (1, 2)]
    mesh = LabeledMesh(verts, faces, labels)
    return _orient(mesh.with_vertices(verts + amp * rng.normal(size=verts.shape)), {1: top, 2: bot})


def triple_tetra(rng, amp: float = 0.05) -> LabeledMesh:
    """Three tetrahedral cells around a common edge: a triple junction with k = 3."""
    t = 2 * np.pi * np.arange(3) / 3
    spokes = np.stack([np.cos(t), np.sin(t), np.zeros(3)], axis=1)
    verts = np.vstack([[[0, 0, 1.0], [0, 0, -1.0]], spokes])
    top, bot = 0, 1
    faces, labels = [], []
    for n in range(3):
        a, b = 2 + n, 2 + (n + 1) % 3
        faces += [[a, b, top], [a, b, bot]]
        labels += [(0, n + 1), (0, n + 1)]
        faces.append([top, bot, a])
        labels.append((min(n, (n + 2) % 3) + 1, max(n, (n + 2) % 3) + 1))
    mesh = LabeledMesh(verts, faces, labels)
    inner = {i + 1: None for i in range(3)}
    return _orient(mesh.with_vertices(verts + amp * rng.normal(size=verts.shape)), inner)


def _orient(mesh: LabeledMesh, _hint) -> LabeledMesh:
    """Flip faces so each normal points out of its lower-labeled region (judged from cell centroids)."""
    v, f, lab = mesh.vertices, mesh.faces.copy(), mesh.labels
    k = int(lab.max())
    cent = {i: v[np.unique(f[np.any(lab == i, axis=1)])].mean(axis=0) for i in range(1, k + 1)}
    for n in range(len(f)):
        i, j = lab[n]
        a, b, c = v[f[n]]
        nrm = np.cross(b - a, c - a)
        mid = (a + b + c) / 3
        if i == 0:
            outward_of_i = cent[j] - mid  # out of the exterior means into j
        else:
            outward_of_i = mid - cent[i]
        if nrm @ outward_of_i < 0:
            f[n] = f[n][::-1]
    return LabeledMesh(v, f, lab)


def random_meshes(seed: int, count: int):
    """A mix of small labeled meshes with at most 200 vertices."""
    rng = np.random.default_rng(seed)
    makers = (lambda: random_sphere(rng), lambda: bipyramid_pair(rng, int(rng.integers(5, 12))),
              lambda: triple_tetra(rng))
    return [makers[n % 3]() for n in range(count)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


class AcceptanceRecorder:
    """Collects one verdict line per acceptance check and echoes it."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def finish(self, passed: bool) -> None:
        line = f"ACCEPTANCE {self.number:2d} {'PASS' if passed else 'FAIL'}: {self.title}"
        if self.details:
            line += " [" + "; ".join(self.details) + "]"
        print(line)
        _ACCEPTANCE_LINES.append(line)


@pytest.fixture
def acceptance(request):
    """Yields a recorder factory; the verdict follows the test outcome."""
    made = []

    def make(number: int, title: str) -> AcceptanceRecorder:
        rec = AcceptanceRecorder(number, title)
        made.append(rec)
        return rec

    yield make
    failed = getattr(request.node, "_call_failed", True)
    for rec in made:
        rec.finish(not failed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item._call_failed = report.failed


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
