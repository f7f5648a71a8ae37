"""OFF (authoritative, labeled) and OBJ (viewer convenience) mesh files.

OFF layout::

    OFF
    <nv> <nf> 0
    x y z                 # one line per vertex, shortest round-trip floats
    3 a b c i j           # face vertex indices, then the region-pair label

Writing the parsed result of a written file reproduces it byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MeshError
from .geometry import LabeledMesh


class MeshFormatError(MeshError):
    pass


def _fmt(x: float) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return repr(x)


def off_text(mesh: LabeledMesh) -> str:
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += [" ".join(_fmt(c) for c in v) for v in mesh.vertices]
    lines += [
        f"3 {f[0]} {f[1]} {f[2]} {lab[0]} {lab[1]}" for f, lab in zip(mesh.faces.tolist(), mesh.labels.tolist())
    ]
    return "\n".join(lines) + "\n"


def write_off(mesh: LabeledMesh, path) -> None:
    Path(path).write_text(off_text(mesh), encoding="ascii")


def parse_off(text: str) -> LabeledMesh:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line))
    if not rows or rows[0][1] != "OFF":
        raise MeshFormatError("line 1: expected 'OFF' header")
    try:
        nv, nf = (int(x) for x in rows[1][1].split()[:2])
    except (IndexError, ValueError):
        raise MeshFormatError("line 2: expected '<nv> <nf> <ne>' counts") from None
    body = rows[2:]
    if len(body) < nv + nf:
        raise MeshFormatError(f"expected {nv} vertex and {nf} face lines, found {len(body)} lines")
    verts = np.empty((nv, 3))
    for n, (lineno, line) in enumerate(body[:nv]):
        parts = line.split()
        if len(parts) != 3:
            raise MeshFormatError(f"line {lineno}: vertex needs 3 coordinates")
        try:
            verts[n] = [float(p) for p in parts]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: bad coordinate") from None
    faces = np.empty((nf, 3), dtype=np.int64)
    labels = np.empty((nf, 2), dtype=np.int64)
    for n, (lineno, line) in enumerate(body[nv: nv + nf]):
        parts = line.split()
        if len(parts) != 6 or parts[0] != "3":
            raise MeshFormatError(f"line {lineno}: face must read '3 a b c i j' (triangle plus label pair)")
        try:
            vals = [int(p) for p in parts[1:]]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: bad integer") from None
        faces[n] = vals[:3]
        labels[n] = vals[3:]
    if len(body) > nv + nf:
        raise MeshFormatError(f"line {body[nv + nf][0]}: trailing content after {nf} faces")
    if np.any(labels[:, 0] >= labels[:, 1]):
        raise MeshFormatError("face labels must be written as 'i j' with i < j")
    try:
        return LabeledMesh(verts, faces, labels)
    except MeshError as exc:
        raise MeshFormatError(str(exc)) from None


def read_off(path) -> LabeledMesh:
    return parse_off(Path(path).read_text(encoding="ascii"))


def obj_text(mesh: LabeledMesh) -> str:
    """OBJ with one ``g i_j`` group per label pair (junction data is not kept)."""
    lines = ["# labeled cluster mesh; groups are region pairs"]
    lines += ["v " + " ".join(_fmt(c) for c in v) for v in mesh.vertices]
    pairs = sorted({(int(a), int(b)) for a, b in mesh.labels})
    for a, b in pairs:
        lines.append(f"g {a}_{b}")
        idx = np.nonzero((mesh.labels[:, 0] == a) & (mesh.labels[:, 1] == b))[0]
        lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces[idx].tolist()]
    return "\n".join(lines) + "\n"


def write_obj(mesh: LabeledMesh, path) -> None:
    Path(path).write_text(obj_text(mesh), encoding="ascii")


def read_obj(path) -> LabeledMesh:
    verts, faces, labels = [], [], []
    current = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="ascii").splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "g":
            try:
                a, b = (int(x) for x in parts[1].split("_"))
            except ValueError:
                raise MeshFormatError(f"line {lineno}: group name must be 'i_j'") from None
            current = (a, b)
        elif parts[0] == "f":
            if current is None:
                raise MeshFormatError(f"line {lineno}: face outside a label group")
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) != 3:
                raise MeshFormatError(f"line {lineno}: only triangles are supported")
            faces.append(idx)
            labels.append(current)
    return LabeledMesh(np.array(verts), np.array(faces), np.array(labels))
