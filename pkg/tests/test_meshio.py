import numpy as np
import pytest

from bubblecluster.catalogue import ConfigurationSpec, build
from bubblecluster.meshio import MeshFormatError, obj_text, off_text, parse_off, read_obj, write_obj

from conftest import random_meshes


def test_off_round_trip_is_byte_identical():
    mesh = build(ConfigurationSpec("standard_triple", (1, 1, 1), 0.2)).mesh
    text = off_text(mesh)
    again = parse_off(text)
    assert off_text(again) == text
    assert np.array_equal(again.vertices, mesh.vertices)
    assert np.array_equal(again.labels, mesh.labels)


@pytest.mark.parametrize("mesh", random_meshes(3, 6))
def test_round_trip_random(mesh):
    text = off_text(mesh)
    assert off_text(parse_off(text)) == text


def test_negative_zero_written_as_zero():
    mesh = random_meshes(0, 1)[0]
    v = mesh.vertices.copy()
    v[0] = [-0.0, 0.0, 1.0]
    assert "\n0.0 0.0 1.0\n" in off_text(mesh.with_vertices(v))


def test_obj_round_trip(tmp_path):
    mesh = random_meshes(1, 2)[1]
    write_obj(mesh, tmp_path / "m.obj")
    back = read_obj(tmp_path / "m.obj")
    assert obj_text(back) == obj_text(mesh)


@pytest.mark.parametrize("text, where", [
    ("OFX\n", "line 1"),
    ("OFF\nx y\n", "line 2"),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1\n3 0 1 2 0 1\n", "line 5"),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "line 6"),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2 0 1\nextra\n", "line 7"),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n", "expected 3 vertex"),
])
def test_parse_errors_name_the_line(text, where):
    with pytest.raises(MeshFormatError, match=where):
        parse_off(text)


def test_unsorted_label_rejected():
    with pytest.raises(MeshFormatError, match="i < j"):
        parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2 1 0\n")
