import math

import numpy as np
import pytest

from bubblecluster.catalogue import (
    ConfigurationSpec, Kind, ball_wedge_volume, build, characteristic_radius, lined_up_feasible,
    lined_up_middle_volume, lobe_volume, solve_double_bubble_radius, solve_standard_triple_radius,
    standard_triple_cell_volume,
)
from bubblecluster.errors import (
    BranchAmbiguity, NonEqualVolumes, NonPositiveVolume, OverlapError, ResolutionTooCoarse, SpecError,
    TangencyOnInterface, VolumeOutOfRange,
)

from oracles import monte_carlo_volume

MIDDLE = lined_up_middle_volume(solve_double_bubble_radius(1.0), math.pi / 3)


def test_lobe_volume_closed_form():
    # ball minus a cap of height r/2: 4/3 pi r^3 - 5/24 pi r^3
    assert lobe_volume(1.0) == pytest.approx(27 * math.pi / 24, rel=1e-14)
    r = solve_double_bubble_radius(2.5)
    assert lobe_volume(r) == pytest.approx(2.5, rel=1e-12)


def test_wedge_volume_limits_and_monte_carlo():
    assert ball_wedge_volume(1.0, 0.0, math.pi) == pytest.approx(4 * math.pi / 3, rel=1e-10)
    assert ball_wedge_volume(1.0, 0.0, math.pi / 2) == pytest.approx(2 * math.pi / 3, rel=1e-10)
    r, d = 1.0, 1.0 / math.sqrt(3)
    center = np.array([d, 0, 0])

    def inside(p):
        in_ball = np.sum((p - center) ** 2, axis=1) <= r * r
        ang = np.abs(np.arctan2(p[:, 1], p[:, 0]))
        return in_ball & (ang <= math.pi / 3)

    est, se = monte_carlo_volume(inside, [-1, -1.2, -1], [1.6, 1.2, 1], 1_000_000, seed=3)
    assert abs(est - standard_triple_cell_volume(1.0)) < 4 * se


def test_radius_solvers_scale_as_cube_root():
    for solve in (solve_double_bubble_radius, solve_standard_triple_radius):
        assert solve(8.0) == pytest.approx(2 * solve(1.0), rel=1e-12)
    with pytest.raises(NonPositiveVolume):
        solve_double_bubble_radius(0.0)


@pytest.mark.parametrize("opening_deg", [1e-3, 10.0, 30.0, 45.0, 60.0])
def test_lined_up_middle_volume_does_not_depend_on_opening(opening_deg):
    assert lined_up_middle_volume(1.0, math.radians(opening_deg)) == pytest.approx(11 * math.pi / 12, rel=1e-9)
    assert lined_up_middle_volume(1.0, 0.0) == pytest.approx(11 * math.pi / 12, rel=1e-14)


def test_feasible_ranges_coincide():
    feas = lined_up_feasible(1.0)
    for lo, hi in feas.values():
        assert lo == pytest.approx(11 * math.pi / 12, rel=1e-9) and hi == pytest.approx(lo, rel=1e-9)


SPECS = [
    ("disjoint_balls", (1.0,), {}),
    ("disjoint_balls", (1.0, 2.0, 0.5), {"tangent": True}),
    ("standard_double_bubble", (1.0, 1.0), {}),
    ("ball_plus_double_bubble", (1.0, 1.0, 0.7), {"tangent": True}),
    ("standard_triple", (1.0, 1.0, 1.0), {}),
    ("lined_up_triple", (1.0, MIDDLE, 1.0), {"branch": "non_parallel"}),
    ("lined_up_triple", (1.0, MIDDLE, 1.0), {"branch": "point_contact"}),
    ("lined_up_triple", (1.0, MIDDLE, 1.0), {"branch": "parallel"}),
]


@pytest.mark.parametrize("kind, volumes, placement", SPECS)
def test_builds_hit_their_volumes(kind, volumes, placement):
    h = characteristic_radius(kind, volumes) / 10
    c = build(ConfigurationSpec(kind, volumes, h, placement=placement))
    c.mesh.validate()
    assert c.k == len(volumes)
    assert max(abs(e) for e in c.volume_errors()) < 0.005
    assert c.metadata["kind"] == kind


def test_volume_error_is_second_order():
    errs = []
    for h in (0.05, 0.025):
        c = build(ConfigurationSpec("standard_double_bubble", (1.0, 1.0), h))
        errs.append(abs(c.volume_errors()[0]))
    # inscribed facets lose O(h^2) volume; the ratio approaches 4 from below
    assert 3.0 <= errs[0] / errs[1] <= 4.5


def test_spec_round_trip_and_rejections():
    spec = ConfigurationSpec("disjoint_balls", (1.0, 2.0), 0.2, seed=4, placement={"gap": 1.0})
    assert ConfigurationSpec.from_json(__import__("json").dumps(spec.to_dict())).to_dict() == spec.to_dict()
    with pytest.raises(SpecError):
        ConfigurationSpec.from_dict({"kind": "disjoint_balls", "volumes": [1], "resolution": 0.1, "x": 1})
    with pytest.raises(SpecError):
        ConfigurationSpec.from_dict({"kind": "hexagon", "volumes": [1], "resolution": 0.1})
    with pytest.raises(SpecError):
        ConfigurationSpec("standard_double_bubble", (1.0,), 0.1)
    with pytest.raises(NonPositiveVolume):
        ConfigurationSpec("disjoint_balls", (1.0, -1.0), 0.1)
    with pytest.raises(NonEqualVolumes):
        ConfigurationSpec("standard_triple", (1.0, 2.0, 3.0), 0.1)
    with pytest.raises(NonEqualVolumes):
        ConfigurationSpec("standard_double_bubble", (1.0, 2.0), 0.1)
    with pytest.raises(SpecError):
        ConfigurationSpec("disjoint_balls", (1.0,), 0.1, placement={"colour": "red"})


def test_construction_errors():
    with pytest.raises(ResolutionTooCoarse):
        build(ConfigurationSpec("standard_double_bubble", (1.0, 1.0), 2.0))
    with pytest.raises(OverlapError):
        build(ConfigurationSpec("disjoint_balls", (1.0, 1.0), 0.2, placement={"centers": [[0, 0, 0], [0.5, 0, 0]]}))
    r = solve_double_bubble_radius(1.0)
    with pytest.raises(TangencyOnInterface):
        build(ConfigurationSpec("ball_plus_double_bubble", (1.0, 1.0, 1.0), 0.1,
                                placement={"contact_point": [0.5 * math.sqrt(3) * r, 0, 0]}))
    with pytest.raises(VolumeOutOfRange):
        build(ConfigurationSpec("lined_up_triple", (1.0, 2.0, 1.0), 0.1))
    with pytest.raises(BranchAmbiguity):
        build(ConfigurationSpec("lined_up_triple", (1.0, MIDDLE, 1.0), 0.1))
    with pytest.raises(SpecError):
        build(ConfigurationSpec("lined_up_triple", (1.0, MIDDLE, 1.0), 0.1,
                                placement={"branch": "non_parallel", "opening_deg": 75.0}))


def test_placement_moves_the_mesh():
    spec = {"kind": "standard_double_bubble", "volumes": [1, 1], "resolution": 0.15}
    base = build(spec).mesh
    moved = build({**spec, "placement": {"translation": [1, 2, 3],
                                         "rotation": {"axis": [0, 1, 0], "angle_deg": 90}}}).mesh
    rot = np.array([[0, 0, 1.0], [0, 1.0, 0], [-1.0, 0, 0]])
    assert np.allclose(moved.vertices, base.vertices @ rot.T + [1, 2, 3], atol=1e-12)
    assert np.allclose(np.ptp(moved.vertices, axis=0), np.ptp(base.vertices, axis=0)[[2, 1, 0]], atol=1e-9)


def test_build_is_deterministic():
    spec = ConfigurationSpec("standard_triple", (1.0, 1.0, 1.0), 0.15)
    a, b = build(spec).mesh, build(spec).mesh
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.faces, b.faces)


def test_kind_enum_values():
    assert {k.value for k in Kind} == {"disjoint_balls", "standard_double_bubble", "ball_plus_double_bubble",
                                       "lined_up_triple", "standard_triple"}


@pytest.mark.parametrize("kind, volumes, placement", [SPECS[2], SPECS[4], SPECS[7]])
def test_scaling_covariance(kind, volumes, placement):
    s = 1.7
    h = characteristic_radius(kind, volumes) / 8
    from scipy.spatial import cKDTree
    unit = build(ConfigurationSpec(kind, volumes, h, placement=placement))
    big = build(ConfigurationSpec(kind, [s ** 3 * v for v in volumes], s * h, placement=placement))
    # same vertex set up to the scale factor, matched one to one
    dist, idx = cKDTree(big.mesh.vertices / s).query(unit.mesh.vertices)
    assert dist.max() <= 1e-9 and len(set(idx.tolist())) == unit.mesh.n_vertices == big.mesh.n_vertices
    assert np.allclose(np.array(big.volumes()) / s ** 3, unit.volumes(), rtol=1e-9)


@pytest.mark.parametrize("kind, volumes, placement", SPECS[:5])
def test_outputs_do_not_overlap(kind, volumes, placement):
    from bubblecluster.geometry import check_non_overlap
    c = build(ConfigurationSpec(kind, volumes, characteristic_radius(kind, volumes) / 8, placement=placement))
    assert check_non_overlap(c) == []
