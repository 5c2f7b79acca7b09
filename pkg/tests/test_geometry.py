import math

import numpy as np
import pytest

from oracles import kelvin_point
from rieszbal.geometry import (PointCloud, RefinementLadder, RotationBodySpec, invert_cloud, merge_clouds,
                               sample_ball, sample_rotation_body, sample_sphere, shell_clouds,
                               sphere_node_count, spherical_cap)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_sphere_nodes_on_sphere(level):
    c = sample_sphere((1.0, -2.0, 0.5), 2.0, level)
    assert len(c) == sphere_node_count(level)
    np.testing.assert_allclose(np.linalg.norm(c.points - (1.0, -2.0, 0.5), axis=1), 2.0, rtol=1e-14)
    assert set(c.tags) == {"boundary"}


def test_sphere_ladder_under_node_budget():
    ladder = RefinementLadder(tuple(sample_sphere((0, 0, 0), 1.0, L) for L in range(4)))
    assert len(ladder[3]) <= 3000
    assert all(len(a) < len(b) for a, b in zip(ladder, list(ladder)[1:]))


def test_ladder_rejects_slow_refinement():
    a = sample_sphere((0, 0, 0), 1.0, 1)
    with pytest.raises(ValueError, match="shrink"):
        RefinementLadder((a, a))


def test_generic_sphere_in_four_dimensions():
    c = sample_sphere((0, 0, 0, 0), 1.0, 0, generic=True)
    assert c.n == 4
    np.testing.assert_allclose(np.linalg.norm(c.points, axis=1), 1.0)
    with pytest.raises(ValueError):
        sample_sphere((0, 0, 0, 0), 1.0, 0)


def test_ball_has_interior_and_boundary():
    b = sample_ball((0, 0, 0), 1.0, 0)
    inner = b.tag_mask("interior")
    assert inner.any() and (~inner).any()
    assert np.all(np.linalg.norm(b.points[inner], axis=1) < 1.0)
    # the centre node is a lattice point
    assert np.any(np.all(b.points == 0.0, axis=1))


@pytest.mark.parametrize("bad", [
    dict(points=[[0, 0, 0], [0, 0, 0]], spacing=[1, 1]),
    dict(points=[[0, 0, 0], [1, 0, 0]], spacing=[3, 1]),
    dict(points=[[0, 0], [1, 0]], spacing=[1, 1]),
    dict(points=[[0, 0, 0], [1, 0, 0]], spacing=[0, 1]),
    dict(points=[[0, 0, np.nan]], spacing=[1]),
])
def test_pointcloud_validation(bad):
    with pytest.raises(ValueError):
        PointCloud(**bad)


def test_negative_zero_is_folded():
    c = PointCloud([[-0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [1.0, 1.0])
    assert c.points[0].tobytes() == np.zeros(3).tobytes()


def test_subset_and_membership():
    s = sample_sphere((0, 0, 0), 1.0, 1)
    cap = spherical_cap(s, (0, 0, 0), (1, 0, 0), math.pi / 3)
    assert cap.is_subset_of(s)
    assert not s.is_subset_of(cap)
    idx = cap.index_in(s)
    np.testing.assert_array_equal(s.points[idx], cap.points)
    np.testing.assert_array_equal(s.spacing[idx], cap.spacing)


def test_cap_of_ball_keeps_centre():
    b = sample_ball((0, 0, 0), 1.0, 0)
    cap = spherical_cap(b, (0, 0, 0), (1, 0, 0), math.pi / 2)
    assert np.any(np.all(cap.points == 0.0, axis=1))


def test_dict_roundtrip():
    c = sample_rotation_body(RotationBodySpec("stretched_exp", 1.0, 4.0), 0)
    d = PointCloud.from_dict(c.to_dict())
    np.testing.assert_array_equal(d.points, c.points)
    np.testing.assert_array_equal(d.spacing, c.spacing)
    np.testing.assert_array_equal(d.radii, c.radii)
    assert d.tags == c.tags


def test_inversion_matches_hand_formula():
    c = sample_sphere((0.5, 0.0, 0.0), 1.0, 0)
    y = (-1.0, 0.3, 0.2)
    inv = invert_cloud(c, y)
    for p, q in zip(c.points[:10], inv.points[:10]):
        np.testing.assert_allclose(q, kelvin_point(p, y), rtol=1e-14)
    back = invert_cloud(inv, y)
    np.testing.assert_allclose(back.points, c.points, atol=1e-13)


def test_inversion_rejects_centre_node():
    c = PointCloud([[0, 0, 0], [1, 0, 0]], [1, 1])
    with pytest.raises(ValueError):
        invert_cloud(c, (0, 0, 0))


@pytest.mark.parametrize("q", [0.5, 2.0])
def test_shells_partition(q):
    c = sample_ball((0, 0, 0), 1.0, 0) if q < 1 else sample_rotation_body(RotationBodySpec("power", 0, 16.0), 0)
    shells = shell_clouds(c, (0, 0, 0), q, (0, 3))
    total = sum(len(s) for s in shells)
    d = np.linalg.norm(c.points, axis=1)
    lo, hi = sorted((1.0, q ** 4))
    inside = (d > lo) & (d <= hi) if q < 1 else (d >= lo) & (d < hi)
    assert total == int(inside.sum())


def test_shells_reject_unit_ratio():
    with pytest.raises(ValueError):
        shell_clouds(sample_sphere((0, 0, 0), 1.0, 0), (0, 0, 0), 1.0, (0, 1))


@pytest.mark.parametrize("profile, s", [("power", 0.0), ("power", 1.0), ("stretched_exp", 0.5),
                                        ("stretched_exp", 1.0), ("super_exp", 2.0)])
def test_rotation_body_inside_profile(profile, s):
    spec = RotationBodySpec(profile, s, 16.0)
    c = sample_rotation_body(spec, 0)
    rho = np.hypot(c.points[:, 1], c.points[:, 2])
    assert np.all(rho <= spec.rho(c.points[:, 0]) + 1e-12)
    assert np.all((c.points[:, 0] >= 0) & (c.points[:, 0] <= 16.0))
    tubes = c.radii > 0
    # thin tail is carried by axis tube nodes
    if profile != "power" or s > 0:
        assert tubes.any()
        assert np.all(rho[tubes] == 0)


@pytest.mark.parametrize("kw", [dict(profile="cone", s=1.0), dict(profile="stretched_exp", s=2.0),
                                dict(profile="super_exp", s=1.0), dict(profile="power", s=-1.0)])
def test_rotation_spec_validation(kw):
    with pytest.raises(ValueError):
        RotationBodySpec(x1_max=16.0, **kw)


def test_merge_caps_spacing():
    a = sample_sphere((0, 0, 0), 1.0, 0)
    far = PointCloud([[3.0, 0.0, 0.0]], [5.0])
    m = merge_clouds([a, far])
    assert len(m) == len(a) + 1
    nn = np.min(np.linalg.norm(a.points - (3.0, 0.0, 0.0), axis=1))
    assert m.spacing[-1] == pytest.approx(nn)
