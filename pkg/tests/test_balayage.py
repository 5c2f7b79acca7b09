import math

import numpy as np
import pytest

from rieszbal.balayage import (InfeasibleCandidate, check_extremal, check_restriction, check_symmetry,
                               default_probes, energy_distance, mass_deficit, superpose_diracs, sweep,
                               sweep_decreasing, sweep_increasing)
from rieszbal.geometry import sample_ball, sample_sphere, spherical_cap
from rieszbal.kernel import DiscreteMeasure, KernelModel, RieszParams

NEWTON = KernelModel()
TOL = 1e-10


@pytest.fixture(scope="module")
def sphere():
    return sample_sphere((0, 0, 0), 1.0, 1)


@pytest.fixture(scope="module")
def dirac2():
    return DiscreteMeasure.dirac((2.0, 0.0, 0.0))


def test_measure_on_target_is_fixed(sphere):
    w = np.zeros(len(sphere))
    w[[3, 50, 200]] = [1.0, 0.5, 2.0]
    mu = DiscreteMeasure(sphere, w)
    res = sweep(NEWTON, mu, sphere)
    np.testing.assert_allclose(res.swept.weights, w, atol=1e-9)
    assert mass_deficit(NEWTON, mu, sphere)[2] == pytest.approx(0.0, abs=1e-9)


def test_zero_measure_sweeps_to_zero(sphere):
    res = sweep(NEWTON, DiscreteMeasure.zero(sphere), sphere)
    assert np.all(res.swept.weights == 0)
    with pytest.raises(ValueError):
        mass_deficit(NEWTON, DiscreteMeasure.zero(sphere), sphere)


def test_empty_target_raises(dirac2):
    from rieszbal.geometry import PointCloud

    with pytest.raises(ValueError):
        sweep(NEWTON, dirac2, PointCloud.empty())


def test_dirac_onto_sphere_invariants(sphere, dirac2):
    res = sweep(NEWTON, dirac2, sphere)
    assert res.converged
    assert res.potential_match <= 1e-8 * res.b_scale
    assert res.kkt.complementarity <= 1e-8
    assert res.swept_mass <= res.source_mass * (1 + 1e-10)
    # closed form 1/2; the level-1 value sits a few percent high
    assert res.swept_mass == pytest.approx(0.5, rel=0.05)


def test_increasing_single_level_equals_sweep(sphere, dirac2):
    one = sweep_increasing(NEWTON, dirac2, [sphere])[0]
    direct = sweep(NEWTON, dirac2, sphere, one.probes)
    np.testing.assert_allclose(one.swept.weights, direct.swept.weights, atol=1e-12)


def test_increasing_family_contracts(sphere, dirac2):
    caps = [spherical_cap(sphere, (0, 0, 0), (1, 0, 0), a) for a in (math.pi / 4, math.pi / 2, math.pi)]
    res = sweep_increasing(NEWTON, dirac2, caps)
    d = [r.distance for r in res]
    assert all(b <= a + 1e-9 for a, b in zip(d, d[1:]))
    with pytest.raises(ValueError, match="nested"):
        sweep_increasing(NEWTON, dirac2, caps[::-1])


def test_decreasing_constant_family(sphere, dirac2):
    res, gap = sweep_decreasing(NEWTON, dirac2, [sphere, sphere, sphere])
    for r in res[1:]:
        np.testing.assert_allclose(r.swept.weights, res[0].swept.weights, atol=1e-9)
    assert gap <= 1e-9


def test_decreasing_two_sets(sphere, dirac2):
    hemi = spherical_cap(sphere, (0, 0, 0), (1, 0, 0), math.pi / 2)
    res, gap = sweep_decreasing(NEWTON, dirac2, [sphere, hemi])
    direct = sweep(NEWTON, dirac2, hemi)
    np.testing.assert_allclose(res[-1].swept.weights, direct.swept.weights, atol=1e-9)
    assert gap <= 1e-9


def test_restriction_idempotent(sphere, dirac2):
    rep = check_restriction(NEWTON, dirac2, sphere, sphere)
    assert rep["energy_distance"] <= 10 * TOL * max(1.0, rep["direct_mass"])


def test_restriction_measure_on_q(sphere):
    hemi = spherical_cap(sphere, (0, 0, 0), (1, 0, 0), math.pi / 2)
    w = np.zeros(len(hemi))
    w[:5] = 1.0
    mu = DiscreteMeasure(hemi, w)
    rep = check_restriction(NEWTON, mu, sphere, hemi)
    assert rep["relative_energy_distance"] <= 1e-8


def test_restriction_rejects_non_subset(sphere, dirac2):
    other = sample_sphere((0, 0, 0), 2.0, 0)
    with pytest.raises(ValueError):
        check_restriction(NEWTON, dirac2, sphere, other)


def test_symmetry_roles(sphere, dirac2):
    assert check_symmetry(NEWTON, dirac2, dirac2, sphere) <= 10 * TOL
    w = np.zeros(len(sphere))
    w[7] = 1.0
    lam = DiscreteMeasure(sphere, w)
    assert check_symmetry(NEWTON, dirac2, lam, sphere) <= 1e-8


def test_extremal_candidates(sphere, dirac2):
    res = sweep(NEWTON, dirac2, sphere)
    rep = check_extremal(NEWTON, dirac2, sphere, res.swept)
    assert rep["max_violation"] <= 10 * TOL
    bigger = DiscreteMeasure(sphere, res.swept.weights + 0.01)
    assert check_extremal(NEWTON, dirac2, sphere, bigger)["max_violation"] <= 10 * TOL
    with pytest.raises(InfeasibleCandidate):
        check_extremal(NEWTON, dirac2, sphere, res.swept.scaled(0.5))


def test_superposition_single_source(sphere):
    rep = superpose_diracs(NEWTON, [((2, 0, 0), 1.0)], sphere)
    assert rep["relative_potential_gap"] <= 10 * TOL
    assert rep["inside_hull"] == []


def test_superposition_split_source(sphere):
    rep = superpose_diracs(NEWTON, [((2, 0, 0), 0.5), ((2, 0, 0), 0.5)], sphere)
    one = superpose_diracs(NEWTON, [((2, 0, 0), 1.0)], sphere)
    assert rep["relative_potential_gap"] <= 10 * TOL
    assert rep["direct_mass"] == pytest.approx(one["direct_mass"], rel=1e-12)


def test_superposition_flags_sources_on_target(sphere):
    rep = superpose_diracs(NEWTON, [((2, 0, 0), 1.0), (tuple(sphere.points[0]), 1.0)], sphere)
    assert rep["inside_hull"] == [1]


def test_mass_inequality_fails_for_source_inside_a_solid():
    # a documented limitation: with sources among the nodes of a solid, the
    # regularized diagonal lets the swept mass exceed the source mass
    ball = sample_ball((0, 0, 0), 1.0, 0)
    res = sweep(NEWTON, DiscreteMeasure.dirac((0.0, 0.2, 0.1)), ball)
    assert res.swept_mass > 1.0


def test_interior_source_mass_overshoot_shrinks():
    # continuum: a point inside a closed sphere sweeps to its full mass; the
    # discrete mass overshoots by the O(h) capacity excess and decays with h
    mu = DiscreteMeasure.dirac((0.0, 0.2, 0.1))
    masses = [sweep(NEWTON, mu, sample_sphere((0, 0, 0), 1.0, L)).swept_mass for L in (0, 1, 2)]
    assert all(m > 1.0 for m in masses)
    assert masses[0] > masses[1] > masses[2]
    assert masses[2] - 1.0 < 0.02


def test_default_probes_layout(sphere):
    P = default_probes(sphere, [(2, 0, 0)], count=20)
    assert P.shape == (21, 3)
    c = sphere.points.mean(axis=0)
    R = np.max(np.linalg.norm(sphere.points - c, axis=1))
    r = np.linalg.norm(P[:20] - c, axis=1) / R
    np.testing.assert_allclose(np.sort(r), [0.5] * 10 + [1.5] * 10, rtol=1e-12)
    assert P[-1].tolist() == [2.0, 0.0, 0.0]


def test_energy_distance_zero_on_same_measure(dirac2):
    assert energy_distance(NEWTON, dirac2, dirac2) == 0.0


@pytest.mark.parametrize("alpha", [1.0, 1.5])
def test_riesz_sweep_converges(sphere, alpha):
    res = sweep(KernelModel(RieszParams(3, alpha)), DiscreteMeasure.dirac((0, 0, 3.0)), sphere)
    assert res.converged and res.swept_mass < 1.0
