"""Frozen outputs of the reference routines in ``oracles.py``.

These pin the oracles themselves, so a silent change in an oracle cannot
make a package test pass for the wrong reason.
"""
import math

import numpy as np
import pytest

from oracles import (kelvin_point, nnqp_enumerate, riesz_energy_loop, riesz_potential_loop,
                     spd_fixture, tube_potential_quadrature)


@pytest.mark.parametrize("seed, support, objective, mass", [
    (0, [0, 1, 4, 7, 9], -0.28571810237768, 0.8570161629569647),
    (1, [1, 2, 3, 4, 5, 8], -0.8252680767516172, 1.7897919043006603),
    (2, [4, 5, 6, 8], -2.3637869188163867, 3.4154624212685274),
])
def test_enumeration_frozen(seed, support, objective, mass):
    K, b = spd_fixture(seed)
    w = nnqp_enumerate(K, b)
    assert np.flatnonzero(w > 0).tolist() == support
    assert 0.5 * w @ K @ w - b @ w == pytest.approx(objective, rel=1e-12)
    assert w.sum() == pytest.approx(mass, rel=1e-12)


def test_enumeration_identity_matrix():
    w = nnqp_enumerate(np.eye(2), np.array([1.0, -1.0]))
    assert w.tolist() == [1.0, 0.0]


def test_potential_loop_hand_values():
    # two unit atoms at distance 2 and 1 from the origin, Newtonian in R^3
    u = riesz_potential_loop([(2, 0, 0), (0, 1, 0)], [1.0, 1.0], (0, 0, 0), -1.0)
    assert u == pytest.approx(1.5, rel=1e-15)
    e = riesz_energy_loop([(0, 0, 0)], [2.0], [(0, 0, 4)], [3.0], -1.0)
    assert e == pytest.approx(1.5, rel=1e-15)


@pytest.mark.parametrize("L, r, p, frozen", [
    (1.0, 0.1, -1.0, 4.186470774495728),
    (0.5, 0.05, -0.5, 2.7497923875216026),
])
def test_tube_quadrature_frozen(L, r, p, frozen):
    assert tube_potential_quadrature(L, r, p) == pytest.approx(frozen, rel=1e-12)


def test_tube_quadrature_closed_form():
    L, r = 1.0, 0.1
    exact = 2.0 / L**2 * (L * math.asinh(L / r) - math.hypot(L, r) + r)
    assert tube_potential_quadrature(L, r, -1.0) == pytest.approx(exact, rel=1e-7)


def test_kelvin_point_hand_value():
    assert kelvin_point((2, 0, 0), (0, 0, 0)) == [0.5, 0.0, 0.0]
    assert kelvin_point((1, 1, 3), (1, 1, 1)) == [1.0, 1.0, 1.5]
