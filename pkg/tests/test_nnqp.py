import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import nnqp_enumerate, spd_fixture
from rieszbal.nnqp import ConvergenceError, NnqpProblem, dump_debug, solve, verify_kkt


@pytest.mark.parametrize("b, expected", [
    ([1.0, -1.0], [1.0, 0.0]),
    ([2.0, 3.0], [2.0, 3.0]),
    ([-1.0, -2.0], [0.0, 0.0]),
])
def test_identity_matrix(b, expected):
    sol = solve(NnqpProblem(np.eye(2), b))
    assert sol.converged
    np.testing.assert_allclose(sol.w, expected, atol=1e-14)


def test_coupled_two_by_two():
    K = np.array([[2.0, 1.0], [1.0, 2.0]])
    sol = solve(NnqpProblem(K, [1.0, 1.0]))
    np.testing.assert_allclose(sol.w, [1 / 3, 1 / 3], atol=1e-12)
    # b = (1, -1): second coordinate is pushed to the bound
    sol = solve(NnqpProblem(K, [1.0, -1.0]))
    np.testing.assert_allclose(sol.w, [0.5, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matches_enumeration(seed):
    K, b = spd_fixture(seed)
    sol = solve(NnqpProblem(K, b, tol=1e-12))
    np.testing.assert_allclose(sol.w, nnqp_enumerate(K, b), atol=1e-9)


def test_zero_rhs_gives_zero():
    K, _ = spd_fixture(3)
    sol = solve(NnqpProblem(K, np.zeros(10)))
    assert sol.converged and np.all(sol.w == 0) and sol.iterations == 0


def test_empty_problem():
    sol = solve(NnqpProblem(np.zeros((0, 0)), np.zeros(0)))
    assert sol.converged and sol.w.size == 0


def test_warm_start_does_not_change_answer():
    K, b = spd_fixture(4)
    cold = solve(NnqpProblem(K, b, tol=1e-12))
    warm = solve(NnqpProblem(K, b, tol=1e-12), w0=np.full(10, 5.0))
    np.testing.assert_allclose(warm.w, cold.w, atol=1e-10)


@pytest.mark.parametrize("K, b", [
    (np.eye(2), [1.0]),
    (np.array([[1.0, np.nan], [np.nan, 1.0]]), [1.0, 1.0]),
    (np.array([[0.0, 0.0], [0.0, 1.0]]), [1.0, 1.0]),
])
def test_rejects_bad_input(K, b):
    with pytest.raises(ValueError):
        NnqpProblem(K, b)


def test_budget_exhaustion_returns_best_iterate():
    # a badly conditioned matrix with a one-sweep budget
    x = np.linspace(0, 1, 40)
    K = np.exp(-np.subtract.outer(x, x) ** 2 / 0.1) + 1e-10 * np.eye(40)
    sol = solve(NnqpProblem(K, np.ones(40), tol=1e-14, max_iter=1), polish_every=1000)
    assert not sol.converged
    assert sol.kkt.max() > 1e-14
    assert "kkt" in dump_debug(NnqpProblem(K, np.ones(40)), sol)


def test_verify_kkt_flags_violations():
    K = np.eye(2)
    rep = verify_kkt(K, [1.0, 1.0], [0.0, 1.0])
    assert rep.stationarity == pytest.approx(1.0)
    rep = verify_kkt(K, [1.0, -1.0], [1.0, 1.0])
    assert rep.complementarity == pytest.approx(2.0)
    rep = verify_kkt(K, [1.0, 1.0], [-0.5, 1.0])
    assert rep.primal_negativity == pytest.approx(0.5)


def test_convergence_error_is_runtime_error():
    assert issubclass(ConvergenceError, RuntimeError)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_kkt_holds_on_random_spd(seed, n):
    K, b = spd_fixture(seed, n)
    sol = solve(NnqpProblem(K, b))
    assert sol.converged
    assert np.all(sol.w >= 0)
    assert verify_kkt(K, b, sol.w).max() <= 1e-10
