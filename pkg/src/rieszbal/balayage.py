"""Inner balayage of discrete measures onto node sets.

The swept measure is the energy projection of ``mu`` onto the cone of
nonnegative measures carried by the target nodes, i.e. the solution of

    min 1/2 w'Kw - b'w,  w >= 0,   b_i = U^mu(x_i).

Besides the sweep itself the module measures how well the discrete objects
reproduce the continuum identities (domination, restriction, symmetry,
extremality, superposition, mass loss).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .geometry import PointCloud, _fibonacci_sphere
from .kernel import (
    DiscreteMeasure,
    KernelModel,
    eval_potential,
    energy,
    kernel_matrix,
    mutual_energy,
    ordered_dot,
    potential_on_cloud,
)
from .nnqp import ConvergenceError, KktReport, NnqpProblem, solve, verify_kkt

__all__ = [
    "BalayageResult",
    "InfeasibleCandidate",
    "default_probes",
    "sweep",
    "sweep_increasing",
    "sweep_decreasing",
    "check_restriction",
    "check_symmetry",
    "check_extremal",
    "superpose_diracs",
    "mass_deficit",
    "energy_distance",
]

DEFAULT_TOL = 1e-10


class InfeasibleCandidate(ValueError):
    """The candidate measure does not dominate U^mu on the target."""


@dataclass(frozen=True, eq=False)
class BalayageResult:
    """Swept measure plus its diagnostics.

    Attributes
    ----------
    swept : DiscreteMeasure
        Weights on the target cloud.
    potential_match : float
        max over target nodes of max(0, U^mu - U^swept).
    domination_excess : float
        max over probes of max(0, U^swept - U^mu) / U^mu.
    distance : float
        Energy norm of mu - swept.
    """

    swept: DiscreteMeasure
    source_mass: float
    swept_mass: float
    potential_match: float
    domination_excess: float
    kkt: KktReport
    converged: bool
    iterations: int
    distance: float
    b: np.ndarray
    probes: np.ndarray
    source_potential: np.ndarray
    swept_potential: np.ndarray

    @property
    def b_scale(self) -> float:
        return float(np.max(np.abs(self.b))) if len(self.b) else 0.0

    def summary(self) -> dict:
        return {
            "source_mass": self.source_mass,
            "swept_mass": self.swept_mass,
            "potential_match": self.potential_match,
            "domination_excess": self.domination_excess,
            "energy_distance": self.distance,
            "kkt": self.kkt.as_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
            "nodes": len(self.swept.cloud),
        }


def default_probes(target: PointCloud, sources=None, count: int = 20) -> np.ndarray:
    """Half the probes on a sphere of 0.5 R and half on 1.5 R about the target's
    centroid (R = largest node distance from it), followed by the source points."""
    c = target.points.mean(axis=0)
    R = float(np.max(np.linalg.norm(target.points - c, axis=1)))
    if R == 0.0:
        R = float(target.spacing[0])
    m = count // 2
    if target.n == 3:
        u = _fibonacci_sphere(m)
    else:
        rng = np.random.default_rng(0)
        u = rng.standard_normal((m, target.n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    parts = [c + 0.5 * R * u, c + 1.5 * R * u]
    if sources is not None:
        parts.append(np.array(sources, dtype=float, ndmin=2).reshape(-1, target.n))
    return np.vstack(parts)


def _same_nodes(a: PointCloud, b: PointCloud) -> bool:
    return a is b or (a.points.shape == b.points.shape and np.array_equal(a.points, b.points)
                      and np.array_equal(a.spacing, b.spacing) and np.array_equal(a.radii, b.radii))


def energy_distance(model: KernelModel, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """||mu - nu|| in the (regularized) energy norm.

    Measures on the same nodes use the quadratic form of the weight
    difference; the expansion E(mu) - 2 E(mu, nu) + E(nu) used otherwise
    cannot resolve distances below about sqrt(eps) times the norms.
    """
    if _same_nodes(mu.cloud, nu.cloud):
        diff = mu.weights - nu.weights
        K = kernel_matrix(model, mu.cloud)
        return math.sqrt(max(ordered_dot(diff, _accel.matvec(K, diff)), 0.0))
    d2 = energy(model, mu).energy - 2.0 * mutual_energy(model, mu, nu) + energy(model, nu).energy
    return math.sqrt(max(d2, 0.0))


def _solve_scaled(K, b, tol, w0=None, max_iter=20000):
    """NNQP with b normalised to unit sup norm, so ``tol`` is relative to ||b||_inf."""
    s = float(np.max(np.abs(b))) if len(b) else 0.0
    if s == 0.0:
        w = np.zeros(len(b))
        return w, verify_kkt(K, b, w), 0, True
    start = None if w0 is None else np.asarray(w0, float) / s
    sol = solve(NnqpProblem(K, b / s, tol=tol, max_iter=max_iter), w0=start)
    w = sol.w * s
    return w, verify_kkt(K, b, w), sol.iterations, sol.converged


def _sweep_with_matrix(model, mu, target, K, probes, tol, w0=None, strict=True) -> BalayageResult:
    if len(target) == 0:
        raise ValueError("empty target")
    b = potential_on_cloud(model, mu, target)
    w, kkt, its, ok = _solve_scaled(K, b, tol, w0)
    if strict and not ok:
        raise ConvergenceError(f"balayage onto {target.label!r} did not converge (kkt {kkt.max():.3e})")
    swept = DiscreteMeasure(target, w)
    P = default_probes(target, mu.points[mu.support]) if probes is None else np.array(probes, float, ndmin=2)
    u_mu = eval_potential(model, mu, P) if mu.support.size else np.zeros(len(P))
    u_sw = eval_potential(model, swept, P)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(u_mu > 0, (u_sw - u_mu) / u_mu, np.where(u_sw > 0, np.inf, 0.0))
    excess = max(0.0, float(np.max(rel))) if len(P) else 0.0
    r = _accel.matvec(K, w)
    match = max(0.0, float(np.max(b - r)))
    # ||mu - mu^A||^2 = E(mu) - 2 b'w + w'Kw
    d2 = energy(model, mu).energy - 2.0 * ordered_dot(b, w) + ordered_dot(w, r)
    return BalayageResult(
        swept=swept,
        source_mass=mu.total_mass,
        swept_mass=swept.total_mass,
        potential_match=match,
        domination_excess=excess,
        kkt=kkt,
        converged=ok,
        iterations=its,
        distance=math.sqrt(max(d2, 0.0)),
        b=b,
        probes=P,
        source_potential=u_mu,
        swept_potential=u_sw,
    )


def sweep(model: KernelModel, mu: DiscreteMeasure, target: PointCloud, probes=None, *,
          tol: float = DEFAULT_TOL, w0=None) -> BalayageResult:
    """Inner balayage of ``mu`` onto the nodes of ``target``.

    Parameters
    ----------
    model : KernelModel
        Must use the spacing_scaled diagonal rule.
    mu : DiscreteMeasure
        Source measure.  Atoms sitting on target nodes use the target's
        diagonal value in ``b``.
    target : PointCloud
    probes : array (m, n), optional
        Off-target evaluation points; see :func:`default_probes`.
    tol : float
        KKT tolerance relative to ||b||_inf.

    Raises
    ------
    ValueError
        Empty target.
    ConvergenceError
        The NNQP did not meet ``tol``.
    """
    if len(target) == 0:
        raise ValueError("empty target")
    K = kernel_matrix(model, target)
    return _sweep_with_matrix(model, mu, target, K, probes, tol, w0)


def _embed(w, small: PointCloud, big: PointCloud) -> np.ndarray:
    out = np.zeros(len(big))
    idx = small.index_in(big)
    out[idx] = w
    return out


def sweep_increasing(model, mu, targets, probes=None, *, tol: float = DEFAULT_TOL) -> list:
    """Sweep onto an increasing family K_1 c K_2 c ... of node sets.

    Each level is warm-started from the previous swept measure.  The energy
    distance ||mu - mu^{K_j}|| is non-increasing by cone inclusion.
    """
    targets = list(targets)
    for a, b in zip(targets, targets[1:]):
        if not a.is_subset_of(b):
            raise ValueError(f"targets are not nested: {a.label!r} is not inside {b.label!r}")
    if probes is None and targets:
        probes = default_probes(targets[-1], mu.points[mu.support])
    out, prev = [], None
    for t in targets:
        w0 = None if prev is None else _embed(prev.swept.weights, prev.swept.cloud, t)
        prev = sweep(model, mu, t, probes, tol=tol, w0=w0)
        out.append(prev)
    return out


def sweep_decreasing(model, mu, targets, probes=None, *, tol: float = DEFAULT_TOL):
    """Sweep onto a decreasing family and compare the last level with a direct
    sweep onto the intersection.

    Returns
    -------
    results : list of BalayageResult
    gap : float
        Energy distance between the last-level result and the direct sweep
        onto the intersection of all sets.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("empty family")
    for a, b in zip(targets, targets[1:]):
        if not b.is_subset_of(a):
            raise ValueError(f"targets are not nested: {b.label!r} is not inside {a.label!r}")
    inter = targets[-1]
    if len(inter) == 0:
        raise ValueError("empty intersection")
    if probes is None:
        probes = default_probes(targets[0], mu.points[mu.support])
    out, prev = [], None
    for t in targets:
        w0 = None
        if prev is not None:
            idx = t.index_in(prev.swept.cloud)
            w0 = prev.swept.weights[idx]
        prev = sweep(model, mu, t, probes, tol=tol, w0=w0)
        out.append(prev)
    direct = sweep(model, mu, inter, probes, tol=tol)
    gap = energy_distance(model, out[-1].swept, direct.swept)
    return out, gap


def _rel_sup(a, b) -> float:
    scale = float(np.max(np.abs(b))) if len(b) else 0.0
    if scale == 0.0:
        return 0.0 if not len(a) or float(np.max(np.abs(a))) == 0.0 else math.inf
    return float(np.max(np.abs(a - b))) / scale


def check_restriction(model, mu, target_a: PointCloud, target_q: PointCloud, probes=None, *,
                      tol: float = DEFAULT_TOL) -> dict:
    """Compare mu^Q with (mu^A)^Q for Q contained in A.

    Returns a dict with the energy distance, that distance relative to
    ||mu^Q||, and the relative sup difference of the two potentials at the
    probes.
    """
    if not target_q.is_subset_of(target_a):
        raise ValueError("Q is not contained in A")
    if probes is None:
        probes = default_probes(target_a, mu.points[mu.support])
    direct = sweep(model, mu, target_q, probes, tol=tol)
    via_a = sweep(model, mu, target_a, probes, tol=tol)
    twice = sweep(model, via_a.swept, target_q, probes, tol=tol)
    d = energy_distance(model, direct.swept, twice.swept)
    norm = energy(model, direct.swept).norm
    return {
        "energy_distance": d,
        "relative_energy_distance": d / norm if norm > 0 else d,
        "relative_potential_gap": _rel_sup(twice.swept_potential, direct.swept_potential),
        "direct_mass": direct.swept_mass,
        "iterated_mass": twice.swept_mass,
    }


def check_symmetry(model, mu, lam, target: PointCloud, *, tol: float = DEFAULT_TOL) -> float:
    """|E(mu, lam^A) - E(mu^A, lam)| / max(|E(mu, lam^A)|, |E(mu^A, lam)|)."""
    K = kernel_matrix(model, target)
    mu_a = _sweep_with_matrix(model, mu, target, K, np.zeros((0, target.n)), tol).swept
    lam_a = _sweep_with_matrix(model, lam, target, K, np.zeros((0, target.n)), tol).swept
    e1 = mutual_energy(model, mu, lam_a)
    e2 = mutual_energy(model, mu_a, lam)
    scale = max(abs(e1), abs(e2))
    return abs(e1 - e2) / scale if scale > 0 else 0.0


def check_extremal(model, mu, target: PointCloud, candidate: DiscreteMeasure, probes=None, *,
                   tol: float = DEFAULT_TOL) -> dict:
    """Test U^{mu^A} <= U^xi at the probes for a candidate xi with U^xi >= U^mu on the target.

    Raises
    ------
    InfeasibleCandidate
        If U^xi < U^mu - tol * ||U^mu||_inf at some target node.
    """
    res = sweep(model, mu, target, probes, tol=tol)
    u_xi_nodes = potential_on_cloud(model, candidate, target)
    slack = tol * max(res.b_scale, 1.0)
    short = float(np.max(res.b - u_xi_nodes)) if len(res.b) else 0.0
    if short > slack:
        raise InfeasibleCandidate(f"infeasible candidate: U^xi falls {short:.3e} below U^mu on the target")
    u_xi = eval_potential(model, candidate, res.probes)
    viol = res.swept_potential - u_xi
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(u_xi > 0, viol / u_xi, np.where(viol > 0, np.inf, 0.0))
    return {
        "max_violation": max(0.0, float(np.max(viol))) if len(viol) else 0.0,
        "relative_violation": max(0.0, float(np.max(rel))) if len(rel) else 0.0,
        "swept_mass": res.swept_mass,
    }


def superpose_diracs(model, sources, target: PointCloud, probes=None, *,
                     tol: float = DEFAULT_TOL) -> dict:
    """Compare the sweep of sum c_i eps_{y_i} with sum c_i (eps_{y_i})^A.

    Parameters
    ----------
    sources : sequence of (point, weight)

    Returns
    -------
    dict
        ``relative_energy_gap`` (energy norm of the difference over the norm
        of the direct sweep), ``relative_potential_gap`` at the probes, and
        ``inside_hull``: sources lying within one node spacing of a target
        node, which fall outside the hypothesis of the integral
        representation (the comparison is still computed).
    """
    pts = np.array([np.asarray(p, float) for p, _ in sources], ndmin=2) + 0.0
    ws = np.array([float(c) for _, c in sources])
    mu = DiscreteMeasure.from_atoms(pts, ws, label="sources")
    K = kernel_matrix(model, target)
    P = default_probes(target, pts) if probes is None else np.array(probes, float, ndmin=2)
    direct = _sweep_with_matrix(model, mu, target, K, P, tol)
    slot = {p.tobytes(): i for i, p in enumerate(mu.points)}
    total = np.zeros(len(target))
    for p, c in zip(pts, ws):
        single = DiscreteMeasure.dirac(p, c, spacing=float(mu.cloud.spacing[slot[p.tobytes()]]))
        total += _sweep_with_matrix(model, single, target, K, P, tol).swept.weights
    summed = DiscreteMeasure(target, total)
    diff = direct.swept.weights - total
    d = math.sqrt(max(ordered_dot(diff, _accel.matvec(K, diff)), 0.0))
    norm = energy(model, direct.swept).norm
    u_sum = eval_potential(model, summed, P)
    dist, near = _nearest(target, pts)
    inside = [int(i) for i in np.flatnonzero(dist <= target.spacing[near])]
    return {
        "relative_energy_gap": d / norm if norm > 0 else d,
        "relative_potential_gap": _rel_sup(u_sum, direct.swept_potential),
        "direct_mass": direct.swept_mass,
        "summed_mass": summed.total_mass,
        "inside_hull": inside,
    }


def _nearest(cloud: PointCloud, pts: np.ndarray):
    from scipy.spatial import cKDTree

    dist, idx = cKDTree(cloud.points).query(pts, k=1)
    return np.atleast_1d(dist), np.atleast_1d(idx)


def mass_deficit(model, mu, target: PointCloud, *, tol: float = DEFAULT_TOL):
    """(source mass, swept mass, 1 - swept/source)."""
    m = mu.total_mass
    if not m > 0:
        raise ValueError("zero source mass")
    res = sweep(model, mu, target, np.zeros((0, target.n)), tol=tol)
    return m, res.swept_mass, 1.0 - res.swept_mass / m
